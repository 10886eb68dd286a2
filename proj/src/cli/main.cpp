#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "toolhub/demo.hpp"
#include "toolhub/expert.hpp"
#include "toolhub/refinement.hpp"
#include "toolhub/runtime.hpp"

using namespace toolhub;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::ToolNotFound: return 4;
        case ErrorCode::SpecInvalid:
        case ErrorCode::MissingRequired:
        case ErrorCode::UnknownArgument:
        case ErrorCode::TypeMismatch: return 3;
        case ErrorCode::ExecutionFailed: return 5;
        case ErrorCode::RemoteUnavailable:
        case ErrorCode::ExpertUnavailable: return 6;
        case ErrorCode::Timeout: return 7;
    }
    return 5;
}

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

std::string read_all(std::istream& in) { return std::string(std::istreambuf_iterator<char>(in), {}); }

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ToolFailure(ErrorCode::SpecInvalid, "cannot read " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ToolFailure(ErrorCode::SpecInvalid, path + " is not valid JSON");
    return doc;
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

void wait_for_signal() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

struct Globals {
    std::vector<std::string> manifests;
    bool demo = false;
    std::string backend_url;
    std::string mock_rules;
    std::string expert_url;
    double timeout = 60.0;
};

// Adds the configured agent backend. The rule-based reference backend is
// always present as a fallback so the optimizer runs offline.
void configure_backends(Runtime& rt, const Globals& g) {
    if (!g.backend_url.empty()) rt.backends().add(std::make_shared<HttpBackend>("http", g.backend_url));
    auto mock = std::make_shared<MockBackend>(g.mock_rules.empty() ? "reference" : "mock");
    if (!g.mock_rules.empty()) {
        const json doc = read_json_file(g.mock_rules);
        auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        for (const auto& r : doc.value("rules", json::array())) {
            const std::string needle = r.value("contains", std::string());
            if (r.contains("sequence")) {
                std::vector<std::string> seq;
                for (const auto& s : r["sequence"]) seq.push_back(text(s));
                mock->on_sequence(needle, seq);
            } else {
                mock->on(needle, text(r.at("response")));
            }
        }
        if (doc.contains("fallback")) mock->fallback(text(doc["fallback"]));
    }
    refine::install_reference_rules(*mock);
    demo::install_demo_agent_rules(*mock);
    rt.backends().add(mock);
}

std::unique_ptr<Runtime> make_runtime(const Globals& g) {
    if (!g.expert_url.empty()) setenv("TOOLHUB_EXPERT_URL", g.expert_url.c_str(), 1);
    RuntimeOptions opts;
    opts.caller.timeout_seconds = g.timeout;
    auto rt = std::make_unique<Runtime>(opts);
    configure_backends(*rt, g);
    std::vector<std::string> manifests = g.manifests;
    if (manifests.empty()) {
        const std::string env = env_or("TOOLHUB_MANIFEST", "");
        std::stringstream ss(env);
        for (std::string part; std::getline(ss, part, ':');) {
            if (!part.empty()) manifests.push_back(part);
        }
    }
    if (g.demo || manifests.empty()) demo::install_demo_pack(rt->registry());
    for (const auto& m : manifests) {
        auto report = rt->registry().load_manifest(m);
        for (const auto& e : report.errors) std::cerr << "manifest " << m << ": " << e.file << ": " << e.error.message << "\n";
        if (!report.errors.empty()) throw ToolFailure(report.errors.front().error);
    }
    return rt;
}

void print_matches(const std::vector<ToolMatch>& matches, bool as_json) {
    if (as_json) {
        std::cout << to_json(matches).dump(2) << "\n";
        return;
    }
    if (matches.empty()) {
        std::cout << "no matching tools\n";
        return;
    }
    std::size_t rank = 0;
    for (const auto& m : matches) {
        std::ostringstream score;
        score.precision(4);
        score << std::fixed << m.score;
        std::cout << ++rank << "  " << score.str() << "  " << m.tool_name << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toolhub: tool registry, search, calling, composition and serving"};
    app.require_subcommand(1);
    Globals g;
    g.backend_url = env_or("TOOLHUB_BACKEND_URL", "");
    g.expert_url = env_or("TOOLHUB_EXPERT_URL", "");
    app.add_option("--manifest", g.manifests, "Manifest file or directory to load (repeatable; default $TOOLHUB_MANIFEST)");
    app.add_flag("--demo", g.demo, "Load the demo toolpack (implied when no manifest is given)");
    app.add_option("--backend-url", g.backend_url, "Text generation endpoint ($TOOLHUB_BACKEND_URL)");
    app.add_option("--mock-rules", g.mock_rules, "JSON file of scripted agent replies");
    app.add_option("--expert-url", g.expert_url, "Expert feedback server ($TOOLHUB_EXPERT_URL)");
    app.add_option("--timeout", g.timeout, "Per-call timeout in seconds");

    auto* serve = app.add_subcommand("serve", "Serve the registry over JSON-RPC");
    std::string transport = "stdio";
    std::string bind = env_or("TOOLHUB_BIND", "127.0.0.1:7300");
    serve->add_option("--transport", transport)->check(CLI::IsMember({"stdio", "tcp", "http"}));
    serve->add_option("--bind", bind, "host:port ($TOOLHUB_BIND)");

    auto* find = app.add_subcommand("find", "Search for tools");
    std::string query, strategy_name = "keyword";
    std::size_t limit = 5;
    bool as_json = false;
    find->add_option("query", query)->required();
    find->add_option("--strategy", strategy_name)->check(CLI::IsMember({"keyword", "embedding", "agentic", "auto"}));
    find->add_option("--limit", limit)->check(CLI::PositiveNumber);
    find->add_flag("--json", as_json);

    auto* call = app.add_subcommand("call", "Call a tool");
    std::string tool_name, args_text = "{}";
    bool from_stdin = false, timing = false;
    call->add_option("name", tool_name);
    call->add_option("--args", args_text, "JSON argument object");
    call->add_flag("--stdin", from_stdin, "Read {\"name\", \"arguments\"} from standard input");
    call->add_flag("--timing", timing, "Include duration_ms in the output");

    auto* reg = app.add_subcommand("register", "Load manifests and list what registered");
    std::string reg_manifest;
    reg->add_option("--manifest", reg_manifest)->required();
    reg->add_flag("--json", as_json);

    auto* reg_remote = app.add_subcommand("register-remote", "Import the tools of a remote server");
    std::string endpoint;
    reg_remote->add_option("endpoint", endpoint)->required();
    reg_remote->add_flag("--json", as_json);

    auto* compose = app.add_subcommand("compose", "Validate and register a composite plan");
    std::string plan_file, save_dir;
    compose->add_option("--plan", plan_file)->required();
    compose->add_option("--save", save_dir, "Write a manifest for the composite into this directory");

    auto* optimize = app.add_subcommand("optimize", "Refine a tool's descriptions");
    double threshold = 8.0, target = 9.0;
    int max_rounds = 3;
    std::string backend_id, out_path;
    optimize->add_option("name", tool_name)->required();
    optimize->add_option("--threshold", threshold);
    optimize->add_option("--max-rounds", max_rounds)->check(CLI::PositiveNumber);
    optimize->add_option("--backend", backend_id);
    optimize->add_option("--out", out_path, "Optimized spec file (default <name>.optimized.json)");
    optimize->add_flag("--json", as_json);

    auto* discover = app.add_subcommand("discover", "Generate a new tool package from a requirement");
    std::string requirement, out_dir = ".";
    discover->add_option("description", requirement)->required();
    discover->add_option("--target", target);
    discover->add_option("--max-rounds", max_rounds)->check(CLI::PositiveNumber);
    discover->add_option("--backend", backend_id);
    discover->add_option("--out", out_dir, "Directory receiving <name>/");
    discover->add_flag("--json", as_json);

    auto* expert_serve = app.add_subcommand("expert-serve", "Run the expert feedback server");
    std::string expert_bind = env_or("TOOLHUB_EXPERT_BIND", "127.0.0.1:7301"), journal;
    double late_window = expert::kDefaultLateAnswerWindow;
    expert_serve->add_option("--bind", expert_bind);
    expert_serve->add_option("--journal", journal);
    expert_serve->add_option("--late-window", late_window, "Seconds an answer is still accepted after the timeout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*expert_serve) {
            expert::QueueOptions qo;
            if (!journal.empty()) qo.journal = journal;
            qo.late_answer_window = late_window;
            expert::ExpertQueue queue(qo);
            expert::ExpertServer server(queue, expert_bind);
            std::cerr << "expert server listening on " << server.url() << "\n";
            std::cout << server.url() << std::endl;
            wait_for_signal();
            server.stop();
            queue.shutdown();
            return kExitOk;
        }
        if (*call && (tool_name.empty() == !from_stdin)) throw UsageError("call needs either NAME or --stdin");

        auto rt = make_runtime(g);

        if (*serve) {
            if (transport == "stdio") {
                wire::serve_framed(rt->rpc(), 0, 1);
                return kExitOk;
            }
            auto handle = transport == "tcp" ? wire::serve_tcp(rt->rpc(), bind) : wire::serve_http(rt->rpc(), bind);
            std::cerr << transport << " server listening on port " << handle->port() << "\n";
            std::cout << handle->port() << std::endl;
            wait_for_signal();
            handle->stop();
            return kExitOk;
        }
        if (*find) {
            auto strategy = search_strategy_from_string(strategy_name);
            print_matches(rt->find(query, *strategy, limit), as_json);
            return kExitOk;
        }
        if (*call) {
            ToolCall tc;
            if (from_stdin) {
                tc = parse_tool_call(read_all(std::cin));
            } else {
                json args = json::parse(args_text, nullptr, false);
                if (args.is_discarded()) throw UsageError("--args is not valid JSON");
                tc = ToolCall{tool_name, args};
            }
            ToolResult r = rt->call(tc);
            std::cout << to_json(r, timing).dump(2, ' ', false, json::error_handler_t::replace) << "\n";
            if (!r.ok()) {
                std::cerr << "error: " << r.error->message << "\n";
                return exit_code(r.error->code);
            }
            return kExitOk;
        }
        if (*reg) {
            auto report = rt->registry().load_manifest(reg_manifest);
            json errors = json::array();
            for (const auto& e : report.errors) {
                std::cerr << e.file << ": " << e.error.message << "\n";
                errors.push_back(json{{"file", e.file}, {"error", to_json(e.error)}});
            }
            if (as_json) {
                std::cout << json{{"registered", report.loaded}, {"errors", errors}}.dump(2) << "\n";
            } else {
                for (const auto& n : report.loaded) std::cout << n << "\n";
            }
            return report.errors.empty() ? kExitOk : exit_code(report.errors.front().error.code);
        }
        if (*reg_remote) {
            auto imp = rt->register_remote(endpoint);
            for (const auto& s : imp.skipped) std::cerr << "skipped " << s << ": a local tool has that name\n";
            for (const auto& e : imp.errors) std::cerr << "rejected remote spec: " << e.message << "\n";
            if (as_json) {
                json errors = json::array();
                for (const auto& e : imp.errors) errors.push_back(to_json(e));
                std::cout << json{{"registered", imp.registered}, {"skipped", imp.skipped}, {"errors", errors}}.dump(2) << "\n";
            } else {
                for (const auto& n : imp.registered) std::cout << n << "\n";
            }
            return kExitOk;
        }
        if (*compose) {
            const json doc = read_json_file(plan_file);
            const std::string name = rt->compose(doc);
            if (!save_dir.empty()) {
                Registry scratch;
                ToolEntry e = *rt->registry().find(name);
                scratch.register_tool(std::move(e));
                scratch.save_manifest(save_dir);
            }
            std::cout << name << "\n";
            return kExitOk;
        }
        if (*optimize) {
            refine::OptimizeOptions oo;
            oo.threshold = threshold;
            oo.max_rounds = max_rounds;
            oo.backend_id = backend_id;
            auto outcome = refine::optimize_tool(tool_name, rt->caller(), rt->backends(), oo);
            const std::string path = out_path.empty() ? tool_name + ".optimized.json" : out_path;
            std::ofstream(path) << to_json(outcome.optimized).dump(2) << "\n";
            if (as_json) {
                std::cout << refine::to_json(outcome).dump(2) << "\n";
            } else {
                for (const auto& r : outcome.reports) std::cout << "round " << r.round << "  overall " << r.overall << "\n";
                std::cout << "terminated by " << outcome.terminated_by << " after " << outcome.rounds_used
                          << " round(s); best round " << outcome.best_round << "\n"
                          << "optimized spec written to " << path << "\n";
            }
            return kExitOk;
        }
        if (*discover) {
            refine::DiscoverOptions dopt;
            dopt.target = target;
            dopt.max_rounds = max_rounds;
            dopt.backend_id = backend_id;
            auto pkg = refine::discover_tool(requirement, rt->caller(), rt->finder(), rt->backends(), dopt);
            const fs::path dir = refine::write_package(pkg, out_dir);
            if (as_json) {
                std::cout << json{{"package", dir.string()}, {"name", pkg.spec.name}, {"accepted", pkg.accepted},
                                  {"quality", refine::to_json(pkg.quality)}}
                                 .dump(2)
                          << "\n";
            } else {
                std::cout << dir.string() << "\n";
            }
            if (!pkg.accepted) {
                std::cerr << "quality " << pkg.quality.overall << " is below the target " << target << "\n";
                return exit_code(ErrorCode::ExecutionFailed);
            }
            return kExitOk;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ToolFailure& f) {
        std::cerr << "error: " << f.error().message << "\n";
        if (!f.error().detail.is_null()) std::cerr << f.error().detail.dump() << "\n";
        return exit_code(f.error().code);
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(ErrorCode::ExecutionFailed);
    }
    return kExitOk;
}
