// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>
#include <thread>

#include <httplib.h>

#include "gen.hpp"
#include "harness.hpp"
#include "keyword_oracle.hpp"
#include "toolhub/caller.hpp"
#include "toolhub/composer.hpp"
#include "toolhub/demo.hpp"
#include "toolhub/embedding.hpp"
#include "toolhub/expert.hpp"
#include "toolhub/keyword_index.hpp"
#include "toolhub/refinement.hpp"
#include "toolhub/runtime.hpp"
#include "toolhub/text.hpp"
#include "toolhub/wire.hpp"

using namespace toolhub;
using namespace std::chrono_literals;

namespace {

struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw CheckFailed(what);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ToolSpec spec(std::string name, std::string description, std::vector<std::string> param_descriptions = {}) {
    ToolSpec s;
    s.name = std::move(name);
    s.description = std::move(description);
    int i = 0;
    for (auto& d : param_descriptions) {
        ParameterSpec p;
        p.name = "arg" + std::to_string(i++);
        p.description = std::move(d);
        s.parameters.push_back(p);
    }
    return s;
}

// --- keyword ------------------------------------------------------------------

std::string keyword_oracle_agreement() {
    gen::Gen g(20240601);
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const auto corpus = g.corpus(10);
        const auto query = g.query(6);
        const auto got = KeywordIndex::build(corpus).search(query, corpus.size());
        const auto want = oracle::rank(corpus, query);
        require(got.size() == want.size(), "result count differs for query '" + query + "'");
        std::map<std::string, double> by_name;
        for (const auto& w : want) by_name[w.name] = w.score;
        for (std::size_t k = 0; k < got.size(); ++k) {
            require(by_name.count(got[k].tool_name) == 1, "unexpected tool " + got[k].tool_name);
            worst = std::max(worst, std::abs(got[k].score - by_name[got[k].tool_name]));
            worst = std::max(worst, std::abs(got[k].score - want[k].score));
        }
    }
    const double elapsed = seconds_since(t0);
    require(worst <= 1e-12, "max score difference " + std::to_string(worst));
    require(elapsed < 10.0, "took " + std::to_string(elapsed) + " s");
    char buf[128];
    std::snprintf(buf, sizeof buf, "200 instances, max |diff| %.3g, %.2f s", worst, elapsed);
    return buf;
}

std::string bonus_constants() {
    std::vector<ToolSpec> corpus{
        spec("protein_lookup", "Fetch a protein record by accession.", {"UniProt accession such as P04637."}),
        spec("literature_search", "Search biomedical literature for articles matching keywords.",
             {"Free-text query.", "Maximum number of articles."}),
        spec("admet_predict", "Predict absorption, toxicity and other ADMET properties of a molecule.",
             {"SMILES string of the molecule."}),
        spec("record_browser", "Protein records: lookup tables for protein families, protein domains."),
    };
    const auto index = KeywordIndex::build(corpus);
    KeywordScoring no_name;
    no_name.name_bonus = 1.0;
    const auto a = index.search("protein_lookup", 1).at(0).tool_name;
    const auto b = index.search("protein_lookup", 1, no_name).at(0).tool_name;
    require(a == "protein_lookup" && b != a, "name bonus: " + a + " vs " + b);

    const std::vector<ToolSpec> phrase{
        spec("alpha_tool", "Binding affinity prediction for ligands."),
        spec("beta_tool", "Prediction of binding, estimated affinity, affinity tables."),
        spec("gamma_tool", "Unrelated weather data."),
    };
    const auto pindex = KeywordIndex::build(phrase);
    KeywordScoring no_phrase;
    no_phrase.phrase_bonus = 1.0;
    const auto c = pindex.search("binding affinity prediction", 1).at(0).tool_name;
    const auto d = pindex.search("binding affinity prediction", 1, no_phrase).at(0).tool_name;
    require(c == "alpha_tool" && d != c, "phrase bonus: " + c + " vs " + d);
    return "name bonus " + a + " -> " + b + ", phrase bonus " + c + " -> " + d;
}

// --- text -----------------------------------------------------------------------

std::string normalization() {
    const auto words = load_stop_words(std::string(TOOLHUB_DATA_DIR) + "/stopwords.txt");
    require(words.size() == 50, "stop list has " + std::to_string(words.size()) + " words");
    const auto& n = default_normalizer();
    for (const auto& w : words) {
        require(n.terms(w).empty(), "stop word kept: " + w);
        require(n.terms(w + " protein") == std::vector<std::string>{"protein"}, "stop word leaks: " + w);
    }

    struct Row {
        const char* input;
        const char* output;
    };
    const std::vector<Row> table{
        {"relational", "relate"},   {"organization", "organize"}, {"usefulness", "use"},    {"effectiveness", "effective"},
        {"conditional", "condition"}, {"processing", "process"},  {"pressed", "press"},     {"classes", "class"},
        {"bindings", "bind"},       {"darkness", "dark"},         {"parsing", "parse"},     {"matches", "match"},
        {"parsed", "parse"},        {"studies", "study"},         {"studied", "study"},     {"searching", "search"},
        {"powerful", "power"},      {"jumped", "jump"},           {"class", "class"},       {"proteins", "protein"},
    };
    require(n.rules().size() == 20, "rule table has " + std::to_string(n.rules().size()) + " rules");
    std::set<std::size_t> fired;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto idx = n.matching_rule(table[i].input);
        require(idx && *idx == i, std::string("rule ") + std::to_string(i) + " not selected for " + table[i].input);
        require(n.stem(table[i].input) == table[i].output, std::string("bad stem for ") + table[i].input);
        fired.insert(*idx);
    }
    require(fired.size() == 20, "rules exercised: " + std::to_string(fired.size()));

    gen::Gen g(7);
    const std::string letters = "abcdefghijklmnopqrstuvwxyz";
    int checked = 0;
    for (int i = 0; i < 20000; ++i) {
        std::string w;
        for (int k = g.integer(1, 7); k > 0; --k) w += letters[static_cast<std::size_t>(g.integer(0, 25))];
        if (g.chance(0.7)) w += n.rules()[static_cast<std::size_t>(g.integer(0, 19))].suffix;
        const auto once = n.stem(w);
        require(n.stem(once) == once, "not idempotent on " + w);
        ++checked;
    }
    return "50 stop words removed, 20/20 rules fired, idempotent on " + std::to_string(checked) + " words";
}

// --- embedding ----------------------------------------------------------------

std::vector<double> random_vector(gen::Gen& g, std::size_t dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = g.real(-1.0, 1.0);
    return v;
}

std::string embedding() {
    gen::Gen g(1);
    HashingEmbedder e(256);
    std::vector<ToolSpec> specs;
    for (int i = 0; i < 50; ++i) specs.push_back(spec("tool_" + std::to_string(i), g.sentence(3, 12)));
    const auto store = VectorStore::build(specs, e);
    double worst = 0.0;
    for (const auto& s : specs) {
        const auto& skipped = store.skipped();
        if (std::find(skipped.begin(), skipped.end(), s.name) != skipped.end()) continue;
        for (const auto& m : store.search(e.embed(s.description), store.size())) {
            if (m.tool_name == s.name) worst = std::max(worst, std::abs(m.score - 1.0));
        }
    }
    for (int i = 0; i < 100; ++i) {
        const auto v = random_vector(g, 32);
        worst = std::max(worst, std::abs(VectorStore::from_vectors({"x"}, {v}).search(v, 1).at(0).score - 1.0));
    }
    require(worst <= 1e-9, "self similarity off by " + std::to_string(worst));

    gen::Gen h(100);
    for (int trial = 0; trial < 100; ++trial) {
        const auto dim = static_cast<std::size_t>(h.integer(2, 48));
        const int count = h.integer(1, 40);
        std::vector<std::string> names;
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < count; ++i) {
            names.push_back("v" + std::to_string(i));
            rows.push_back(random_vector(h, dim));
        }
        const auto vs = VectorStore::from_vectors(names, rows);
        const auto q = random_vector(h, dim);
        const auto base = vs.search(q, 1).at(0).tool_name;
        const double factor = std::exp(h.real(-12.0, 12.0));
        require(vs.scaled(factor).search(q, 1).at(0).tool_name == base, "argmax moved in store " + std::to_string(trial));
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "self similarity within %.3g, argmax stable on 100 scaled stores", worst);
    return buf;
}

// --- caller -------------------------------------------------------------------

struct Counters {
    std::atomic<int> loads{0};
    std::atomic<int> runs{0};
};

ToolSpec typed_spec(const std::string& name) {
    return parse_tool_spec(json{{"name", name},
                                {"description", "Counting tool."},
                                {"parameters",
                                 {{{"name", "text"}, {"type", "string"}, {"required", true}},
                                  {{"name", "n"}, {"type", "integer"}},
                                  {{"name", "xs"}, {"type", "array<number>"}},
                                  {{"name", "flag"}, {"type", "boolean"}}}}}
                               .dump());
}

HandlerFactory counting_factory(Counters& c, std::chrono::milliseconds delay = 0ms) {
    return [&c, delay](const ToolSpec&, const json&) {
        std::this_thread::sleep_for(delay);
        ++c.loads;
        return std::make_shared<FunctionHandler>([&c](const json& a, const ToolContext&) {
            ++c.runs;
            return json{{"echo", a.at("text")}};
        });
    };
}

struct ManualClock {
    std::shared_ptr<std::atomic<long long>> ms = std::make_shared<std::atomic<long long>>(0);
    SteadyTime epoch = std::chrono::steady_clock::now();
    ClockFn fn() const {
        return [ms = ms, epoch = epoch] { return epoch + std::chrono::milliseconds(ms->load()); };
    }
    void advance(double seconds) { *ms += static_cast<long long>(seconds * 1000); }
};

std::string caller_contracts() {
    {
        Registry reg;
        Counters c;
        reg.register_local(typed_spec("counted"), counting_factory(c));
        Caller caller(reg);
        const std::vector<json> invalid{
            json::object(),           {{"n", 1}},
            {{"text", 1}},            {{"text", "a"}, {"n", 1.5}},
            {{"text", "a"}, {"n", "1"}}, {{"text", "a"}, {"xs", {1, "b"}}},
            {{"text", "a"}, {"xs", 3}}, {{"text", "a"}, {"flag", "true"}},
            {{"text", "a"}, {"extra", true}}, {{"text", nullptr}},
        };
        for (const auto& args : invalid) require(!caller.call_tool({"counted", args}).ok(), "accepted " + args.dump());
        gen::Gen g(8);
        for (int i = 0; i < 500; ++i) {
            json args = g.value(2);
            if (args.is_object()) args.erase("text");
            caller.call_tool({"counted", args});
        }
        require(c.runs == 0 && c.loads == 0, "handler touched by invalid calls");
    }
    {
        Registry reg;
        Counters c;
        reg.register_local(typed_spec("slow_load"), counting_factory(c, 100ms));
        Caller caller(reg);
        std::barrier start(32);
        std::atomic<int> ok{0};
        std::vector<std::thread> threads;
        for (int i = 0; i < 32; ++i) {
            threads.emplace_back([&, i] {
                start.arrive_and_wait();
                if (caller.call_tool({"slow_load", {{"text", std::to_string(i)}}}).ok()) ++ok;
            });
        }
        for (auto& t : threads) t.join();
        require(ok == 32, "concurrent first calls failed");
        require(c.loads == 1, "loaded " + std::to_string(c.loads.load()) + " times");
    }
    {
        Registry reg;
        Counters c;
        reg.register_local(typed_spec("ttl_tool"), counting_factory(c));
        ManualClock clock;
        CallerOptions opt;
        opt.cache.ttl_seconds = 10;
        opt.clock = clock.fn();
        Caller caller(reg, opt);
        caller.call_tool({"ttl_tool", {{"text", "a"}}});
        clock.advance(9.9);
        require(caller.evict_expired().empty(), "evicted before the TTL");
        clock.advance(0.2);
        require(caller.evict_expired() == std::vector<std::string>{"ttl_tool"}, "not evicted after the TTL");
        caller.call_tool({"ttl_tool", {{"text", "b"}}});
        require(c.loads == 2, "no reload after TTL eviction");
    }
    {
        Registry reg;
        Counters a, b, c;
        reg.register_local(typed_spec("tool_a"), counting_factory(a));
        reg.register_local(typed_spec("tool_b"), counting_factory(b));
        reg.register_local(typed_spec("tool_c"), counting_factory(c));
        ManualClock clock;
        CallerOptions opt;
        opt.cache.max_loaded = 2;
        opt.cache.ttl_seconds = 1e9;
        opt.clock = clock.fn();
        Caller caller(reg, opt);
        const json args{{"text", "x"}};
        for (const char* name : {"tool_a", "tool_b", "tool_a", "tool_c"}) {
            caller.call_tool({name, args});
            clock.advance(1);
        }
        require(caller.is_loaded("tool_a") && !caller.is_loaded("tool_b") && caller.is_loaded("tool_c"),
                "LRU evicted the wrong handler");
    }
    int fuzzed = 0;
    {
        Registry reg;
        Counters c;
        reg.register_local(typed_spec("counted"), counting_factory(c));
        reg.register_local(spec("anything", "Echo."),
                           std::make_shared<FunctionHandler>([](const json& a, const ToolContext&) { return json{{"seen", a}}; }));
        Caller caller(reg);
        gen::Gen g(424242);
        const std::vector<std::string> names{"counted", "anything", "ghost", "", "COUNTED"};
        for (int i = 0; i < 10000; ++i) {
            std::string input;
            switch (g.integer(0, 3)) {
                case 0: input = g.noise(80); break;
                case 1: input = g.value(3).dump(); break;
                case 2: {
                    json call{{"name", g.pick(names)}, {"arguments", g.value(2)}};
                    if (g.chance(0.5) && call["arguments"].is_object()) call["arguments"]["text"] = g.value(1);
                    input = call.dump();
                    break;
                }
                default: {
                    input = json{{"name", g.pick(names)}, {"arguments", {{"text", g.sentence(0, 3)}}}}.dump();
                    if (g.chance(0.5)) input.resize(static_cast<std::size_t>(g.integer(0, static_cast<int>(input.size()))));
                }
            }
            std::string out;
            try {
                out = caller.run(input);
            } catch (...) {
                throw CheckFailed("run() threw on input " + input);
            }
            const json parsed = json::parse(out, nullptr, false);
            require(parsed.is_object() && parsed.contains("status"), "run() returned " + out);
            ++fuzzed;
        }
    }
    return "0 handler calls on invalid input, 1 load under 32 racers, TTL and LRU evict, " + std::to_string(fuzzed) +
           " fuzz inputs handled";
}

// --- wire -----------------------------------------------------------------------

template <typename F>
std::vector<std::string> outcomes(const std::vector<ToolCall>& calls, F&& setup) {
    harness::ExpertService experts;
    harness::AutoResponder responder(experts.queue, "Consistent with the data.", "expert-7");
    auto call_one = setup();
    std::vector<std::string> out;
    for (const auto& c : calls) out.push_back(to_json(call_one(c), false).dump());
    return out;
}

std::vector<std::string> remote_outcomes(const std::vector<ToolCall>& calls, const std::string& transport) {
    return outcomes(calls, [&] {
        struct State {
            std::unique_ptr<Runtime> server = harness::demo_runtime();
            std::unique_ptr<wire::ServerHandle> handle;
            Runtime client;
        };
        auto st = std::make_shared<State>();
        std::string endpoint;
        if (transport == "stdio") {
            endpoint = std::string("stdio:") + TOOLHUB_CLI_PATH + " --demo serve --transport stdio";
        } else if (transport == "tcp") {
            st->handle = wire::serve_tcp(st->server->rpc(), "127.0.0.1:0");
            endpoint = "127.0.0.1:" + std::to_string(st->handle->port());
        } else {
            st->handle = wire::serve_http(st->server->rpc(), "127.0.0.1:0");
            endpoint = "http://127.0.0.1:" + std::to_string(st->handle->port());
        }
        const auto import = st->client.register_remote(endpoint);
        require(import.registered.size() == st->server->registry().size(), transport + ": incomplete import");
        return [st](const ToolCall& c) { return st->client.call(c); };
    });
}

std::string transparency() {
    const auto calls = harness::demo_calls(77, 3);
    const auto local = outcomes(calls, [] {
        auto rt = std::shared_ptr<Runtime>(harness::demo_runtime());
        return [rt](const ToolCall& c) { return rt->call(c); };
    });
    std::set<std::string> tools;
    for (const auto& c : calls) tools.insert(c.name);
    for (const std::string transport : {"stdio", "tcp", "http"}) {
        const auto got = remote_outcomes(calls, transport);
        require(got.size() == local.size(), transport + ": result count");
        for (std::size_t i = 0; i < calls.size(); ++i) {
            require(got[i] == local[i], transport + ": " + calls[i].name + " " + calls[i].arguments.dump() + " differs");
        }
    }

    // Replay the recorded transcript against a fresh server.
    const std::string recorded = harness::read_file(harness::golden_dir() / "wire_transcript.txt");
    auto rt = harness::demo_runtime();
    std::istringstream in(recorded);
    std::string line, request;
    int exchanges = 0;
    while (std::getline(in, line)) {
        if (line.rfind("> ", 0) == 0) {
            request = line.substr(2);
        } else if (line.rfind("< ", 0) == 0) {
            require(rt->rpc().handle(request) == line.substr(2), "transcript diverges at " + request);
            ++exchanges;
        }
    }
    require(exchanges > 0, "empty transcript");
    return std::to_string(calls.size()) + " calls over " + std::to_string(tools.size()) +
           " tools byte-equal on stdio/tcp/http, " + std::to_string(exchanges) + " transcript exchanges replayed";
}

// --- refinement -------------------------------------------------------------------

const std::vector<std::string> kOptimizerDims{"clarity",     "accuracy",          "completeness",
                                              "conciseness", "user-friendliness", "redundancy-avoidance"};

std::string scores_reply(const std::vector<double>& s) {
    json scores = json::object();
    for (std::size_t i = 0; i < kOptimizerDims.size(); ++i) scores[kOptimizerDims[i]] = s[i];
    return json{{"scores", scores}, {"rationale", json::object()}}.dump();
}

std::string uniform_reply(double v) { return scores_reply(std::vector<double>(6, v)); }

refine::OptimizationOutcome optimize_with(std::vector<std::string> evaluations, refine::OptimizeOptions options = {},
                                          std::shared_ptr<MockBackend> extra = nullptr) {
    Runtime rt;
    rt.registry().register_local(
        parse_tool_spec(json{{"name", "gene_lookup"},
                             {"description", "Looks up a gene."},
                             {"parameters",
                              {{{"name", "symbol"}, {"type", "string"}, {"required", true}, {"description", "Gene symbol such as BRCA1."}},
                               {{"name", "species"}, {"type", "string"}, {"required", false}, {"description", ""}}}}}
                            .dump()),
        std::make_shared<FunctionHandler>([](const json& a, const ToolContext&) {
            return json{{"symbol", a.at("symbol")}, {"chromosome", "17"}, {"length_bp", 81189}};
        }));
    auto backend = std::make_shared<MockBackend>("scripted");
    if (!evaluations.empty()) backend->on_sequence(refine::kTaskEvaluate, std::move(evaluations));
    refine::install_reference_rules(*backend);
    rt.backends().add(backend);
    if (extra) rt.backends().add(extra);
    return refine::optimize_tool("gene_lookup", rt.caller(), rt.backends(), options);
}

std::string optimizer() {
    const auto nine = optimize_with({scores_reply({10, 10, 10, 10, 10, 4})});
    require(std::abs(nine.reports.at(0).overall - 9.0) < 1e-12, "overall " + std::to_string(nine.reports[0].overall));
    require(nine.rounds_used == 1 && nine.terminated_by == "threshold", "9.0 did not stop the loop");

    const auto stop = optimize_with({uniform_reply(5), uniform_reply(8), uniform_reply(9)});
    require(stop.rounds_used == 2 && stop.terminated_by == "threshold", "did not stop at 8.0");
    const auto under = optimize_with({scores_reply({8, 8, 8, 8, 8, 7.94}), uniform_reply(8)});
    require(under.rounds_used == 2, "stopped below 8.0");

    const auto cap = optimize_with({uniform_reply(5), uniform_reply(6), uniform_reply(7), uniform_reply(10)});
    require(cap.rounds_used == 3 && cap.terminated_by == "max-rounds", "ran past 3 rounds");

    auto copier = std::make_shared<MockBackend>("copier");
    copier->on(refine::kTaskArguments,
               R"({"symbol":"Looks up a gene. Gene symbol such as BRCA1.","species":"LOOKS UP A GENE!"})");
    copier->on(refine::kTaskAnalyze, "Looks up a gene. Returns symbol, chromosome and length_bp.");
    copier->on(refine::kTaskEvaluate, uniform_reply(5));
    copier->on(refine::kTaskTestCases, "[]");
    refine::OptimizeOptions o;
    o.backend_id = "copier";
    const auto redundant = optimize_with({}, o, copier);
    require(refine::duplicated_sentences(redundant.optimized) == 0, "optimized spec repeats sentences");

    gen::Gen g(21);
    for (int i = 0; i < 300; ++i) {
        std::vector<std::string> pool;
        for (int k = g.integer(2, 6); k > 0; --k) pool.push_back(g.sentence(1, 5) + ".");
        ToolSpec s;
        s.name = "t";
        s.description = g.pick(pool);
        for (int k = g.integer(0, 4); k > 0; --k) {
            ParameterSpec p;
            p.name = "p" + std::to_string(k);
            for (int m = g.integer(0, 3); m > 0; --m) p.description += (p.description.empty() ? "" : " ") + g.pick(pool);
            s.parameters.push_back(p);
        }
        require(refine::duplicated_sentences(refine::strip_redundancy(s)) == 0, "strip_redundancy left a repeat");
    }
    return "{10,10,10,10,10,4} -> 9.0, stops at >= 8.0 (2 rounds), caps at 3 rounds, no repeated sentences";
}

const json kGoodSpec = {
    {"name", "text_profile"},
    {"description", "Counts the words of a text and returns it in upper case."},
    {"parameters", {{{"name", "text"}, {"type", "string"}, {"required", true}, {"description", "Input text to profile."}}}},
    {"return_schema", {{"words", "integer"}, {"upper", "string"}}},
    {"tags", {"utility"}}};

const json kGoodPlan = {
    {"steps", {{{"call", "string_stats"}, {"arguments", {{"text", "$text"}}}, {"as", "s"}}}},
    {"output", {{"words", "$s.words"}, {"upper", {{"$op", "upper"}, {"args", {"$text"}}}}}}};

std::string discover() {
    auto rt = harness::demo_runtime();
    auto backend = std::make_shared<MockBackend>("discoverer");
    backend->on_sequence(refine::kTaskSpecification, {kGoodSpec.dump()});
    backend->on_sequence(refine::kTaskImplementation, {kGoodPlan.dump()});
    refine::install_reference_rules(*backend);
    rt->backends().add(backend);
    refine::DiscoverOptions options;
    options.backend_id = "discoverer";
    const auto pkg = refine::discover_tool("Count the words in a text and shout it back", rt->caller(), rt->finder(),
                                           rt->backends(), options);

    const auto& s = pkg.quality.scores;
    require(s.size() == 5, "report has " + std::to_string(s.size()) + " dimensions");
    const double weighted = 0.3 * s.at("functionality") + 0.25 * s.at("reliability") + 0.15 * s.at("maintainability") +
                            0.1 * s.at("performance") + 0.2 * s.at("test-coverage");
    require(std::abs(pkg.quality.overall - weighted) < 1e-12, "overall is not the weighted mean");
    require(pkg.accepted && pkg.quality.overall >= 9.0, "not accepted, overall " + std::to_string(pkg.quality.overall));

    const auto dir = refine::write_package(pkg, harness::temp_dir("acceptance-package"));
    auto fresh = harness::demo_runtime();
    const auto report = fresh->registry().load_manifest(dir / "manifest.json");
    require(report.errors.empty() && report.loaded == std::vector<std::string>{"text_profile"}, "manifest did not load");
    const auto r = fresh->call({"text_profile", {{"text", "tools for science"}}});
    require(r.ok() && r.payload == json{{"words", 3}, {"upper", "TOOLS FOR SCIENCE"}}, "package call returned " +
                                                                                         to_json(r, false).dump());
    char buf[160];
    std::snprintf(buf, sizeof buf, "weighted overall %.2f over 5 dimensions, accepted, package reloads and runs", pkg.quality.overall);
    return buf;
}

// --- composer ---------------------------------------------------------------------

ToolSpec int_tool(const std::string& name) {
    return parse_tool_spec(json{{"name", name},
                                {"description", "Integer function."},
                                {"parameters", {{{"name", "x"}, {"type", "integer"}, {"required", true}}}},
                                {"return_schema", {{"x", "integer"}}}}
                               .dump());
}

json spec_json(const std::string& name, const json& params = json::array({{{"name", "x"}, {"type", "integer"}, {"required", true}}})) {
    return json{{"name", name}, {"description", "Composite " + name + "."}, {"parameters", params}};
}

std::string composer() {
    int compared = 0;
    {
        auto rt = harness::demo_runtime();
        gen::Gen g(31);
        for (const auto& s : rt->registry().list_tools()) {
            if (s.name.find("expert") != std::string::npos) continue;
            json args_tmpl = json::object();
            for (const auto& p : s.parameters) args_tmpl[p.name] = "$" + p.name;
            json plan{{"spec", spec_json("one_" + s.name, to_json(s)["parameters"])},
                      {"steps", {{{"call", s.name}, {"arguments", args_tmpl}}}}};
            plan["spec"]["return_schema"] = s.return_schema;
            const std::string name = rt->compose(plan);
            for (int i = 0; i < 5; ++i) {
                json args = json::object();
                for (const auto& p : s.parameters) {
                    if (!p.required && g.chance(0.5)) continue;
                    switch (p.type.kind()) {
                        case ValueType::Kind::String: args[p.name] = g.word(); break;
                        case ValueType::Kind::Integer: args[p.name] = g.integer(1, 5); break;
                        case ValueType::Kind::Number: args[p.name] = g.real(0, 10); break;
                        case ValueType::Kind::Boolean: args[p.name] = g.chance(0.5); break;
                        case ValueType::Kind::Object: args[p.name] = json::object(); break;
                        case ValueType::Kind::Array: args[p.name] = json::array(); break;
                    }
                }
                require(to_json(rt->call({s.name, args}), false) == to_json(rt->call({name, args}), false),
                        "one-step composite differs for " + s.name);
                ++compared;
            }
        }
    }

    Runtime rt;
    std::atomic<int> ran{0};
    rt.registry().register_local(int_tool("counted"), std::make_shared<FunctionHandler>([&](const json& a, const ToolContext&) {
        ++ran;
        return json{{"x", a.at("x")}};
    }));
    rt.registry().register_local(int_tool("broken"), std::make_shared<FunctionHandler>([&](const json&, const ToolContext&) -> json {
        ++ran;
        throw std::runtime_error("branch exploded");
    }));
    json plan{{"spec", spec_json("fan_out")},
              {"steps",
               {{{"parallel",
                  {{{"call", "counted"}, {"arguments", {{"x", "$x"}}}},
                   {{"call", "broken"}, {"arguments", {{"x", "$x"}}}},
                   {{"call", "counted"}, {"arguments", {{"x", 7}}}}}},
                 {"as", "fan"}}}},
              {"output", {{"results", "$fan"}}}};
    rt.compose(plan);
    const auto r = rt.call({"fan_out", {{"x", 5}}});
    require(r.ok(), "parallel composite failed as a whole");
    const auto& res = r.payload.at("results");
    require(res.size() == 3 && res[0].at("status") == "ok" && res[1].at("status") == "error" && res[2].at("status") == "ok" &&
                ran == 3,
            "parallel did not collect every branch: " + res.dump());

    auto agent = std::make_shared<MockBackend>("agent");
    agent->on("TASK: agent_loop", R"({"name":"counted","arguments":{"x":1}})");
    rt.backends().add(agent);
    for (int bound : {1, 3, 7}) {
        json step = json::object();
        step["loop"] = json{{"max_iterations", bound}, {"agent", {{"goal", "count from ${x}"}}}};
        json doc = json::object();
        doc["spec"] = spec_json("forever_" + std::to_string(bound));
        doc["steps"] = json::array({step});
        rt.compose(doc);
        const std::size_t before = agent->calls();
        const auto lr = rt.call({"forever_" + std::to_string(bound), {{"x", 0}}});
        require(lr.ok() && lr.payload.at("iterations") == bound && lr.payload.at("stopped") == false &&
                    agent->calls() - before == static_cast<std::size_t>(bound),
                "loop bound " + std::to_string(bound) + " not respected");
    }
    return std::to_string(compared) + " one-step composites equal direct calls, parallel keeps 2 ok + 1 error, loop bounds 1/3/7 hold";
}

// --- expert -----------------------------------------------------------------------

std::string expert_checks() {
    double round_trip = 0.0;
    {
        harness::ExpertService svc;
        harness::AutoResponder responder(svc.queue, "Proceed.", "dr-lee");
        auto rt = harness::demo_runtime();
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = rt->call({"consult_human_expert", {{"question", "Is PCSK9 a sound target?"}, {"timeout_seconds", 30}}});
        round_trip = seconds_since(t0);
        require(r.ok() && r.payload.at("text") == "Proceed.", "consult failed");
        require(round_trip < 2.0, "round trip " + std::to_string(round_trip) + " s");
    }
    {
        harness::ExpertService svc;
        constexpr int kRacers = 16;
        for (int round = 0; round < 10; ++round) {
            const auto req = svc.queue.create("race " + std::to_string(round));
            std::atomic<int> ok{0}, conflict{0};
            std::barrier sync(kRacers);
            std::vector<std::thread> threads;
            for (int i = 0; i < kRacers; ++i) {
                threads.emplace_back([&, i] {
                    httplib::Client c("127.0.0.1", svc.server.port());
                    c.set_read_timeout(10, 0);
                    sync.arrive_and_wait();
                    const json body{{"verdict", "free-text"}, {"text", "answer " + std::to_string(i)}, {"expert_id", "e"}};
                    auto res = c.Post("/api/requests/" + req.id + "/response", body.dump(), "application/json");
                    const int code = res ? res->status : -1;
                    if (code == 200) ++ok;
                    if (code == 409) ++conflict;
                });
            }
            for (auto& t : threads) t.join();
            require(ok == 1 && conflict == kRacers - 1,
                    "race " + std::to_string(round) + ": " + std::to_string(ok.load()) + " winners");
        }
    }
    {
        const auto dir = harness::temp_dir("acceptance-journal");
        const auto path = dir / "expert.jsonl";
        double now = 1000.0;
        auto clock = [&now] { return now; };
        std::vector<json> before;
        {
            expert::ExpertQueue q(expert::QueueOptions{path, 10.0, clock});
            const auto a = q.create("a", json{{"x", 1}}, 5);
            const auto b = q.create("b", json::object(), 100);
            const auto c = q.create("c", json::object(), 100);
            q.create("d", json::object(), 100);
            q.claim(b.id, "ann");
            q.respond(c.id, expert::Verdict::FreeText, "see notes", "bob");
            now += 20;
            q.expire_due();
            for (const auto& r : q.list()) before.push_back(expert::to_json(r));
        }
        expert::ExpertQueue again(expert::QueueOptions{path, 10.0, clock});
        std::vector<json> after;
        for (const auto& r : again.list()) after.push_back(expert::to_json(r));
        require(after == before, "journal replay lost state");
        require(again.create("e").id == "req-000005", "id counter not restored");
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "round trip %.3f s, 10 x 16-way races with one winner, journal replay restores 4 requests",
                  round_trip);
    return buf;
}

// --- case study -------------------------------------------------------------------

std::string case_study() {
    auto run_once = [] {
        harness::ExpertService svc;
        harness::AutoResponder responder(svc.queue, "Advance CMPD-0003; CMPD-0002 needs a hERG follow-up.", "medchem-reviewer");
        auto rt = harness::demo_runtime();
        const std::string name = rt->compose(json::parse(harness::read_file(demo::case_study_plan())));
        const auto r = rt->call({name, {{"target", "PCSK9"}, {"timeout_seconds", 30}}});
        require(r.ok(), "workflow failed: " + to_json(r, false).dump());
        return r.payload.dump(2) + "\n";
    };
    const std::string first = run_once();
    const std::string golden = harness::read_file(harness::golden_dir() / "case_study_payload.json");
    require(first == golden, "payload differs from the golden file");
    require(run_once() == first, "second run differs");
    return "profile -> similarity -> property lookup -> expert consult matches golden payload on two runs";
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<std::string()>>> criteria{
        {"keyword-oracle", keyword_oracle_agreement},
        {"bonus-constants", bonus_constants},
        {"normalization", normalization},
        {"embedding", embedding},
        {"caller-contracts", caller_contracts},
        {"transport-transparency", transparency},
        {"optimizer", optimizer},
        {"discover", discover},
        {"composer", composer},
        {"expert", expert_checks},
        {"case-study", case_study},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        std::string line;
        try {
            line = "PASS " + name + ": " + check();
        } catch (const std::exception& e) {
            line = "FAIL " + name + ": " + e.what();
            ++failed;
        } catch (...) {
            line = "FAIL " + name + ": unknown exception";
            ++failed;
        }
        std::cout << line << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
