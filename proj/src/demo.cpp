#include "toolhub/demo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "toolhub/agentic.hpp"
#include "toolhub/embedding.hpp"
#include "toolhub/expert.hpp"
#include "toolhub/text.hpp"

#ifndef TOOLHUB_DATA_DIR
#define TOOLHUB_DATA_DIR "data"
#endif

namespace fs = std::filesystem;

namespace toolhub::demo {

namespace {

[[noreturn]] void fail(const std::string& message, json detail = nullptr) {
    throw ToolFailure(ErrorCode::ExecutionFailed, message, std::move(detail));
}

json load_fixture(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail("fixture file " + path.string() + " is missing");
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) fail("fixture file " + path.string() + " is not valid JSON");
    return doc;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

std::int64_t positive_limit(const json& args, std::int64_t fallback) {
    const std::int64_t limit = args.value("limit", fallback);
    if (limit < 1) fail("limit must be at least 1", json{{"limit", limit}});
    return limit;
}

using Fn = std::function<json(const json&, const ToolContext&)>;

HandlerFactory wrap(Fn fn) {
    return [fn = std::move(fn)](const ToolSpec&, const json&) { return std::make_shared<FunctionHandler>(fn); };
}

// Loads the fixture once per handler instance, at load time.
HandlerFactory with_fixture(fs::path path, std::function<json(const json& fixture, const json& args)> fn) {
    return [path = std::move(path), fn = std::move(fn)](const ToolSpec&, const json&) {
        auto fixture = std::make_shared<const json>(load_fixture(path));
        return std::make_shared<FunctionHandler>(
            [fixture, fn](const json& args, const ToolContext&) { return fn(*fixture, args); });
    };
}

// --- simple utilities --------------------------------------------------------------

std::size_t utf8_length(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

std::size_t word_count(const std::string& s) {
    std::size_t n = 0;
    bool in_word = false;
    for (unsigned char c : s) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

json string_stats(const json& args, const ToolContext&) {
    const auto& text = args.at("text").get_ref<const std::string&>();
    return json{{"length", utf8_length(text)}, {"words", word_count(text)}};
}

json range_check(const json& args, const ToolContext&) {
    const double value = args.at("value").get<double>();
    const double lo = args.value("min", 0.0);
    const double hi = args.value("max", 100.0);
    if (lo > hi) fail("min is greater than max", json{{"min", lo}, {"max", hi}});
    return json{{"value", value}, {"min", lo}, {"max", hi}, {"in_range", value >= lo && value <= hi}};
}

// --- expression evaluator ---------------------------------------------------------

class ExpressionParser {
public:
    explicit ExpressionParser(const std::string& text) : s_(text) {}

    double parse() {
        const double v = expr();
        skip();
        if (pos_ != s_.size()) error("unexpected '" + std::string(1, s_[pos_]) + "'");
        return v;
    }

private:
    [[noreturn]] void error(const std::string& what) const {
        fail("cannot evaluate expression: " + what, json{{"position", pos_}});
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    double expr() {
        double v = term();
        while (true) {
            if (eat('+')) v += term();
            else if (eat('-')) v -= term();
            else return v;
        }
    }

    double term() {
        double v = unary();
        while (true) {
            if (eat('*')) {
                v *= unary();
            } else if (eat('/')) {
                const double d = unary();
                if (d == 0.0) error("division by zero");
                v /= d;
            } else {
                return v;
            }
        }
    }

    double unary() {
        if (++depth_ > 200) error("nesting too deep");
        double v;
        if (eat('-')) v = -unary();
        else if (eat('+')) v = unary();
        else v = power();
        --depth_;
        return v;
    }

    double power() {
        const double base = primary();
        if (eat('^')) return std::pow(base, unary());
        return base;
    }

    double primary() {
        skip();
        if (eat('(')) {
            const double v = expr();
            if (!eat(')')) error("missing ')'");
            return v;
        }
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E') && pos_ > start) {
            std::size_t p = pos_ + 1;
            if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) ++p;
            if (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) {
                pos_ = p;
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            }
        }
        if (start == pos_) error(pos_ < s_.size() ? "unexpected '" + std::string(1, s_[pos_]) + "'" : "unexpected end");
        const std::string token = s_.substr(start, pos_ - start);
        if (std::count(token.begin(), token.end(), '.') > 1) error("malformed number '" + token + "'");
        char* end = nullptr;
        const double v = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size()) error("malformed number '" + token + "'");
        return v;
    }

    const std::string& s_;
    std::size_t pos_ = 0;
    int depth_ = 0;
};

// --- units ------------------------------------------------------------------------

struct Unit {
    std::string dimension;
    double factor;  // to the dimension's base unit
};

const std::map<std::string, Unit>& unit_table() {
    static const std::map<std::string, Unit> table = {
        {"m", {"length", 1.0}},          {"km", {"length", 1e3}},       {"cm", {"length", 1e-2}},
        {"mm", {"length", 1e-3}},        {"um", {"length", 1e-6}},      {"nm", {"length", 1e-9}},
        {"kg", {"mass", 1.0}},           {"g", {"mass", 1e-3}},         {"mg", {"mass", 1e-6}},
        {"ug", {"mass", 1e-9}},          {"L", {"volume", 1.0}},        {"mL", {"volume", 1e-3}},
        {"uL", {"volume", 1e-6}},        {"M", {"concentration", 1.0}}, {"mM", {"concentration", 1e-3}},
        {"uM", {"concentration", 1e-6}}, {"nM", {"concentration", 1e-9}}, {"s", {"time", 1.0}},
        {"min", {"time", 60.0}},         {"h", {"time", 3600.0}},       {"day", {"time", 86400.0}},
    };
    return table;
}

bool is_temperature(const std::string& u) { return u == "degC" || u == "degF" || u == "K"; }

double to_kelvin(double v, const std::string& u) {
    if (u == "degC") return v + 273.15;
    if (u == "degF") return (v - 32.0) * 5.0 / 9.0 + 273.15;
    return v;
}

double from_kelvin(double v, const std::string& u) {
    if (u == "degC") return v - 273.15;
    if (u == "degF") return (v - 273.15) * 9.0 / 5.0 + 32.0;
    return v;
}

// --- fixture lookups --------------------------------------------------------------

json corpus_search(const json& fixture, const json& args) {
    const auto& normalizer = default_normalizer();
    const auto query = normalizer.terms(args.at("query").get<std::string>());
    const std::int64_t limit = positive_limit(args, 5);
    struct Hit {
        std::int64_t score;
        const json* doc;
    };
    std::vector<Hit> hits;
    for (const auto& doc : fixture.at("documents")) {
        const auto title = normalizer.terms(doc.at("title").get<std::string>());
        const auto body = normalizer.terms(doc.at("abstract").get<std::string>());
        std::int64_t score = 0;
        for (const auto& q : query) {
            score += 2 * std::count(title.begin(), title.end(), q) + std::count(body.begin(), body.end(), q);
        }
        if (score > 0) hits.push_back({score, &doc});
    }
    std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc->at("id").get<std::string>() < b.doc->at("id").get<std::string>();
    });
    json results = json::array();
    for (const auto& h : hits) {
        if (static_cast<std::int64_t>(results.size()) >= limit) break;
        json r = *h.doc;
        r["score"] = h.score;
        results.push_back(std::move(r));
    }
    const std::size_t count = results.size();
    return json{{"results", std::move(results)}, {"count", count}};
}

const json& keyed(const json& table, const std::string& key, const std::string& what) {
    auto it = table.find(key);
    if (it == table.end()) fail("no " + what + " record for '" + key + "'", json{{"key", key}});
    return *it;
}

json target_profile(const json& fixture, const json& args) {
    return keyed(fixture, upper(args.at("target").get<std::string>()), "target profile");
}

json admet_lookup(const json& fixture, const json& args) {
    const std::string id = upper(args.at("compound_id").get<std::string>());
    json out = keyed(fixture, id, "ADMET");
    out["compound_id"] = id;
    return out;
}

json similarity_search(const json& fixture, const json& args) {
    const std::string id = upper(args.at("compound_id").get<std::string>());
    const std::int64_t limit = positive_limit(args, 3);
    const json& all = keyed(fixture, id, "similarity");
    json neighbors = json::array();
    for (const auto& n : all) {
        if (static_cast<std::int64_t>(neighbors.size()) >= limit) break;
        neighbors.push_back(n);
    }
    return json{{"query", id}, {"neighbors", std::move(neighbors)}};
}

json drug_lookup(const json& fixture, const json& args) {
    return keyed(fixture, lower(args.at("name").get<std::string>()), "drug");
}

json binding_affinity(const json& fixture, const json& args) {
    const std::string compound = upper(args.at("compound_id").get<std::string>());
    const std::string target = upper(args.at("target").get<std::string>());
    json out = keyed(fixture, compound + "|" + target, "binding");
    out["compound_id"] = compound;
    out["target"] = target;
    return out;
}

json disease_targets(const json& fixture, const json& args) {
    const std::string disease = lower(args.at("disease").get<std::string>());
    const std::int64_t limit = positive_limit(args, 5);
    json targets = json::array();
    for (const auto& t : keyed(fixture, disease, "disease")) {
        if (static_cast<std::int64_t>(targets.size()) >= limit) break;
        targets.push_back(t);
    }
    return json{{"disease", disease}, {"targets", std::move(targets)}};
}

json package_info(const json& fixture, const json& args) {
    return keyed(fixture, lower(args.at("package").get<std::string>()), "package");
}

json gc_content(const json& args, const ToolContext&) {
    const auto& seq = args.at("sequence").get_ref<const std::string&>();
    std::int64_t gc = 0, length = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(seq[i])));
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        if (c != 'A' && c != 'C' && c != 'G' && c != 'T' && c != 'U' && c != 'N') {
            fail("invalid nucleotide '" + std::string(1, seq[i]) + "'", json{{"position", i}});
        }
        ++length;
        if (c == 'G' || c == 'C') ++gc;
    }
    const double fraction = length == 0 ? 0.0 : static_cast<double>(gc) / static_cast<double>(length);
    return json{{"length", length}, {"gc_count", gc}, {"gc_fraction", fraction}};
}

HandlerFactory passage_search(fs::path path) {
    return [path = std::move(path)](const ToolSpec&, const json&) {
        const json fixture = load_fixture(path);
        auto embedder = std::make_shared<HashingEmbedder>(256);
        std::vector<std::string> ids;
        std::vector<std::vector<double>> vectors;
        auto texts = std::make_shared<std::map<std::string, std::string>>();
        for (const auto& p : fixture.at("passages")) {
            ids.push_back(p.at("id").get<std::string>());
            (*texts)[ids.back()] = p.at("text").get<std::string>();
            vectors.push_back(embedder->embed(texts->at(ids.back())));
        }
        auto store = std::make_shared<VectorStore>(VectorStore::from_vectors(ids, vectors));
        return std::make_shared<FunctionHandler>([embedder, store, texts](const json& args, const ToolContext&) {
            const std::int64_t limit = positive_limit(args, 3);
            const auto q = embedder->embed(args.at("query").get<std::string>());
            json results = json::array();
            if (std::any_of(q.begin(), q.end(), [](double x) { return x != 0.0; })) {
                for (const auto& m : store->search(q, static_cast<std::size_t>(limit), false)) {
                    if (m.score <= 0.0) continue;
                    results.push_back(json{{"id", m.tool_name}, {"text", texts->at(m.tool_name)}, {"score", m.score}});
                }
            }
            return json{{"results", std::move(results)}};
        });
    };
}

// --- expert feedback --------------------------------------------------------------

std::string require_expert_url(const json& settings) {
    std::string url = expert::expert_url_from(settings);
    if (url.empty()) {
        throw ToolFailure(ErrorCode::ExpertUnavailable,
                          "no expert server configured (set the expert_url setting or TOOLHUB_EXPERT_URL)");
    }
    return url;
}

HandlerFactory expert_factory(std::function<json(expert::ExpertClient&, const json&)> fn) {
    return [fn = std::move(fn)](const ToolSpec&, const json& settings) {
        const std::string url = require_expert_url(settings);
        return std::make_shared<FunctionHandler>([url, fn](const json& args, const ToolContext&) {
            expert::ExpertClient client(url);
            return fn(client, args);
        });
    };
}

json consult(expert::ExpertClient& client, const json& args) {
    const double timeout = args.value("timeout_seconds", expert::kDefaultConsultTimeout);
    if (!(timeout > 0)) fail("timeout_seconds must be positive", json{{"timeout_seconds", timeout}});
    const auto created = client.create(args.at("question").get<std::string>(), args.value("context", json::object()), timeout);
    const auto done = client.wait(created.id, timeout);
    if (done && done->status == expert::RequestStatus::Answered) return expert::response_payload(*done);
    const std::string status(to_string(done ? done->status : expert::RequestStatus::Pending));
    throw ToolFailure(ErrorCode::ExpertUnavailable,
                      "no expert answered request " + created.id + " in time; check it later with get_expert_response",
                      json{{"request_id", created.id}, {"status", status}});
}

json expert_status(expert::ExpertClient& client, const json& args) {
    const std::string id = args.at("request_id").get<std::string>();
    auto status = client.status(id);
    if (!status) throw ToolFailure(ErrorCode::ToolNotFound, "unknown expert request " + id, json{{"request_id", id}});
    return *status;
}

json expert_response(expert::ExpertClient& client, const json& args) {
    const std::string id = args.at("request_id").get<std::string>();
    auto r = client.get(id);
    if (!r) throw ToolFailure(ErrorCode::ToolNotFound, "unknown expert request " + id, json{{"request_id", id}});
    if (r->status != expert::RequestStatus::Answered) {
        throw ToolFailure(ErrorCode::ExpertUnavailable, "request " + id + " has no answer yet",
                          json{{"request_id", id}, {"status", std::string(to_string(r->status))}});
    }
    return expert::response_payload(*r);
}

}  // namespace

fs::path default_data_dir() {
    if (const char* env = std::getenv("TOOLHUB_DATA_DIR"); env && *env) return env;
    return TOOLHUB_DATA_DIR;
}

double evaluate_expression(const std::string& expression) {
    if (expression.size() > 4096) fail("expression longer than 4096 characters");
    const double v = ExpressionParser(expression).parse();
    if (!std::isfinite(v)) fail("expression result is not a finite number");
    return v;
}

double convert_units(double value, const std::string& from, const std::string& to) {
    if (is_temperature(from) || is_temperature(to)) {
        if (!is_temperature(from) || !is_temperature(to)) fail("cannot convert " + from + " to " + to);
        return from_kelvin(to_kelvin(value, from), to);
    }
    const auto& table = unit_table();
    auto f = table.find(from);
    auto t = table.find(to);
    if (f == table.end()) fail("unknown unit '" + from + "'");
    if (t == table.end()) fail("unknown unit '" + to + "'");
    if (f->second.dimension != t->second.dimension) {
        fail("cannot convert " + f->second.dimension + " to " + t->second.dimension, json{{"from", from}, {"to", to}});
    }
    return value * f->second.factor / t->second.factor;
}

void install_builtins(HandlerCatalog& catalog, const fs::path& fixtures_dir) {
    const fs::path dir = fixtures_dir;
    catalog.add_builtin("demo.echo", wrap([](const json& args, const ToolContext&) {
        return json{{"text", args.at("text")}};
    }));
    catalog.add_builtin("demo.string_stats", wrap(string_stats));
    catalog.add_builtin("demo.range_check", wrap(range_check));
    catalog.add_builtin("demo.arithmetic_eval", wrap([](const json& args, const ToolContext&) {
        return json{{"value", evaluate_expression(args.at("expression").get<std::string>())}};
    }));
    catalog.add_builtin("demo.unit_converter", wrap([](const json& args, const ToolContext&) {
        const std::string to = args.at("to").get<std::string>();
        return json{{"value", convert_units(args.at("value").get<double>(), args.at("from").get<std::string>(), to)},
                    {"unit", to}};
    }));
    catalog.add_builtin("demo.literature_search", with_fixture(dir / "literature.json", corpus_search));
    catalog.add_builtin("demo.preprint_search", with_fixture(dir / "preprints.json", corpus_search));
    catalog.add_builtin("demo.patent_search", with_fixture(dir / "patents.json", corpus_search));
    catalog.add_builtin("demo.target_profile", with_fixture(dir / "targets.json", target_profile));
    catalog.add_builtin("demo.admet_lookup", with_fixture(dir / "admet.json", admet_lookup));
    catalog.add_builtin("demo.similarity_search", with_fixture(dir / "similarity.json", similarity_search));
    catalog.add_builtin("demo.drug_lookup", with_fixture(dir / "drugs.json", drug_lookup));
    catalog.add_builtin("demo.binding_affinity", with_fixture(dir / "binding.json", binding_affinity));
    catalog.add_builtin("demo.disease_targets", with_fixture(dir / "disease_targets.json", disease_targets));
    catalog.add_builtin("demo.package_info", with_fixture(dir / "packages.json", package_info));
    catalog.add_builtin("demo.gc_content", wrap(gc_content));
    catalog.add_builtin("demo.passage_search", passage_search(dir / "passages.json"));
    catalog.add_builtin("demo.consult_expert", expert_factory(consult));
    catalog.add_builtin("demo.expert_status", expert_factory(expert_status));
    catalog.add_builtin("demo.expert_response", expert_factory(expert_response));
}

std::size_t install_demo_pack(Registry& registry, const fs::path& data_dir) {
    install_builtins(registry.catalog(), data_dir / "demo" / "fixtures");
    ManifestReport report = registry.load_manifest(data_dir / "demo" / "manifest.json");
    if (!report.errors.empty()) {
        json errors = json::array();
        for (const auto& e : report.errors) errors.push_back(json{{"file", e.file}, {"error", to_json(e.error)}});
        throw ToolFailure(ErrorCode::SpecInvalid, "demo pack failed to load: " + report.errors.front().error.message,
                          json{{"errors", errors}});
    }
    return report.loaded.size();
}

namespace {

std::string line_after(const std::string& prompt, const std::string& label) {
    const auto at = prompt.find(label);
    if (at == std::string::npos) return "";
    const auto start = at + label.size();
    const auto end = prompt.find('\n', start);
    return prompt.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

std::optional<std::string> summarize_rule(const std::string& prompt) {
    if (prompt.rfind("TASK: summarize\n", 0) != 0) return std::nullopt;
    std::size_t budget = 50;
    const std::string count = line_after(prompt, "at most ");
    if (!count.empty() && std::isdigit(static_cast<unsigned char>(count[0]))) {
        budget = std::max<std::size_t>(1, std::strtoul(count.c_str(), nullptr, 10));
    }
    const auto body_at = prompt.find("\n\n");
    std::istringstream body(body_at == std::string::npos ? "" : prompt.substr(body_at + 2));
    std::string word, out;
    std::size_t n = 0;
    while (n < budget && body >> word) {
        out += (out.empty() ? "" : " ") + word;
        ++n;
    }
    return out;
}

std::optional<std::string> hypotheses_rule(const std::string& prompt) {
    if (prompt.rfind("TASK: hypotheses\n", 0) != 0) return std::nullopt;
    const std::string domain = line_after(prompt, "Domain: ");
    const std::string observation = line_after(prompt, "Observation: ");
    return "1. " + observation + " is caused by a change in a known " + domain + " pathway.\n" +
           "2. " + observation + " depends on an unmeasured confounder.\n" +
           "3. " + observation + " does not replicate under controlled " + domain + " conditions.";
}

}  // namespace

void install_demo_agent_rules(MockBackend& backend) {
    backend.on_match(summarize_rule);
    backend.on_match(hypotheses_rule);
}

fs::path case_study_plan(const fs::path& data_dir) { return data_dir / "demo" / "workflows" / "case_study.json"; }

}  // namespace toolhub::demo
