#include "toolhub/refinement.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <regex>
#include <set>

namespace fs = std::filesystem;

namespace toolhub::refine {

namespace {

[[noreturn]] void exec_failed(const std::string& message, json detail = nullptr) {
    throw ToolFailure(ErrorCode::ExecutionFailed, message, std::move(detail));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string build_prompt(const char* task, const std::string& instructions, const json& input) {
    return std::string(task) + "\n" + instructions + "\n" + kInputBegin + "\n" +
           input.dump(-1, ' ', false, json::error_handler_t::replace) + "\n" + kInputEnd + "\n";
}

// Asks the backend and hands the extracted JSON to `accept`, which throws to
// reject it. One retry with the complaint appended.
template <typename Accept>
auto ask(BackendRegistry& backends, const std::string& backend_id, const std::string& prompt, const std::string& stage,
         Accept accept) -> decltype(accept(json())) {
    std::string p = prompt;
    std::string complaint;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string reply;
        try {
            reply = backends.generate(backend_id, p);
        } catch (const ToolFailure& f) {
            exec_failed(stage + " stage failed: " + f.error().message, json{{"stage", stage}});
        }
        json doc = extract_json(reply);
        try {
            if (doc.is_discarded()) throw std::runtime_error("reply contains no JSON value");
            return accept(doc);
        } catch (const ToolFailure& f) {
            complaint = f.error().message;
        } catch (const std::exception& e) {
            complaint = e.what();
        }
        p = prompt + "\nYour previous reply could not be used: " + complaint + "\n";
    }
    exec_failed(stage + " stage failed twice: " + complaint, json{{"stage", stage}});
}

json case_result_json(const TestCase& c, const ToolResult* r) {
    json j{{"arguments", c.call.arguments}, {"purpose", c.purpose}, {"expect_ok", c.expect_ok}};
    if (r) {
        j.update(to_json(*r, true));
    }
    return j;
}

json results_json(const TestBatch& batch) {
    json out = json::array();
    for (std::size_t i = 0; i < batch.cases.size(); ++i) {
        out.push_back(case_result_json(batch.cases[i], i < batch.results.size() ? &batch.results[i] : nullptr));
    }
    return out;
}

std::set<std::string> observed_fields(const json& results) {
    std::set<std::string> fields;
    for (const auto& r : results) {
        if (r.value("status", std::string()) != "ok" || !r.contains("payload") || !r["payload"].is_object()) continue;
        for (const auto& [k, v] : r["payload"].items()) fields.insert(k);
    }
    return fields;
}

bool mentions(const std::string& text, const std::string& field) {
    return lower(text).find(lower(field)) != std::string::npos;
}

double clamp10(double v) { return std::clamp(v, 0.0, 10.0); }

std::string type_probe_key(const ParameterSpec& p) { return p.type.name(); }

json wrong_value(const ValueType& t) {
    switch (t.kind()) {
        case ValueType::Kind::String: return 123;
        case ValueType::Kind::Integer: return "not a number";
        case ValueType::Kind::Number: return "not a number";
        case ValueType::Kind::Boolean: return "yes";
        case ValueType::Kind::Object: return json::array();
        case ValueType::Kind::Array: return json::object();
    }
    return nullptr;
}

json edge_value(const ValueType& t) {
    switch (t.kind()) {
        case ValueType::Kind::String: return "";
        case ValueType::Kind::Integer: return 0;
        case ValueType::Kind::Number: return 0.0;
        case ValueType::Kind::Boolean: return false;
        case ValueType::Kind::Object: return json::object();
        case ValueType::Kind::Array: return json::array();
    }
    return nullptr;
}

json sample_for_type(const ValueType& t) {
    switch (t.kind()) {
        case ValueType::Kind::String: return "example";
        case ValueType::Kind::Integer: return 1;
        case ValueType::Kind::Number: return 1.5;
        case ValueType::Kind::Boolean: return true;
        case ValueType::Kind::Object: return json::object();
        case ValueType::Kind::Array: return json::array({sample_for_type(t.element())});
    }
    return nullptr;
}

bool is_validation_code(ErrorCode c) {
    return c == ErrorCode::MissingRequired || c == ErrorCode::UnknownArgument || c == ErrorCode::TypeMismatch;
}

}  // namespace

json prompt_input(std::string_view prompt) {
    const auto b = prompt.find(kInputBegin);
    if (b == std::string_view::npos) return json(json::value_t::discarded);
    const auto start = b + std::string_view(kInputBegin).size();
    const auto e = prompt.find(kInputEnd, start);
    if (e == std::string_view::npos) return json(json::value_t::discarded);
    return json::parse(prompt.substr(start, e - start), nullptr, false);
}

// --- quality reports ---------------------------------------------------------------

std::string_view to_string(DimensionSet set) { return set == DimensionSet::Optimizer ? "optimizer" : "discover"; }

const std::vector<std::string>& dimensions(DimensionSet set) {
    static const std::vector<std::string> optimizer{"clarity",     "accuracy",          "completeness",
                                                    "conciseness", "user-friendliness", "redundancy-avoidance"};
    static const std::vector<std::string> discover{"functionality", "reliability", "maintainability", "performance",
                                                   "test-coverage"};
    return set == DimensionSet::Optimizer ? optimizer : discover;
}

const std::map<std::string, double>& discover_weights() {
    static const std::map<std::string, double> w{{"functionality", 0.3},
                                                 {"reliability", 0.25},
                                                 {"maintainability", 0.15},
                                                 {"performance", 0.1},
                                                 {"test-coverage", 0.2}};
    return w;
}

double overall_score(const std::map<std::string, double>& scores, DimensionSet set) {
    const auto& dims = dimensions(set);
    if (scores.size() != dims.size()) throw std::invalid_argument("report must score exactly the " + std::string(to_string(set)) + " dimensions");
    double sum = 0.0;
    for (const auto& d : dims) {
        auto it = scores.find(d);
        if (it == scores.end()) throw std::invalid_argument("missing dimension " + d);
        sum += set == DimensionSet::Optimizer ? it->second : it->second * discover_weights().at(d);
    }
    return set == DimensionSet::Optimizer ? sum / static_cast<double>(dims.size()) : sum;
}

json to_json(const QualityReport& r) {
    return json{{"dimensions", std::string(to_string(r.set))},
                {"scores", r.scores},
                {"rationale", r.rationale},
                {"overall", r.overall},
                {"round", r.round}};
}

// --- text helpers ------------------------------------------------------------------

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        cur += text[i];
        const bool end = text[i] == '.' || text[i] == '!' || text[i] == '?';
        if (end && (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
            out.push_back(cur);
            cur.clear();
        }
    }
    out.push_back(cur);
    std::vector<std::string> trimmed;
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) continue;
        const auto e = s.find_last_not_of(" \t\r\n");
        trimmed.push_back(s.substr(b, e - b + 1));
    }
    return trimmed;
}

std::string normalize_sentence(std::string_view sentence) {
    std::string out;
    bool space = false;
    for (unsigned char c : sentence) {
        if (std::isspace(c)) {
            space = !out.empty();
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += static_cast<char>(std::tolower(c));
    }
    while (!out.empty() && (out.back() == '.' || out.back() == '!' || out.back() == '?' || out.back() == ' ')) out.pop_back();
    return out;
}

namespace {

std::set<std::string> sentence_set(std::string_view text) {
    std::set<std::string> s;
    for (const auto& sentence : split_sentences(text)) {
        auto n = normalize_sentence(sentence);
        if (!n.empty()) s.insert(std::move(n));
    }
    return s;
}

}  // namespace

std::size_t duplicated_sentences(const ToolSpec& spec) {
    const auto tool = sentence_set(spec.description);
    std::size_t n = 0;
    for (const auto& p : spec.parameters) {
        for (const auto& s : split_sentences(p.description)) {
            if (tool.count(normalize_sentence(s))) ++n;
        }
    }
    return n;
}

ToolSpec strip_redundancy(ToolSpec spec) {
    const auto tool = sentence_set(spec.description);
    for (auto& p : spec.parameters) {
        std::string kept;
        for (const auto& s : split_sentences(p.description)) {
            if (tool.count(normalize_sentence(s))) continue;
            if (!kept.empty()) kept += ' ';
            kept += s;
        }
        if (kept.empty() && !p.description.empty()) kept = "The " + p.name + " argument (" + p.type.name() + ").";
        p.description = kept;
    }
    return spec;
}

// --- test batches ------------------------------------------------------------------

json to_json(const TestBatch& batch) {
    return json{{"provenance", batch.provenance}, {"cases", results_json(batch)}};
}

json sample_value(const ParameterSpec& param) {
    if (param.type.kind() == ValueType::Kind::String) {
        static const std::regex example(R"((?:such as|e\.g\.|for example)\s+([A-Za-z0-9][A-Za-z0-9_\-\.]*))",
                                        std::regex::icase);
        std::smatch m;
        if (std::regex_search(param.description, m, example)) {
            std::string v = m[1];
            while (!v.empty() && v.back() == '.') v.pop_back();
            if (!v.empty()) return v;
        }
    }
    return sample_for_type(param.type);
}

TestBatch generate_test_cases(const ToolSpec& spec, const QualityReport* feedback, BackendRegistry* backends,
                              const std::string& backend_id) {
    TestBatch batch;
    if (feedback) batch.provenance = "feedback-round-" + std::to_string(feedback->round);
    std::set<std::string> seen;
    auto add = [&](json args, std::string purpose, bool expect_ok) {
        TestCase c{ToolCall{spec.name, std::move(args)}, std::move(purpose), expect_ok};
        if (seen.insert(to_json(c.call).dump()).second) batch.cases.push_back(std::move(c));
    };

    json baseline = json::object();
    for (const auto& p : spec.parameters) {
        if (p.required) baseline[p.name] = sample_value(p);
    }
    add(baseline, "valid", true);

    json edge = json::object();
    bool any_required = false;
    for (const auto& p : spec.parameters) {
        if (!p.required) continue;
        edge[p.name] = edge_value(p.type);
        any_required = true;
    }
    if (any_required) add(edge, "edge", true);

    for (const auto& p : spec.parameters) {
        if (p.required) continue;
        json with = baseline;
        with[p.name] = sample_value(p);
        add(with, "optional:" + p.name, true);
    }
    for (const auto& p : spec.parameters) {
        if (!p.required) continue;
        json without = baseline;
        without.erase(p.name);
        add(without, "missing:" + p.name, false);
    }
    std::set<std::string> typed;
    for (const auto& p : spec.parameters) {
        if (!typed.insert(type_probe_key(p)).second) continue;
        json wrong = baseline;
        wrong[p.name] = wrong_value(p.type);
        add(wrong, "type:" + p.name, false);
    }
    std::string unknown = "unexpected_argument";
    while (spec.find_parameter(unknown)) unknown += "_x";
    json extra = baseline;
    extra[unknown] = true;
    add(extra, "unknown", false);

    if (!feedback) return batch;

    auto flagged = [&](const std::string& dim) {
        auto it = feedback->scores.find(dim);
        return it != feedback->scores.end() && it->second < 10.0;
    };
    if (flagged("accuracy") || flagged("reliability")) {
        for (const auto& p : spec.parameters) {
            if (p.type.kind() != ValueType::Kind::Integer && p.type.kind() != ValueType::Kind::Number) continue;
            for (int v : {0, -1}) {
                json b = baseline;
                b[p.name] = v;
                add(b, "boundary:" + p.name, true);
            }
        }
    }
    if (flagged("completeness") || flagged("functionality")) {
        json full = baseline;
        for (const auto& p : spec.parameters) {
            if (!p.required) full[p.name] = sample_value(p);
        }
        add(full, "full", true);
    }
    const bool want_agent = flagged("clarity") || flagged("user-friendliness") || flagged("test-coverage");
    if (want_agent && backends) {
        std::vector<std::string> flags;
        for (const auto& [d, s] : feedback->scores) {
            if (s < 10.0) flags.push_back(d);
        }
        const json input{{"spec", to_json(spec)}, {"flagged", flags}};
        const std::string prompt = build_prompt(
            kTaskTestCases, "Reply with a JSON list of argument objects that exercise the flagged weaknesses.", input);
        auto sets = ask(*backends, backend_id, prompt, "test-generation", [](const json& doc) {
            if (!doc.is_array()) throw std::runtime_error("expected a JSON list of argument objects");
            for (const auto& a : doc) {
                if (!a.is_object()) throw std::runtime_error("every test case must be an argument object");
            }
            return doc;
        });
        for (const auto& a : sets) {
            bool valid = true;
            try {
                validate_arguments(ToolCall{spec.name, a}, spec);
            } catch (const ToolFailure&) {
                valid = false;
            }
            add(a, "agent", valid);
        }
    }
    return batch;
}

void execute_batch(TestBatch& batch, Caller& caller, std::size_t width) {
    std::vector<ToolCall> calls;
    for (const auto& c : batch.cases) calls.push_back(c.call);
    batch.results = execute_parallel(calls, caller.context(), width);
}

// --- optimizer steps ---------------------------------------------------------------

DescriptionProposal analyze_description(const ToolSpec& spec, const TestBatch& batch, BackendRegistry& backends,
                                        const std::string& backend_id) {
    if (batch.results.empty()) throw std::invalid_argument("analyze_description needs an executed batch");
    DescriptionProposal out;
    out.low_confidence = std::none_of(batch.results.begin(), batch.results.end(), [](const ToolResult& r) { return r.ok(); });
    const json input{{"spec", to_json(spec)}, {"observations", results_json(batch)}};
    const std::string prompt = build_prompt(
        kTaskAnalyze,
        "Rewrite the tool description so it matches the observed behaviour. Reply with the new description as plain text.",
        input);
    std::string reply;
    try {
        reply = backends.generate(backend_id, prompt);
    } catch (const ToolFailure& f) {
        exec_failed("analysis stage failed: " + f.error().message, json{{"stage", "analysis"}});
    }
    const auto b = reply.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) exec_failed("analysis stage returned an empty description", json{{"stage", "analysis"}});
    out.text = reply.substr(b, reply.find_last_not_of(" \t\r\n") - b + 1);
    return out;
}

std::map<std::string, std::string> optimize_argument_descriptions(const ToolSpec& spec, const TestBatch& batch,
                                                                  BackendRegistry& backends,
                                                                  const std::string& backend_id) {
    if (batch.results.empty()) throw std::invalid_argument("optimize_argument_descriptions needs an executed batch");
    std::map<std::string, std::string> out;
    for (const auto& p : spec.parameters) out[p.name] = p.description;
    if (spec.parameters.empty()) return out;
    const json input{{"spec", to_json(spec)}, {"observations", results_json(batch)}};
    const std::string prompt = build_prompt(
        kTaskArguments,
        "Reply with a JSON object mapping each parameter name to an improved description. Do not repeat sentences "
        "from the tool description.",
        input);
    json proposals = ask(backends, backend_id, prompt, "arguments", [](const json& doc) {
        if (!doc.is_object()) throw std::runtime_error("expected a JSON object of parameter descriptions");
        return doc;
    });
    for (auto& [name, text] : out) {
        if (proposals.contains(name) && proposals[name].is_string()) text = proposals[name].get<std::string>();
    }
    ToolSpec probe = spec;
    for (auto& p : probe.parameters) p.description = out[p.name];
    probe = strip_redundancy(std::move(probe));
    for (const auto& p : probe.parameters) out[p.name] = p.description;
    return out;
}

QualityReport evaluate_quality(const ToolSpec& spec, const TestBatch& batch, DimensionSet set, BackendRegistry& backends,
                               const std::string& backend_id) {
    const json input{{"spec", to_json(spec)},
                     {"set", std::string(to_string(set))},
                     {"dimensions", dimensions(set)},
                     {"results", results_json(batch)}};
    const std::string prompt = build_prompt(
        kTaskEvaluate,
        "Score each dimension from 0 to 10. Reply with {\"scores\": {dimension: number}, \"rationale\": {dimension: text}}.",
        input);
    return ask(backends, backend_id, prompt, "evaluation", [&](const json& doc) {
        if (!doc.is_object() || !doc.contains("scores") || !doc["scores"].is_object()) {
            throw std::runtime_error("reply needs a \"scores\" object");
        }
        QualityReport r;
        r.set = set;
        for (const auto& d : dimensions(set)) {
            if (!doc["scores"].contains(d) || !doc["scores"][d].is_number()) {
                throw std::runtime_error("score for dimension '" + d + "' is missing or not a number");
            }
            r.scores[d] = clamp10(doc["scores"][d].get<double>());
            if (doc.contains("rationale") && doc["rationale"].is_object() && doc["rationale"].contains(d) &&
                doc["rationale"][d].is_string()) {
                r.rationale[d] = doc["rationale"][d].get<std::string>();
            }
        }
        r.overall = overall_score(r.scores, set);
        return r;
    });
}

// --- rule based reference backend ---------------------------------------------------

QualityReport rubric_report(const ToolSpec& spec, const json& results, DimensionSet set) {
    QualityReport r;
    r.set = set;
    const std::size_t undocumented = static_cast<std::size_t>(std::count_if(
        spec.parameters.begin(), spec.parameters.end(), [](const ParameterSpec& p) { return p.description.empty(); }));
    const std::size_t duplicates = duplicated_sentences(spec);
    const bool short_description = spec.description.size() < 20;

    if (set == DimensionSet::Optimizer) {
        double clarity = 10.0 - 2.0 * static_cast<double>(undocumented);
        r.rationale["clarity"] = std::to_string(undocumented) + " parameter(s) without description";

        std::vector<std::string> missing;
        for (const auto& f : observed_fields(results)) {
            if (!mentions(spec.description, f)) missing.push_back(f);
        }
        double accuracy = 10.0 - 2.0 * static_cast<double>(missing.size());
        std::string m;
        for (const auto& f : missing) m += (m.empty() ? "" : ", ") + f;
        r.rationale["accuracy"] = missing.empty() ? "description names every observed field"
                                                  : "observed fields not described: " + m;

        r.scores["completeness"] = short_description ? 7.0 : 10.0;
        r.rationale["completeness"] = short_description ? "description under 20 characters" : "description long enough";

        double conciseness = spec.description.size() > 400 ? 8.0 : 10.0;
        for (const auto& p : spec.parameters) {
            if (p.description.size() > 200) conciseness -= 1.0;
        }
        r.rationale["conciseness"] = "length limits 400 (tool) and 200 (parameter)";

        const bool formed = !spec.description.empty() && std::isupper(static_cast<unsigned char>(spec.description.front())) &&
                            spec.description.back() == '.';
        r.scores["user-friendliness"] = formed ? 10.0 : 8.0;
        r.rationale["user-friendliness"] = formed ? "description is a full sentence" : "description is not a full sentence";

        r.scores["clarity"] = clamp10(clarity);
        r.scores["accuracy"] = clamp10(accuracy);
        r.scores["conciseness"] = clamp10(conciseness);
        r.scores["redundancy-avoidance"] = clamp10(10.0 - 2.0 * static_cast<double>(duplicates));
        r.rationale["redundancy-avoidance"] = std::to_string(duplicates) + " duplicated sentence(s)";
    } else {
        std::size_t valid = 0, valid_ok = 0, probes = 0, rejected = 0;
        double total_ms = 0.0;
        for (const auto& c : results) {
            const bool ok = c.value("status", std::string()) == "ok";
            total_ms += c.value("duration_ms", 0.0);
            if (c.value("expect_ok", true)) {
                ++valid;
                if (ok) ++valid_ok;
            } else {
                ++probes;
                if (!ok && c.contains("error")) {
                    auto code = error_code_from_string(c["error"].value("code", std::string()));
                    if (code && is_validation_code(*code)) ++rejected;
                }
            }
        }
        const auto share = [](std::size_t a, std::size_t b) { return b == 0 ? 10.0 : 10.0 * static_cast<double>(a) / static_cast<double>(b); };
        r.scores["functionality"] = share(valid_ok, valid);
        r.rationale["functionality"] = std::to_string(valid_ok) + "/" + std::to_string(valid) + " valid cases succeeded";
        r.scores["reliability"] = share(rejected, probes);
        r.rationale["reliability"] = std::to_string(rejected) + "/" + std::to_string(probes) + " invalid probes rejected";
        r.scores["maintainability"] = clamp10(10.0 - 2.0 * static_cast<double>(undocumented) - (short_description ? 3.0 : 0.0) -
                                              2.0 * static_cast<double>(duplicates));
        r.rationale["maintainability"] = "documentation checks";
        const double mean = results.empty() ? 0.0 : total_ms / static_cast<double>(results.size());
        r.scores["performance"] = mean < 1000.0 ? 10.0 : mean < 5000.0 ? 8.0 : 5.0;
        r.rationale["performance"] = "mean duration " + std::to_string(mean) + " ms";
        r.scores["test-coverage"] = 10.0 * std::min(1.0, static_cast<double>(results.size()) / 5.0);
        r.rationale["test-coverage"] = std::to_string(results.size()) + " cases";
    }
    r.overall = overall_score(r.scores, set);
    return r;
}

void install_reference_rules(MockBackend& backend) {
    backend.on(kTaskTestCases, "[]");
    backend.on_match([](const std::string& prompt) -> std::optional<std::string> {
        if (prompt.rfind(kTaskAnalyze, 0) != 0) return std::nullopt;
        const json input = prompt_input(prompt);
        if (input.is_discarded()) return std::nullopt;
        std::string kept;
        for (const auto& s : split_sentences(input["spec"].value("description", std::string()))) {
            if (s.rfind("Returns fields:", 0) == 0) continue;
            kept += (kept.empty() ? "" : " ") + s;
        }
        const auto fields = observed_fields(input.value("observations", json::array()));
        bool all = true;
        for (const auto& f : fields) all = all && mentions(kept, f);
        if (!all) {
            std::string list;
            for (const auto& f : fields) list += (list.empty() ? "" : ", ") + f;
            kept += (kept.empty() ? "" : " ") + std::string("Returns fields: ") + list + ".";
        }
        return kept;
    });
    backend.on_match([](const std::string& prompt) -> std::optional<std::string> {
        if (prompt.rfind(kTaskArguments, 0) != 0) return std::nullopt;
        const json input = prompt_input(prompt);
        if (input.is_discarded()) return std::nullopt;
        json out = json::object();
        for (const auto& p : input["spec"].value("parameters", json::array())) {
            out[p.value("name", std::string())] = p.value("description", std::string());
        }
        return out.dump();
    });
    backend.on_match([](const std::string& prompt) -> std::optional<std::string> {
        if (prompt.rfind(kTaskEvaluate, 0) != 0) return std::nullopt;
        const json input = prompt_input(prompt);
        if (input.is_discarded()) return std::nullopt;
        const DimensionSet set = input.value("set", std::string()) == "discover" ? DimensionSet::Discover : DimensionSet::Optimizer;
        const QualityReport r = rubric_report(tool_spec_from_json(input.at("spec")), input.value("results", json::array()), set);
        return json{{"scores", r.scores}, {"rationale", r.rationale}}.dump();
    });
}

// --- optimize_tool -------------------------------------------------------------------

json to_json(const OptimizationOutcome& o) {
    json reports = json::array();
    for (const auto& r : o.reports) reports.push_back(to_json(r));
    return json{{"original", to_json(o.original)},
                {"optimized", to_json(o.optimized)},
                {"rounds_used", o.rounds_used},
                {"best_round", o.best_round},
                {"terminated_by", o.terminated_by},
                {"reports", reports}};
}

OptimizationOutcome optimize_tool(const std::string& tool, Caller& caller, BackendRegistry& backends,
                                  const OptimizeOptions& options) {
    if (options.max_rounds < 1) throw std::invalid_argument("max_rounds must be at least 1");
    auto entry = caller.registry().find(tool);
    if (!entry) throw ToolFailure(ErrorCode::ToolNotFound, "no tool named '" + tool + "'", json{{"name", tool}});

    OptimizationOutcome out;
    out.original = entry->spec;
    out.optimized = entry->spec;
    out.terminated_by = "max-rounds";
    ToolSpec current = entry->spec;
    double best = -std::numeric_limits<double>::infinity();
    std::optional<QualityReport> last;

    for (int round = 1; round <= options.max_rounds; ++round) {
        std::string stage = "test-generation";
        try {
            TestBatch batch = generate_test_cases(current, last ? &*last : nullptr, &backends, options.backend_id);
            stage = "execution";
            execute_batch(batch, caller, options.parallel_width);
            stage = "analysis";
            const DescriptionProposal proposal = analyze_description(current, batch, backends, options.backend_id);
            ToolSpec candidate = current;
            candidate.description = proposal.text;
            stage = "arguments";
            const auto params = optimize_argument_descriptions(candidate, batch, backends, options.backend_id);
            for (auto& p : candidate.parameters) p.description = params.at(p.name);
            candidate = strip_redundancy(std::move(candidate));
            std::string note;
            try {
                tool_spec_from_json(to_json(candidate));
            } catch (const ToolFailure& f) {
                note = "proposal rejected: " + f.error().message;
                candidate = current;
            }
            stage = "evaluation";
            QualityReport report = evaluate_quality(candidate, batch, DimensionSet::Optimizer, backends, options.backend_id);
            report.round = round;
            if (proposal.low_confidence) report.rationale["analysis"] = "low confidence: every observed call failed";
            if (!note.empty()) report.rationale["proposal"] = note;
            out.reports.push_back(report);
            out.rounds_used = round;
            if (report.overall > best) {
                best = report.overall;
                out.optimized = candidate;
                out.best_round = round;
            }
            current = candidate;
            last = report;
            if (report.overall >= options.threshold) {
                out.terminated_by = "threshold";
                break;
            }
        } catch (const ToolFailure& f) {
            exec_failed("optimization of '" + tool + "' failed in round " + std::to_string(round) + ": " + f.error().message,
                        json{{"stage", stage}, {"round", round}, {"cause", to_json(f.error())}, {"partial", to_json(out)}});
        }
    }
    return out;
}

// --- discover_tool -------------------------------------------------------------------

namespace {

const char* kPlanLanguage =
    "The implementation is a JSON plan: {\"steps\": [...], \"output\": template}. Steps are "
    "{\"call\": tool, \"arguments\": {...}, \"as\": var}, {\"parallel\": [calls], \"as\": var} or "
    "{\"bind\": {var: template}}. Templates reference inputs and variables as \"$name.path\", interpolate "
    "with \"${name}\" and may use {\"$op\": op, \"args\": [...]} with ops length, upper, lower, trim, concat, "
    "add, multiply, word_count, not, equals. A plan may have no steps when the output template computes "
    "the result. The package manifest registers the plan with handler \"program:implementation.json\".";

ToolResult run_candidate(const ToolSpec& spec, ToolHandler& handler, const ToolCall& call, const ToolContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    auto ms = [&] { return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count(); };
    try {
        const json args = validate_arguments(call, spec);
        json payload = handler.run(args, ctx);
        const auto c = conforms_to_return_schema(payload, spec.return_schema);
        if (!c.ok) {
            return ToolResult::failure(ToolError{ErrorCode::ExecutionFailed, "payload does not match the return schema at " + c.path,
                                                 json{{"path", c.path}, {"reason", c.reason}}},
                                       ms());
        }
        return ToolResult::success(std::move(payload), ms());
    } catch (const ToolFailure& f) {
        return ToolResult::failure(f.error(), ms());
    } catch (const std::exception& e) {
        return ToolResult::failure(ToolError{ErrorCode::ExecutionFailed, e.what(), nullptr}, ms());
    }
}

void collect_tools(const CompositePlan& plan, std::set<std::string>& out) {
    for (const auto& step : plan.steps) {
        if (const auto* c = std::get_if<CallStep>(&step)) out.insert(c->tool);
        if (const auto* p = std::get_if<ParallelStep>(&step)) {
            for (const auto& c : p->calls) out.insert(c.tool);
        }
        if (const auto* l = std::get_if<LoopStep>(&step)) out.insert(l->tools.begin(), l->tools.end());
    }
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

}  // namespace

json to_json(const ToolPackage& p) {
    return json{{"spec", to_json(p.spec)},
                {"implementation", p.implementation},
                {"dependencies", p.dependencies},
                {"metadata", p.metadata},
                {"quality", to_json(p.quality)},
                {"accepted", p.accepted}};
}

ToolPackage discover_tool(const std::string& requirement, Caller& caller, Finder& finder, BackendRegistry& backends,
                          const DiscoverOptions& options) {
    if (options.max_rounds < 1) throw std::invalid_argument("max_rounds must be at least 1");
    const Registry& registry = caller.registry();

    // Stage 1: similar tools, deduplicated, known to the registry.
    json references = json::array();
    std::vector<std::string> reference_names;
    if (options.references > 0) {
        for (const auto& m : finder.find_tool(requirement, SearchStrategy::Auto, options.references)) {
            if (std::find(reference_names.begin(), reference_names.end(), m.tool_name) != reference_names.end()) continue;
            auto e = registry.find(m.tool_name);
            if (!e) continue;
            reference_names.push_back(m.tool_name);
            references.push_back(to_json(e->spec));
        }
    }

    ToolPackage best;
    bool have_best = false;
    std::optional<QualityReport> last;
    int rounds = 0;
    for (int round = 1; round <= options.max_rounds; ++round) {
        rounds = round;
        const json feedback = last ? to_json(*last) : json();

        // Stage 2: specification.
        const std::string spec_prompt = build_prompt(
            kTaskSpecification,
            "Write the tool specification as JSON: name, description, parameters [{name, type, description, required}], "
            "return_schema, tags.",
            json{{"requirement", requirement}, {"references", references}, {"feedback", feedback},
                 {"previous", have_best ? to_json(best.spec) : json()}});
        ToolSpec spec = ask(backends, options.backend_id, spec_prompt, "specification", [&](const json& doc) {
            ToolSpec s = tool_spec_from_json(doc);
            if (registry.contains(s.name)) {
                throw ToolFailure(ErrorCode::SpecInvalid, "a tool named '" + s.name + "' is already registered",
                                  json{{"path", "name"}});
            }
            return s;
        });

        // Stage 3: implementation.
        const std::string impl_prompt = build_prompt(
            kTaskImplementation, kPlanLanguage,
            json{{"requirement", requirement}, {"spec", to_json(spec)}, {"references", references}, {"feedback", feedback}});
        json implementation;
        CompositePlan plan = ask(backends, options.backend_id, impl_prompt, "implementation", [&](const json& doc) {
            json body = doc;
            if (body.is_object()) body.erase("spec");
            CompositePlan p = parse_plan(body, &spec);
            check_plan(p, registry);
            implementation = body;
            return p;
        });

        // Stage 4: static checks passed above; dynamic tests next.
        ProgramHandler handler(plan, &backends);
        TestBatch batch = generate_test_cases(spec, last ? &*last : nullptr, &backends, options.backend_id);
        for (const auto& c : batch.cases) batch.results.push_back(run_candidate(spec, handler, c.call, caller.context()));
        QualityReport report;
        try {
            report = evaluate_quality(spec, batch, DimensionSet::Discover, backends, options.backend_id);
        } catch (const ToolFailure& f) {
            json detail = f.error().detail.is_object() ? f.error().detail : json::object();
            detail["stage"] = "evaluation";
            exec_failed(f.error().message, detail);
        }
        report.round = round;
        report.rationale["static"] = "specification valid; plan well formed";
        last = report;

        if (!have_best || report.overall > best.quality.overall) {
            best.spec = spec;
            best.implementation = implementation;
            best.quality = report;
            std::set<std::string> deps;
            collect_tools(plan, deps);
            best.dependencies.clear();
            for (const auto& d : deps) best.dependencies.push_back("tool:" + d);
            have_best = true;
        }
        if (report.overall >= options.target) break;
    }
    best.accepted = best.quality.overall >= options.target;
    best.metadata = json{{"requirement", requirement},
                         {"references", reference_names},
                         {"rounds_used", rounds},
                         {"best_round", best.quality.round},
                         {"target", options.target},
                         {"backend", options.backend_id.empty() ? backends.default_id() : options.backend_id}};
    return best;
}

fs::path write_package(const ToolPackage& package, const fs::path& dir) {
    const fs::path root = dir / package.spec.name;
    fs::create_directories(root);
    const json config{{"spec", to_json(package.spec)},
                      {"metadata", package.metadata},
                      {"quality", to_json(package.quality)},
                      {"accepted", package.accepted}};
    write_file(root / "config.json", config.dump(2) + "\n");
    write_file(root / "spec.json", to_json(package.spec).dump(2) + "\n");
    write_file(root / "implementation.json", package.implementation.dump(2) + "\n");
    std::string deps;
    for (const auto& d : package.dependencies) deps += d + "\n";
    write_file(root / "dependencies.txt", deps);
    const json manifest{{"tools", json::array({json{{"file", "spec.json"},
                                                    {"handler", "program:implementation.json"},
                                                    {"origin", "generated"}}})}};
    write_file(root / "manifest.json", manifest.dump(2) + "\n");
    return root;
}

}  // namespace toolhub::refine
