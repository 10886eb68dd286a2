#include "toolhub/agentic.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <httplib.h>

namespace toolhub {

// --- MockBackend -------------------------------------------------------------

MockBackend::MockBackend(std::string id, std::size_t max_concurrency)
    : id_(std::move(id)), max_concurrency_(max_concurrency == 0 ? 1 : max_concurrency) {}

MockBackend& MockBackend::on(std::string needle, std::string response) {
    return on_match([needle = std::move(needle), response = std::move(response)](const std::string& prompt)
                        -> std::optional<std::string> {
        if (prompt.find(needle) != std::string::npos) return response;
        return std::nullopt;
    });
}

MockBackend& MockBackend::on_sequence(std::string needle, std::vector<std::string> responses) {
    auto counter = std::make_shared<std::size_t>(0);
    return on_match([needle = std::move(needle), responses = std::move(responses),
                     counter](const std::string& prompt) -> std::optional<std::string> {
        if (responses.empty() || prompt.find(needle) == std::string::npos) return std::nullopt;
        const std::size_t i = std::min(*counter, responses.size() - 1);
        ++*counter;
        return responses[i];
    });
}

MockBackend& MockBackend::on_match(Rule rule) {
    std::lock_guard lock(mutex_);
    rules_.push_back(std::move(rule));
    return *this;
}

MockBackend& MockBackend::fallback(std::string response) {
    std::lock_guard lock(mutex_);
    fallback_ = std::move(response);
    return *this;
}

std::string MockBackend::generate(const std::string& prompt, const GenerationSettings&) {
    std::lock_guard lock(mutex_);
    prompts_.push_back(prompt);
    for (const auto& rule : rules_) {
        if (auto out = rule(prompt)) return *out;
    }
    if (fallback_) return *fallback_;
    throw std::runtime_error("mock backend '" + id_ + "' has no rule for this prompt");
}

std::vector<std::string> MockBackend::prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
}

std::size_t MockBackend::calls() const {
    std::lock_guard lock(mutex_);
    return prompts_.size();
}

// --- HttpBackend -------------------------------------------------------------

HttpBackend::HttpBackend(std::string id, std::string url, double timeout_seconds, std::size_t max_concurrency)
    : id_(std::move(id)), url_(std::move(url)), timeout_seconds_(timeout_seconds),
      max_concurrency_(max_concurrency == 0 ? 1 : max_concurrency) {}

std::string HttpBackend::generate(const std::string& prompt, const GenerationSettings& settings) {
    std::string base = url_;
    std::string path = "/";
    const auto scheme_end = base.find("://");
    const auto path_start = base.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start != std::string::npos) {
        path = base.substr(path_start);
        base = base.substr(0, path_start);
    }
    httplib::Client client(base);
    const auto secs = static_cast<time_t>(timeout_seconds_);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    const json body{{"prompt", prompt}, {"temperature", settings.temperature}};
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error("backend " + url_ + " unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw std::runtime_error("backend " + url_ + " answered HTTP " + std::to_string(res->status));
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
        throw std::runtime_error("backend " + url_ + " reply has no 'text' field");
    }
    return reply["text"].get<std::string>();
}

// --- BackendRegistry ---------------------------------------------------------

void BackendRegistry::add(std::shared_ptr<AgentBackend> backend) {
    auto gate = std::make_shared<Gate>();
    const std::string id = backend->id();
    gate->backend = std::move(backend);
    std::lock_guard lock(mutex_);
    gates_[id] = std::move(gate);
    if (default_.empty()) default_ = id;
}

bool BackendRegistry::has(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return gates_.count(id) > 0;
}

bool BackendRegistry::empty() const {
    std::lock_guard lock(mutex_);
    return gates_.empty();
}

std::vector<std::string> BackendRegistry::ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : gates_) out.push_back(id);
    return out;
}

std::string BackendRegistry::default_id() const {
    std::lock_guard lock(mutex_);
    return default_;
}

std::string BackendRegistry::generate(const std::string& backend_id, const std::string& prompt,
                                      const GenerationSettings& settings) {
    std::shared_ptr<Gate> gate;
    {
        std::lock_guard lock(mutex_);
        const std::string& id = backend_id.empty() ? default_ : backend_id;
        auto it = gates_.find(id);
        if (it == gates_.end()) {
            const std::string shown = id.empty() ? std::string("(default)") : id;
            throw ToolFailure(ErrorCode::ExecutionFailed, "no agent backend '" + shown + "' is configured",
                              json{{"backend", shown}});
        }
        gate = it->second;
    }
    const std::size_t cap = std::max<std::size_t>(1, gate->backend->max_concurrency());
    {
        std::unique_lock lock(gate->mutex);
        gate->cv.wait(lock, [&] { return gate->active < cap; });
        ++gate->active;
    }
    struct Leave {
        Gate& g;
        ~Leave() {
            {
                std::lock_guard lock(g.mutex);
                --g.active;
            }
            g.cv.notify_one();
        }
    } leave{*gate};
    try {
        return gate->backend->generate(prompt, settings);
    } catch (const ToolFailure&) {
        throw;
    } catch (const std::exception& ex) {
        throw ToolFailure(ErrorCode::ExecutionFailed, "agent backend '" + gate->backend->id() + "' failed: " + ex.what(),
                          json{{"backend", gate->backend->id()}});
    }
}

// --- AgentConfig -------------------------------------------------------------

std::string_view to_string(OutputContract c) {
    switch (c) {
        case OutputContract::FreeText: return "free-text";
        case OutputContract::ToolCall: return "tool-call";
        case OutputContract::ScoredReport: return "scored-report";
    }
    return "free-text";
}

std::optional<OutputContract> output_contract_from_string(std::string_view name) {
    if (name == "free-text") return OutputContract::FreeText;
    if (name == "tool-call") return OutputContract::ToolCall;
    if (name == "scored-report") return OutputContract::ScoredReport;
    return std::nullopt;
}

namespace {

[[noreturn]] void config_invalid(const std::string& path, const std::string& what) {
    throw ToolFailure(ErrorCode::SpecInvalid, path + ": " + what, json{{"path", path}});
}

}  // namespace

std::vector<std::string> template_placeholders(std::string_view tmpl) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        const char c = tmpl[i];
        if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
            ++i;
        } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            ++i;
        } else if (c == '{') {
            const auto end = tmpl.find('}', i + 1);
            if (end == std::string_view::npos) config_invalid("prompt_template", "unterminated placeholder");
            out.emplace_back(tmpl.substr(i + 1, end - i - 1));
            i = end;
        }
    }
    return out;
}

void check_agent_config(const AgentConfig& config) {
    std::set<std::string> names{"context"};
    for (const auto& p : config.input_parameters) names.insert(p.name);
    for (const auto& ph : template_placeholders(config.prompt_template)) {
        if (!names.count(ph)) {
            throw ToolFailure(ErrorCode::SpecInvalid,
                              "prompt_template: placeholder {" + ph + "} names no input parameter",
                              json{{"path", "prompt_template"}, {"placeholder", ph}});
        }
    }
}

std::string render_prompt(std::string_view tmpl, const json& arguments, const std::string& context) {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        const char c = tmpl[i];
        if ((c == '{' || c == '}') && i + 1 < tmpl.size() && tmpl[i + 1] == c) {
            out.push_back(c);
            ++i;
        } else if (c == '{') {
            const auto end = tmpl.find('}', i + 1);
            if (end == std::string_view::npos) config_invalid("prompt_template", "unterminated placeholder");
            const std::string key(tmpl.substr(i + 1, end - i - 1));
            if (key == "context") {
                out += context;
            } else if (arguments.is_object() && arguments.contains(key)) {
                const json& v = arguments[key];
                out += v.is_string() ? v.get<std::string>() : v.dump();
            }
            i = end;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

AgentConfig agent_config_from_json(const json& doc) {
    if (!doc.is_object()) config_invalid("", "agent config must be an object");
    AgentConfig c;
    json shell{{"name", doc.value("name", std::string())}, {"description", doc.value("description", std::string())}};
    if (doc.contains("input_parameters")) shell["parameters"] = doc["input_parameters"];
    const ToolSpec spec = tool_spec_from_json(shell);
    c.name = spec.name;
    c.description = spec.description;
    c.input_parameters = spec.parameters;
    if (!doc.contains("prompt_template") || !doc["prompt_template"].is_string()) {
        config_invalid("prompt_template", "missing or non-string");
    }
    c.prompt_template = doc["prompt_template"].get<std::string>();
    if (doc.contains("output_contract")) {
        auto oc = doc["output_contract"].is_string()
                      ? output_contract_from_string(doc["output_contract"].get<std::string>())
                      : std::nullopt;
        if (!oc) config_invalid("output_contract", "must be free-text, tool-call or scored-report");
        c.output_contract = *oc;
    }
    if (doc.contains("backend")) {
        if (!doc["backend"].is_string()) config_invalid("backend", "must be a string");
        c.backend = doc["backend"].get<std::string>();
    }
    if (doc.contains("temperature")) {
        if (!doc["temperature"].is_number()) config_invalid("temperature", "must be a number");
        c.temperature = doc["temperature"].get<double>();
    }
    if (doc.contains("tags")) {
        if (!doc["tags"].is_array()) config_invalid("tags", "must be a list");
        c.tags = doc["tags"].get<std::vector<std::string>>();
    }
    check_agent_config(c);
    return c;
}

json to_json(const AgentConfig& config) {
    ToolSpec shell;
    shell.name = config.name;
    shell.description = config.description;
    shell.parameters = config.input_parameters;
    json params = to_json(shell)["parameters"];
    json j{{"name", config.name},
           {"description", config.description},
           {"prompt_template", config.prompt_template},
           {"input_parameters", params},
           {"output_contract", std::string(to_string(config.output_contract))},
           {"backend", config.backend},
           {"tags", config.tags}};
    if (config.temperature) j["temperature"] = *config.temperature;
    return j;
}

ToolSpec agent_tool_spec(const AgentConfig& config) {
    ToolSpec spec;
    spec.name = config.name;
    spec.description = config.description;
    spec.parameters = config.input_parameters;
    spec.tags = config.tags;
    switch (config.output_contract) {
        case OutputContract::FreeText: spec.return_schema = json{{"text", "string"}}; break;
        case OutputContract::ToolCall: spec.return_schema = json{{"name", "string"}, {"arguments", "object"}}; break;
        case OutputContract::ScoredReport:
            spec.return_schema = json{{"scores", "object"}, {"overall", "number"}, {"rationale", "object"}};
            break;
    }
    return spec;
}

json extract_json(std::string_view text) {
    auto attempt = [](std::string_view s) { return json::parse(s.begin(), s.end(), nullptr, false); };
    json j = attempt(text);
    if (!j.is_discarded()) return j;
    // ```json ... ``` fences
    if (auto fence = text.find("```"); fence != std::string_view::npos) {
        auto body_start = text.find('\n', fence);
        auto body_end = body_start == std::string_view::npos ? body_start : text.find("```", body_start);
        if (body_end != std::string_view::npos) {
            j = attempt(text.substr(body_start + 1, body_end - body_start - 1));
            if (!j.is_discarded()) return j;
        }
    }
    for (auto [open, close] : {std::pair{'{', '}'}, std::pair{'[', ']'}}) {
        const auto a = text.find(open);
        const auto b = text.rfind(close);
        if (a != std::string_view::npos && b != std::string_view::npos && b > a) {
            j = attempt(text.substr(a, b - a + 1));
            if (!j.is_discarded()) return j;
        }
    }
    return json(json::value_t::discarded);
}

namespace {

json parse_contract(OutputContract contract, const std::string& text) {
    switch (contract) {
        case OutputContract::FreeText:
            return json{{"text", text}};
        case OutputContract::ToolCall: {
            json j = extract_json(text);
            if (j.is_discarded()) throw std::invalid_argument("reply is not a JSON tool call");
            try {
                return to_json(tool_call_from_json(j));
            } catch (const ToolFailure& f) {
                throw std::invalid_argument(std::string("reply is not a valid tool call: ") + f.what());
            }
        }
        case OutputContract::ScoredReport: {
            json j = extract_json(text);
            if (j.is_discarded() || !j.is_object()) throw std::invalid_argument("reply is not a JSON object");
            if (!j.contains("scores") || !j["scores"].is_object() || j["scores"].empty()) {
                throw std::invalid_argument("report needs a non-empty 'scores' object");
            }
            double sum = 0.0;
            for (const auto& [dim, v] : j["scores"].items()) {
                if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 10.0) {
                    throw std::invalid_argument("score '" + dim + "' must be a number in [0, 10]");
                }
                sum += v.get<double>();
            }
            json rationale = json::object();
            if (j.contains("rationale") && j["rationale"].is_object()) {
                rationale = j["rationale"];
            } else if (j.contains("rationale") && j["rationale"].is_string()) {
                rationale["summary"] = j["rationale"];
            }
            return json{{"scores", j["scores"]},
                        {"overall", sum / static_cast<double>(j["scores"].size())},
                        {"rationale", rationale}};
        }
    }
    throw std::invalid_argument("unknown contract");
}

}  // namespace

json run_agent(const AgentConfig& config, const json& arguments, BackendRegistry& backends,
               const std::string& context) {
    const std::string prompt = render_prompt(config.prompt_template, arguments, context);
    GenerationSettings gs;
    if (config.temperature) gs.temperature = *config.temperature;
    std::string reply = backends.generate(config.backend, prompt, gs);
    try {
        return parse_contract(config.output_contract, reply);
    } catch (const std::invalid_argument& first) {
        const std::string retry = prompt + "\n\nYour previous reply could not be used: " + first.what() +
                                  "\nReply again using the required format.";
        reply = backends.generate(config.backend, retry, gs);
        try {
            return parse_contract(config.output_contract, reply);
        } catch (const std::invalid_argument& second) {
            throw ToolFailure(ErrorCode::ExecutionFailed,
                              "agent '" + config.name + "' output unusable after retry: " + second.what(),
                              json{{"contract", std::string(to_string(config.output_contract))}, {"reply", reply}});
        }
    }
}

ToolResult run_agentic_tool(const AgentConfig& config, const json& arguments, BackendRegistry& backends,
                            const std::string& context) {
    try {
        return ToolResult::success(run_agent(config, arguments, backends, context));
    } catch (const ToolFailure& f) {
        return ToolResult::failure(f.error());
    } catch (const std::exception& ex) {
        return ToolResult::failure(ErrorCode::ExecutionFailed, ex.what());
    }
}

AgenticHandler::AgenticHandler(AgentConfig config, BackendRegistry& backends)
    : config_(std::move(config)), backends_(backends) {
    check_agent_config(config_);
}

json AgenticHandler::run(const json& arguments, const ToolContext&) { return run_agent(config_, arguments, backends_); }

// --- agentic_find ------------------------------------------------------------

namespace {

std::string strip_name(std::string s) {
    auto junk = [](unsigned char c) { return std::isspace(c) || c == '"' || c == '\'' || c == '`' || c == '-' || c == '*' || c == '.'; };
    while (!s.empty() && junk(s.front())) s.erase(s.begin());
    while (!s.empty() && junk(s.back())) s.pop_back();
    // "1) name" or "1. name"
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == ')' || s[i] == '.')) {
        s = s.substr(i + 1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    }
    return s;
}

std::vector<std::string> parse_name_list(const std::string& reply) {
    std::vector<std::string> names;
    json j = extract_json(reply);
    if (j.is_array()) {
        for (const auto& item : j) {
            if (item.is_string()) names.push_back(item.get<std::string>());
            else if (item.is_object() && item.contains("name") && item["name"].is_string()) names.push_back(item["name"].get<std::string>());
        }
        return names;
    }
    std::string current;
    for (char c : reply + "\n") {
        if (c == ',' || c == '\n') {
            auto name = strip_name(current);
            if (!name.empty()) names.push_back(name);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    return names;
}

}  // namespace

AgenticFindResult agentic_find(std::string_view query, const std::vector<ToolSpec>& candidates,
                               BackendRegistry& backends, const std::string& backend_id) {
    if (candidates.empty()) throw std::invalid_argument("agentic_find needs at least one candidate tool");
    std::ostringstream prompt;
    prompt << "TASK: select_tools\n"
           << "Query: " << query << "\n"
           << "Candidate tools:\n";
    std::set<std::string> allowed;
    for (const auto& spec : candidates) {
        prompt << "- " << spec.name << ": " << spec.description << "\n";
        allowed.insert(spec.name);
    }
    prompt << "Reply with a JSON array of the relevant tool names, most relevant first.\n";

    const std::string reply = backends.generate(backend_id, prompt.str());
    AgenticFindResult out;
    std::set<std::string> seen;
    for (const auto& name : parse_name_list(reply)) {
        if (!allowed.count(name)) {
            out.dropped.push_back(name);
        } else if (seen.insert(name).second) {
            const double rank = static_cast<double>(out.matches.size());
            out.matches.push_back({name, 1.0 / (1.0 + rank), SearchStrategy::Agentic, std::nullopt});
        }
    }
    return out;
}

}  // namespace toolhub
