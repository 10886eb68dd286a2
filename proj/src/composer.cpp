#include "toolhub/composer.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <set>
#include <sstream>
#include <thread>

namespace toolhub {

namespace {

[[noreturn]] void plan_invalid(const std::string& path, const std::string& what, json extra = json::object()) {
    extra["path"] = path;
    throw ToolFailure(ErrorCode::SpecInvalid, path + ": " + what, std::move(extra));
}

[[noreturn]] void exec_failed(const std::string& what, json detail = nullptr) {
    throw ToolFailure(ErrorCode::ExecutionFailed, what, std::move(detail));
}

bool is_var_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_var_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

struct Reference {
    std::string var;
    std::string path;  // "" or ".a.b"
};

/// Parses "name.a.b" (no leading '$'). Path segments are [A-Za-z0-9_-]+.
std::optional<Reference> parse_reference(std::string_view text) {
    if (text.empty() || !is_var_start(text.front())) return std::nullopt;
    std::size_t i = 1;
    while (i < text.size() && is_var_char(text[i])) ++i;
    Reference r{std::string(text.substr(0, i)), std::string(text.substr(i))};
    std::size_t seg = 0;
    for (std::size_t k = i; k < text.size(); ++k) {
        const char c = text[k];
        if (c == '.') {
            if (k + 1 == text.size()) return std::nullopt;
            seg = 0;
        } else if (is_var_char(c) || c == '-') {
            ++seg;
        } else {
            return std::nullopt;
        }
    }
    return r;
}

std::optional<Reference> whole_reference(const std::string& s) {
    if (s.size() < 2 || s[0] != '$' || s[1] == '$') return std::nullopt;
    return parse_reference(std::string_view(s).substr(1));
}

std::string stringify(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::optional<json> lookup(const Reference& ref, const Scope& scope) {
    auto it = scope.find(ref.var);
    if (it == scope.end()) {
        exec_failed("variable $" + ref.var + " is not bound", json{{"variable", ref.var}});
    }
    if (it->second.is_discarded()) return std::nullopt;  // absent optional input
    if (ref.path.empty()) return std::optional<json>(std::in_place, it->second);
    return extract_path(it->second, ref.path, "$" + ref.var);
}

std::string interpolate(const std::string& s, const Scope& scope) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '$' && i + 1 < s.size() && s[i + 1] == '$') {
            out.push_back('$');
            ++i;
        } else if (s[i] == '$' && i + 1 < s.size() && s[i + 1] == '{') {
            const auto end = s.find('}', i + 2);
            if (end == std::string::npos) exec_failed("unterminated ${ in template");
            auto ref = parse_reference(std::string_view(s).substr(i + 2, end - i - 2));
            if (!ref) exec_failed("bad reference in template: " + s.substr(i, end - i + 1));
            auto v = lookup(*ref, scope);
            if (v) out += stringify(*v);
            i = end;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

void collect_references(const json& tmpl, std::vector<std::string>& out) {
    if (tmpl.is_string()) {
        const std::string& s = tmpl.get_ref<const std::string&>();
        if (auto r = whole_reference(s)) {
            out.push_back(r->var);
            return;
        }
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            if (s[i] == '$' && s[i + 1] == '$') {
                ++i;
            } else if (s[i] == '$' && s[i + 1] == '{') {
                const auto end = s.find('}', i + 2);
                if (end == std::string::npos) break;
                if (auto r = parse_reference(std::string_view(s).substr(i + 2, end - i - 2))) out.push_back(r->var);
                i = end;
            }
        }
    } else if (tmpl.is_object()) {
        for (const auto& [k, v] : tmpl.items()) collect_references(v, out);
    } else if (tmpl.is_array()) {
        for (const auto& v : tmpl) collect_references(v, out);
    }
}

double as_number(const json& v, const std::string& op) {
    if (!v.is_number()) exec_failed("$op " + op + " expects numbers, got " + json_type_name(v));
    return v.get<double>();
}

json apply_op(const std::string& op, const std::vector<json>& args) {
    auto need = [&](std::size_t n) {
        if (args.size() != n) exec_failed("$op " + op + " takes " + std::to_string(n) + " argument(s)");
    };
    auto need_string = [&](const json& v) -> const std::string& {
        if (!v.is_string()) exec_failed("$op " + op + " expects a string, got " + json_type_name(v));
        return v.get_ref<const std::string&>();
    };
    if (op == "length") {
        need(1);
        const json& v = args[0];
        if (v.is_string()) return v.get_ref<const std::string&>().size();
        if (v.is_array() || v.is_object()) return v.size();
        exec_failed("$op length expects a string, array or object");
    }
    if (op == "upper" || op == "lower") {
        need(1);
        std::string s = need_string(args[0]);
        for (char& c : s) c = static_cast<char>(op == "upper" ? std::toupper(static_cast<unsigned char>(c))
                                                              : std::tolower(static_cast<unsigned char>(c)));
        return s;
    }
    if (op == "trim") {
        need(1);
        std::string s = need_string(args[0]);
        auto sp = [](unsigned char c) { return std::isspace(c); };
        while (!s.empty() && sp(s.front())) s.erase(s.begin());
        while (!s.empty() && sp(s.back())) s.pop_back();
        return s;
    }
    if (op == "word_count") {
        need(1);
        std::istringstream in(need_string(args[0]));
        std::size_t n = 0;
        for (std::string w; in >> w;) ++n;
        return n;
    }
    if (op == "concat") {
        const bool arrays = !args.empty() && std::all_of(args.begin(), args.end(), [](const json& a) { return a.is_array(); });
        if (arrays) {
            json out = json::array();
            for (const auto& a : args) out.insert(out.end(), a.begin(), a.end());
            return out;
        }
        std::string out;
        for (const auto& a : args) out += stringify(a);
        return out;
    }
    if (op == "add" || op == "multiply") {
        const bool ints = std::all_of(args.begin(), args.end(), [](const json& a) { return a.is_number_integer(); });
        if (ints) {
            long long acc = op == "add" ? 0 : 1;
            for (const auto& a : args) acc = op == "add" ? acc + a.get<long long>() : acc * a.get<long long>();
            return acc;
        }
        double acc = op == "add" ? 0.0 : 1.0;
        for (const auto& a : args) acc = op == "add" ? acc + as_number(a, op) : acc * as_number(a, op);
        return acc;
    }
    if (op == "not") {
        need(1);
        if (!args[0].is_boolean()) exec_failed("$op not expects a boolean");
        return !args[0].get<bool>();
    }
    if (op == "equals") {
        need(2);
        return args[0] == args[1];
    }
    exec_failed("unknown $op '" + op + "'");
}

}  // namespace

json extract_path(const json& value, const std::string& path, const std::string& what) {
    const json* cur = &value;
    std::size_t i = 0;
    while (i < path.size()) {
        if (path[i] != '.') exec_failed("bad path '" + path + "'");
        const auto next = path.find('.', i + 1);
        const std::string seg = path.substr(i + 1, next == std::string::npos ? std::string::npos : next - i - 1);
        const std::string shown = path.substr(0, next);
        if (cur->is_object()) {
            auto it = cur->find(seg);
            if (it == cur->end()) exec_failed("path " + shown + " not found in " + what, json{{"path", shown}});
            cur = &*it;
        } else if (cur->is_array() && !seg.empty() && std::all_of(seg.begin(), seg.end(), ::isdigit)) {
            const std::size_t idx = std::stoul(seg);
            if (idx >= cur->size()) exec_failed("index " + shown + " out of range in " + what, json{{"path", shown}});
            cur = &(*cur)[idx];
        } else {
            exec_failed("path " + shown + " cannot be followed in " + what, json{{"path", shown}});
        }
        if (next == std::string::npos) break;
        i = next;
    }
    return *cur;
}

std::vector<std::string> template_references(const json& tmpl) {
    std::vector<std::string> out;
    collect_references(tmpl, out);
    return out;
}

std::optional<json> evaluate_template(const json& tmpl, const Scope& scope) {
    if (tmpl.is_string()) {
        const std::string& s = tmpl.get_ref<const std::string&>();
        if (auto ref = whole_reference(s)) return lookup(*ref, scope);
        if (s.find('$') == std::string::npos) return std::optional<json>(std::in_place, tmpl);
        return json(interpolate(s, scope));
    }
    if (tmpl.is_object()) {
        if (tmpl.contains("$op")) {
            if (!tmpl["$op"].is_string()) exec_failed("$op must be a string");
            std::vector<json> args;
            if (tmpl.contains("args")) {
                if (!tmpl["args"].is_array()) exec_failed("$op args must be a list");
                for (const auto& a : tmpl["args"]) args.push_back(evaluate_template(a, scope).value_or(json()));
            }
            return apply_op(tmpl["$op"].get<std::string>(), args);
        }
        json out = json::object();
        for (const auto& [k, v] : tmpl.items()) {
            if (auto ev = evaluate_template(v, scope)) out[k] = std::move(*ev);
        }
        return out;
    }
    if (tmpl.is_array()) {
        json out = json::array();
        for (const auto& v : tmpl) out.push_back(evaluate_template(v, scope).value_or(json()));
        return out;
    }
    return std::optional<json>(std::in_place, tmpl);
}

// --- plan parsing --------------------------------------------------------------

namespace {

std::string optional_as(const json& node, const std::string& path) {
    if (!node.contains("as")) return "";
    if (!node["as"].is_string() || !parse_reference(node["as"].get<std::string>()) ||
        node["as"].get<std::string>().find('.') != std::string::npos) {
        plan_invalid(path + ".as", "must be a variable name");
    }
    return node["as"].get<std::string>();
}

CallStep parse_call(const json& node, const std::string& path) {
    if (!node.is_object() || !node.contains("call") || !node["call"].is_string()) {
        plan_invalid(path + ".call", "missing tool name");
    }
    CallStep c;
    c.tool = node["call"].get<std::string>();
    if (node.contains("arguments")) {
        if (!node["arguments"].is_object()) plan_invalid(path + ".arguments", "must be an object");
        c.arguments = node["arguments"];
    }
    c.as = optional_as(node, path);
    return c;
}

Step parse_step(const json& node, const std::string& path) {
    if (!node.is_object()) plan_invalid(path, "step must be an object");
    if (node.contains("call")) return parse_call(node, path);
    if (node.contains("parallel")) {
        const json& list = node["parallel"];
        if (!list.is_array() || list.empty()) plan_invalid(path + ".parallel", "needs at least one call");
        ParallelStep p;
        for (std::size_t i = 0; i < list.size(); ++i) p.calls.push_back(parse_call(list[i], path + ".parallel[" + std::to_string(i) + "]"));
        p.as = optional_as(node, path);
        return p;
    }
    if (node.contains("loop")) {
        const json& l = node["loop"];
        const std::string lp = path + ".loop";
        if (!l.is_object()) plan_invalid(lp, "must be an object");
        LoopStep loop;
        if (!l.contains("max_iterations") || !l["max_iterations"].is_number_integer()) {
            plan_invalid(lp + ".max_iterations", "required integer");
        }
        loop.max_iterations = l["max_iterations"].get<int>();
        const json agent = l.value("agent", json::object());
        if (!agent.is_object()) plan_invalid(lp + ".agent", "must be an object");
        loop.backend = agent.value("backend", std::string());
        loop.goal = agent.value("goal", std::string());
        if (agent.contains("temperature") && agent["temperature"].is_number()) loop.temperature = agent["temperature"].get<double>();
        if (l.contains("tools")) {
            if (!l["tools"].is_array()) plan_invalid(lp + ".tools", "must be a list of names");
            for (const auto& t : l["tools"]) {
                if (!t.is_string()) plan_invalid(lp + ".tools", "must be a list of names");
                loop.tools.push_back(t.get<std::string>());
            }
        }
        loop.as = optional_as(l, lp);
        if (loop.as.empty()) loop.as = optional_as(node, path);
        return loop;
    }
    if (node.contains("bind")) {
        const json& b = node["bind"];
        if (!b.is_object() || b.empty()) plan_invalid(path + ".bind", "must map variable names to paths");
        BindStep bind;
        for (const auto& [k, v] : b.items()) {
            if (!parse_reference(k) || k.find('.') != std::string::npos) plan_invalid(path + ".bind." + k, "bad variable name");
            bind.bindings.emplace_back(k, v);
        }
        return bind;
    }
    plan_invalid(path, "unknown step kind (expected call, parallel, loop or bind)");
}

bool is_path_binding(const json& tmpl) {
    return tmpl.is_string() && !tmpl.get_ref<const std::string&>().empty() && tmpl.get_ref<const std::string&>()[0] == '.';
}

json call_to_json(const CallStep& c) {
    json j{{"call", c.tool}, {"arguments", c.arguments}};
    if (!c.as.empty()) j["as"] = c.as;
    return j;
}

}  // namespace

json to_json(const Step& step) {
    return std::visit(
        [](const auto& s) -> json {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, CallStep>) {
                return call_to_json(s);
            } else if constexpr (std::is_same_v<T, ParallelStep>) {
                json list = json::array();
                for (const auto& c : s.calls) list.push_back(call_to_json(c));
                json j{{"parallel", list}};
                if (!s.as.empty()) j["as"] = s.as;
                return j;
            } else if constexpr (std::is_same_v<T, LoopStep>) {
                json agent{{"backend", s.backend}, {"goal", s.goal}};
                if (s.temperature) agent["temperature"] = *s.temperature;
                json l{{"agent", agent}, {"max_iterations", s.max_iterations}, {"tools", s.tools}};
                if (!s.as.empty()) l["as"] = s.as;
                return json{{"loop", l}};
            } else {
                json b = json::object();
                for (const auto& [k, v] : s.bindings) b[k] = v;
                return json{{"bind", b}};
            }
        },
        step);
}

CompositePlan parse_plan(const json& doc, const ToolSpec* fallback_spec) {
    if (!doc.is_object()) plan_invalid("", "plan must be an object");
    CompositePlan plan;
    if (doc.contains("spec")) {
        try {
            plan.spec = tool_spec_from_json(doc["spec"]);
        } catch (const ToolFailure& f) {
            const std::string inner = f.error().detail.is_object() ? f.error().detail.value("path", "") : "";
            plan_invalid("spec" + (inner.empty() ? "" : "." + inner), f.error().message);
        }
    } else if (fallback_spec) {
        plan.spec = *fallback_spec;
    } else {
        plan_invalid("spec", "missing");
    }
    if (!doc.contains("steps") || !doc["steps"].is_array()) plan_invalid("steps", "must be a list");
    for (std::size_t i = 0; i < doc["steps"].size(); ++i) {
        plan.steps.push_back(parse_step(doc["steps"][i], "steps[" + std::to_string(i) + "]"));
    }
    if (doc.contains("output")) plan.output = doc["output"];
    if (plan.steps.empty() && !plan.output) plan_invalid("output", "a plan without steps needs an output template");
    return plan;
}

json to_json(const CompositePlan& plan) {
    json steps = json::array();
    for (const auto& s : plan.steps) steps.push_back(to_json(s));
    json j{{"spec", to_json(plan.spec)}, {"steps", steps}};
    if (plan.output) j["output"] = *plan.output;
    return j;
}

void check_plan(const CompositePlan& plan, const Registry& registry) {
    std::set<std::string> bound;
    for (const auto& p : plan.spec.parameters) bound.insert(p.name);
    auto check_refs = [&](const json& tmpl, const std::string& path) {
        for (const auto& var : template_references(tmpl)) {
            if (!bound.count(var)) plan_invalid(path, "unbound variable $" + var, json{{"variable", var}});
        }
    };
    auto check_tool = [&](const std::string& tool, const std::string& path) {
        if (!registry.contains(tool)) plan_invalid(path, "unknown tool '" + tool + "'", json{{"tool", tool}});
    };
    auto bind_name = [&](const std::string& name, const std::string& path) {
        if (name.empty()) return;
        if (name == "last") plan_invalid(path, "'last' is reserved");
        bound.insert(name);
    };
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        const std::string path = "steps[" + std::to_string(i) + "]";
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, CallStep>) {
                    check_tool(s.tool, path + ".call");
                    check_refs(s.arguments, path + ".arguments");
                    bind_name(s.as, path + ".as");
                    bound.insert("last");
                } else if constexpr (std::is_same_v<T, ParallelStep>) {
                    for (std::size_t k = 0; k < s.calls.size(); ++k) {
                        const std::string cp = path + ".parallel[" + std::to_string(k) + "]";
                        check_tool(s.calls[k].tool, cp + ".call");
                        check_refs(s.calls[k].arguments, cp + ".arguments");
                    }
                    bind_name(s.as, path + ".as");
                    bound.insert("last");
                } else if constexpr (std::is_same_v<T, LoopStep>) {
                    if (s.max_iterations < 1) plan_invalid(path + ".loop.max_iterations", "must be at least 1");
                    for (const auto& t : s.tools) check_tool(t, path + ".loop.tools");
                    check_refs(json(s.goal), path + ".loop.agent.goal");
                    bind_name(s.as, path + ".loop.as");
                    bound.insert("last");
                } else {
                    for (const auto& [name, tmpl] : s.bindings) {
                        const std::string bp = path + ".bind." + name;
                        if (is_path_binding(tmpl)) {
                            if (!bound.count("last")) plan_invalid(bp, "path binding before any result");
                        } else {
                            check_refs(tmpl, bp);
                        }
                    }
                    for (const auto& [name, _] : s.bindings) bind_name(name, path + ".bind." + name);
                }
            },
            plan.steps[i]);
    }
    if (plan.output) check_refs(*plan.output, "output");
}

// --- execution -----------------------------------------------------------------

json parallel_entry(const ToolResult& result) {
    if (result.ok()) return json{{"status", "ok"}, {"payload", result.payload}};
    return json{{"status", "error"}, {"error", to_json(result.error.value_or(ToolError{}))}};
}

std::vector<ToolResult> execute_parallel(const std::vector<ToolCall>& calls, const ToolContext& ctx,
                                         std::size_t width) {
    std::vector<ToolResult> results(calls.size());
    if (calls.empty()) return results;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < calls.size(); i = next++) {
            try {
                results[i] = ctx.call_tool(calls[i]);
            } catch (const ToolFailure& f) {
                results[i] = ToolResult::failure(f.error());
            } catch (const std::exception& ex) {
                results[i] = ToolResult::failure(ErrorCode::ExecutionFailed, ex.what());
            }
        }
    };
    const std::size_t n = std::min(std::max<std::size_t>(width, 1), calls.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    return results;
}

namespace {

std::vector<ToolCall> parse_agent_calls(const std::string& reply) {
    json j = extract_json(reply);
    if (j.is_discarded()) throw std::invalid_argument("reply is not JSON");
    std::vector<ToolCall> calls;
    auto one = [&](const json& item) {
        try {
            calls.push_back(tool_call_from_json(item));
        } catch (const ToolFailure& f) {
            throw std::invalid_argument(std::string("not a tool call: ") + f.what());
        }
    };
    if (j.is_array()) {
        if (j.empty()) throw std::invalid_argument("empty list of calls");
        for (const auto& item : j) one(item);
    } else {
        one(j);
    }
    return calls;
}

}  // namespace

json execute_loop(const LoopStep& loop, const Scope& scope, const ToolContext& ctx, BackendRegistry& backends) {
    if (loop.max_iterations < 1) exec_failed("loop needs max_iterations >= 1");
    const std::string goal = evaluate_template(json(loop.goal), scope).value_or(json("")).get<std::string>();

    std::ostringstream tools;
    const auto specs = ctx.registry().list_tools();
    for (const auto& spec : specs) {
        if (!loop.tools.empty() && std::find(loop.tools.begin(), loop.tools.end(), spec.name) == loop.tools.end()) continue;
        tools << "- " << spec.name << ": " << spec.description << "\n";
    }

    GenerationSettings gs;
    if (loop.temperature) gs.temperature = *loop.temperature;

    json trace = json::array();
    json last = nullptr;
    for (int iteration = 1; iteration <= loop.max_iterations; ++iteration) {
        std::ostringstream prompt;
        prompt << "TASK: agent_loop\n"
               << "Goal: " << goal << "\n"
               << "Iteration: " << iteration << " of " << loop.max_iterations << "\n"
               << "Available tools:\n" << tools.str()
               << "Trace so far:\n" << trace.dump() << "\n"
               << "Reply with one JSON tool call {\"name\": ..., \"arguments\": {...}} or a JSON list of them. "
               << "When finished, call \"__stop__\" with the final answer as its arguments.\n";
        std::vector<ToolCall> calls;
        std::string reply = backends.generate(loop.backend, prompt.str(), gs);
        try {
            calls = parse_agent_calls(reply);
        } catch (const std::invalid_argument& first) {
            reply = backends.generate(loop.backend,
                                      prompt.str() + "\nYour previous reply could not be parsed: " + first.what() +
                                          "\nReply again with a valid tool call.",
                                      gs);
            try {
                calls = parse_agent_calls(reply);
            } catch (const std::invalid_argument& second) {
                exec_failed(std::string("agent output is not a tool call after retry: ") + second.what(),
                            json{{"iteration", iteration}, {"reply", reply}});
            }
        }
        for (const auto& call : calls) {
            if (call.name == "__stop__") {
                return json{{"result", call.arguments}, {"stopped", true}, {"iterations", iteration - 1}, {"trace", trace}};
            }
        }
        for (const auto& call : calls) {
            json entry{{"iteration", iteration}, {"tool", call.name}, {"arguments", call.arguments}};
            ToolResult r;
            if (!loop.tools.empty() && std::find(loop.tools.begin(), loop.tools.end(), call.name) == loop.tools.end()) {
                r = ToolResult::failure(ErrorCode::ToolNotFound, "tool '" + call.name + "' is not offered in this loop");
            } else {
                r = ctx.call_tool(call);
            }
            entry.update(parallel_entry(r));
            if (r.ok()) last = r.payload;
            trace.push_back(std::move(entry));
        }
    }
    return json{{"result", last}, {"stopped", false}, {"iterations", loop.max_iterations}, {"trace", trace}};
}

ProgramHandler::ProgramHandler(CompositePlan plan, BackendRegistry* backends, std::size_t parallel_width)
    : plan_(std::move(plan)), backends_(backends), width_(parallel_width) {}

json ProgramHandler::run(const json& arguments, const ToolContext& ctx) {
    Scope scope;
    for (const auto& p : plan_.spec.parameters) {
        scope[p.name] = arguments.contains(p.name) ? arguments[p.name] : json(json::value_t::discarded);
    }
    auto call_args = [&](const CallStep& c) {
        return ToolCall{c.tool, evaluate_template(c.arguments, scope).value_or(json::object())};
    };
    auto set_result = [&](const std::string& as, json value) {
        if (!as.empty()) scope[as] = value;
        scope["last"] = std::move(value);
    };

    for (const auto& step : plan_.steps) {
        if (const auto* c = std::get_if<CallStep>(&step)) {
            ToolResult r = ctx.call_tool(call_args(*c));
            if (!r.ok()) throw ToolFailure(r.error.value_or(ToolError{}));
            set_result(c->as, std::move(r.payload));
        } else if (const auto* p = std::get_if<ParallelStep>(&step)) {
            std::vector<ToolCall> calls;
            for (const auto& c : p->calls) calls.push_back(call_args(c));
            json out = json::array();
            for (const auto& r : execute_parallel(calls, ctx, width_)) out.push_back(parallel_entry(r));
            set_result(p->as, std::move(out));
        } else if (const auto* l = std::get_if<LoopStep>(&step)) {
            if (!backends_) exec_failed("loop step needs an agent backend but none is configured");
            set_result(l->as, execute_loop(*l, scope, ctx, *backends_));
        } else if (const auto* b = std::get_if<BindStep>(&step)) {
            Scope updates;
            for (const auto& [name, tmpl] : b->bindings) {
                if (is_path_binding(tmpl)) {
                    updates[name] = extract_path(scope.at("last"), tmpl.get<std::string>(), "$last");
                } else {
                    updates[name] = evaluate_template(tmpl, scope).value_or(json(json::value_t::discarded));
                }
            }
            for (auto& [k, v] : updates) scope[k] = std::move(v);
        }
    }
    if (plan_.output) return evaluate_template(*plan_.output, scope).value_or(json());
    return scope.count("last") ? scope["last"] : json();
}

std::string compose(Registry& registry, const json& plan_doc) {
    CompositePlan plan = parse_plan(plan_doc);
    check_plan(plan, registry);
    ToolEntry entry;
    entry.spec = plan.spec;
    entry.origin = Origin::Composed;
    entry.handler_ref = "program";
    entry.handler_config = to_json(plan);
    return registry.register_tool(std::move(entry));
}

}  // namespace toolhub
