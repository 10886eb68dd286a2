#include "toolhub/protocol.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <utility>

namespace toolhub {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 9> kErrorNames{{
    {ErrorCode::ToolNotFound, "ToolNotFound"},
    {ErrorCode::SpecInvalid, "SpecInvalid"},
    {ErrorCode::MissingRequired, "MissingRequired"},
    {ErrorCode::UnknownArgument, "UnknownArgument"},
    {ErrorCode::TypeMismatch, "TypeMismatch"},
    {ErrorCode::ExecutionFailed, "ExecutionFailed"},
    {ErrorCode::Timeout, "Timeout"},
    {ErrorCode::RemoteUnavailable, "RemoteUnavailable"},
    {ErrorCode::ExpertUnavailable, "ExpertUnavailable"},
}};

[[noreturn]] void spec_invalid(const std::string& path, const std::string& what) {
    std::string message = path.empty() ? what : path + ": " + what;
    throw ToolFailure(ErrorCode::SpecInvalid, std::move(message), json{{"path", path}});
}

bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
    auto digit = [](char c) { return c >= '0' && c <= '9'; };
    if (!alpha(s.front())) return false;
    return std::all_of(s.begin(), s.end(), [&](char c) { return alpha(c) || digit(c); });
}

ValueType::Kind primitive_kind(std::string_view name, bool* ok) {
    *ok = true;
    if (name == "string") return ValueType::Kind::String;
    if (name == "integer") return ValueType::Kind::Integer;
    if (name == "number") return ValueType::Kind::Number;
    if (name == "boolean") return ValueType::Kind::Boolean;
    if (name == "object") return ValueType::Kind::Object;
    *ok = false;
    return ValueType::Kind::String;
}

std::string field_path(const std::string& base, const std::string& field) {
    return base + "." + field;
}

// JSON-Schema fragment ({"type": ..., "items": ..., "properties": ...}) to a
// canonical compact schema.
json schema_from_json_schema(const json& node, const std::string& path);

json normalize_compact(const json& schema, const std::string& path) {
    if (schema.is_string()) {
        auto type = ValueType::parse(schema.get<std::string>());
        if (!type) spec_invalid(path, "unknown type '" + schema.get<std::string>() + "'");
        return type->name();
    }
    if (schema.is_array()) {
        if (schema.size() != 1) spec_invalid(path, "array schema must have exactly one element schema");
        json element = normalize_compact(schema[0], path + "[0]");
        if (element.is_string()) return "array<" + element.get<std::string>() + ">";
        return json::array({element});
    }
    if (schema.is_object()) {
        if (schema.contains("type") && schema["type"] == "object" && schema.contains("properties") &&
            schema["properties"].is_object()) {
            return schema_from_json_schema(schema, path);
        }
        json record = json::object();
        for (const auto& [field, sub] : schema.items()) {
            if (field.empty()) spec_invalid(path, "empty field name");
            record[field] = normalize_compact(sub, field_path(path, field));
        }
        return record;
    }
    spec_invalid(path, "schema must be a type name, an object or a one-element array");
}

json schema_from_json_schema(const json& node, const std::string& path) {
    if (!node.is_object() || !node.contains("type") || !node["type"].is_string()) {
        spec_invalid(path, "expected an object with a string 'type'");
    }
    const std::string type = node["type"].get<std::string>();
    if (type == "object") {
        if (!node.contains("properties")) return "object";
        if (!node["properties"].is_object()) spec_invalid(path + ".properties", "must be an object");
        json record = json::object();
        for (const auto& [field, sub] : node["properties"].items()) {
            record[field] = schema_from_json_schema(sub, path + ".properties." + field);
        }
        return record;
    }
    if (type == "array") {
        if (!node.contains("items")) spec_invalid(path + ".items", "array schema requires 'items'");
        json element = schema_from_json_schema(node["items"], path + ".items");
        if (element.is_string()) return "array<" + element.get<std::string>() + ">";
        return json::array({element});
    }
    bool ok = false;
    primitive_kind(type, &ok);
    if (!ok) spec_invalid(path + ".type", "unknown type '" + type + "'");
    return type;
}

// Parameter type from a JSON-Schema property (nested spec form).
ValueType param_type_from_json_schema(const json& node, const std::string& path) {
    if (!node.is_object() || !node.contains("type") || !node["type"].is_string()) {
        spec_invalid(path + ".type", "missing or non-string type");
    }
    const std::string type = node["type"].get<std::string>();
    if (type == "array") {
        if (!node.contains("items")) return ValueType::array_of(ValueType::object());
        return ValueType::array_of(param_type_from_json_schema(node["items"], path + ".items"));
    }
    auto parsed = ValueType::parse(type);
    if (!parsed) spec_invalid(path + ".type", "type '" + type + "' is not one of string, integer, number, boolean, array<T>, object");
    return *parsed;
}

std::vector<ParameterSpec> parse_flat_parameters(const json& params) {
    if (!params.is_array()) spec_invalid("parameters", "must be a list");
    std::vector<ParameterSpec> out;
    std::set<std::string> seen;
    static const std::set<std::string> allowed{"name", "type", "description", "required"};
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string base = "parameters[" + std::to_string(i) + "]";
        const json& p = params[i];
        if (!p.is_object()) spec_invalid(base, "must be an object");
        for (const auto& [key, _] : p.items()) {
            if (!allowed.count(key)) spec_invalid(base + "." + key, "unknown parameter field");
        }
        ParameterSpec ps;
        if (!p.contains("name") || !p["name"].is_string() || !is_identifier(p["name"].get<std::string>())) {
            spec_invalid(base + ".name", "must be an identifier string");
        }
        ps.name = p["name"].get<std::string>();
        if (!seen.insert(ps.name).second) spec_invalid(base + ".name", "duplicate parameter name '" + ps.name + "'");
        if (!p.contains("type") || !p["type"].is_string()) spec_invalid(base + ".type", "missing or non-string type");
        auto type = ValueType::parse(p["type"].get<std::string>());
        if (!type) {
            spec_invalid(base + ".type", "type '" + p["type"].get<std::string>() +
                                             "' is not one of string, integer, number, boolean, array<T>, object");
        }
        ps.type = *type;
        if (p.contains("description")) {
            if (!p["description"].is_string()) spec_invalid(base + ".description", "must be a string");
            ps.description = p["description"].get<std::string>();
        }
        if (p.contains("required")) {
            if (!p["required"].is_boolean()) spec_invalid(base + ".required", "must be a boolean");
            ps.required = p["required"].get<bool>();
        }
        out.push_back(std::move(ps));
    }
    return out;
}

std::vector<ParameterSpec> parse_nested_parameters(const json& node) {
    const std::string base = "parameter";
    if (!node.is_object()) spec_invalid(base, "must be an object");
    if (node.contains("type") && node["type"] != "object") spec_invalid(base + ".type", "must be \"object\"");
    std::vector<ParameterSpec> out;
    if (node.contains("properties")) {
        const json& props = node["properties"];
        if (!props.is_object()) spec_invalid(base + ".properties", "must be an object");
        for (const auto& [name, prop] : props.items()) {
            const std::string path = base + ".properties." + name;
            if (!is_identifier(name)) spec_invalid(path, "parameter name must be an identifier");
            ParameterSpec ps;
            ps.name = name;
            ps.type = param_type_from_json_schema(prop, path);
            if (prop.contains("description")) {
                if (!prop["description"].is_string()) spec_invalid(path + ".description", "must be a string");
                ps.description = prop["description"].get<std::string>();
            }
            if (prop.contains("required") && prop["required"].is_boolean()) ps.required = prop["required"].get<bool>();
            out.push_back(std::move(ps));
        }
    }
    if (node.contains("required")) {
        const json& req = node["required"];
        if (!req.is_array()) spec_invalid(base + ".required", "must be a list");
        for (std::size_t i = 0; i < req.size(); ++i) {
            const std::string path = base + ".required[" + std::to_string(i) + "]";
            if (!req[i].is_string()) spec_invalid(path, "must be a string");
            auto it = std::find_if(out.begin(), out.end(), [&](const ParameterSpec& p) { return p.name == req[i]; });
            if (it == out.end()) spec_invalid(path, "names no declared property");
            it->required = true;
        }
    }
    return out;
}

ConformanceResult mismatch(std::string path, std::string reason) {
    return ConformanceResult{false, std::move(path), std::move(reason)};
}

ConformanceResult check_conformance(const json& value, const json& schema, const std::string& path) {
    if (schema.is_string()) {
        auto type = ValueType::parse(schema.get<std::string>());
        if (!type) return mismatch(path, "malformed schema");
        if (type->kind() == ValueType::Kind::Array) {
            if (!value.is_array()) return mismatch(path, "expected array, got " + json_type_name(value));
            const json element_schema = type->element().name();
            for (std::size_t i = 0; i < value.size(); ++i) {
                auto r = check_conformance(value[i], element_schema, path + "[" + std::to_string(i) + "]");
                if (!r.ok) return r;
            }
            return {};
        }
        if (!type->matches(value)) {
            return mismatch(path, "expected " + type->name() + ", got " + json_type_name(value));
        }
        return {};
    }
    if (schema.is_array()) {
        if (!value.is_array()) return mismatch(path, "expected array, got " + json_type_name(value));
        for (std::size_t i = 0; i < value.size(); ++i) {
            auto r = check_conformance(value[i], schema[0], path + "[" + std::to_string(i) + "]");
            if (!r.ok) return r;
        }
        return {};
    }
    if (!value.is_object()) return mismatch(path, "expected object, got " + json_type_name(value));
    for (const auto& [field, sub] : schema.items()) {
        const std::string sub_path = path + "." + field;
        auto it = value.find(field);
        if (it == value.end()) return mismatch(sub_path, "missing field");
        auto r = check_conformance(*it, sub, sub_path);
        if (!r.ok) return r;
    }
    for (const auto& [field, _] : value.items()) {
        if (!schema.contains(field)) return mismatch(path + "." + field, "undeclared field");
    }
    return {};
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(ErrorCode code) {
    for (const auto& [c, name] : kErrorNames) {
        if (c == code) return name;
    }
    return "ExecutionFailed";
}

std::optional<ErrorCode> error_code_from_string(std::string_view name) {
    for (const auto& [c, n] : kErrorNames) {
        if (n == name) return c;
    }
    return std::nullopt;
}

json to_json(const ToolError& err) {
    json j{{"code", std::string(to_string(err.code))}, {"message", err.message}};
    if (!err.detail.is_null()) j["detail"] = err.detail;
    return j;
}

ToolError tool_error_from_json(const json& j) {
    ToolError err;
    auto code = j.is_object() && j.contains("code") && j["code"].is_string()
                    ? error_code_from_string(j["code"].get<std::string>())
                    : std::nullopt;
    err.code = code.value_or(ErrorCode::ExecutionFailed);
    err.message = j.value("message", std::string{});
    if (err.message.empty()) err.message = "unspecified error";
    if (j.contains("detail")) err.detail = j["detail"];
    return err;
}

ToolFailure::ToolFailure(ToolError err) : std::runtime_error(err.message), error_(std::move(err)) {
    if (error_.message.empty()) error_.message = std::string(to_string(error_.code));
}

ToolFailure::ToolFailure(ErrorCode code, std::string message, json detail)
    : ToolFailure(ToolError{code, std::move(message), std::move(detail)}) {}

// ---------------------------------------------------------------------------

std::optional<ValueType> ValueType::parse(std::string_view text) {
    int depth = 0;
    constexpr std::string_view prefix = "array<";
    while (text.size() > prefix.size() && text.substr(0, prefix.size()) == prefix && text.back() == '>') {
        text = text.substr(prefix.size(), text.size() - prefix.size() - 1);
        ++depth;
    }
    bool ok = false;
    Kind base = primitive_kind(text, &ok);
    if (!ok) return std::nullopt;
    ValueType t(base);
    t.depth_ = depth;
    return t;
}

ValueType ValueType::array_of(const ValueType& element) {
    ValueType t = element;
    ++t.depth_;
    return t;
}

ValueType ValueType::element() const {
    ValueType t = *this;
    if (t.depth_ > 0) --t.depth_;
    return t;
}

bool ValueType::matches(const json& value) const {
    if (depth_ > 0) {
        if (!value.is_array()) return false;
        const ValueType inner = element();
        return std::all_of(value.begin(), value.end(), [&](const json& v) { return inner.matches(v); });
    }
    switch (base_) {
        case Kind::String: return value.is_string();
        case Kind::Integer: return value.is_number_integer();
        case Kind::Number: return value.is_number();
        case Kind::Boolean: return value.is_boolean();
        case Kind::Object: return value.is_object();
        case Kind::Array: return value.is_array();
    }
    return false;
}

std::string ValueType::name() const {
    std::string base;
    switch (base_) {
        case Kind::String: base = "string"; break;
        case Kind::Integer: base = "integer"; break;
        case Kind::Number: base = "number"; break;
        case Kind::Boolean: base = "boolean"; break;
        case Kind::Object: base = "object"; break;
        case Kind::Array: base = "array"; break;
    }
    std::string out;
    for (int i = 0; i < depth_; ++i) out += "array<";
    out += base;
    out.append(static_cast<std::size_t>(depth_), '>');
    return out;
}

std::string json_type_name(const json& value) {
    switch (value.type()) {
        case json::value_t::null: return "null";
        case json::value_t::boolean: return "boolean";
        case json::value_t::number_integer:
        case json::value_t::number_unsigned: return "integer";
        case json::value_t::number_float: return "number";
        case json::value_t::string: return "string";
        case json::value_t::array: return "array";
        case json::value_t::object: return "object";
        default: return "binary";
    }
}

// ---------------------------------------------------------------------------

const ParameterSpec* ToolSpec::find_parameter(std::string_view param) const {
    for (const auto& p : parameters) {
        if (p.name == param) return &p;
    }
    return nullptr;
}

bool is_valid_tool_name(std::string_view name) {
    if (name.empty() || name.size() > 128) return false;
    if (name.front() < 'a' || name.front() > 'z') return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
}

json normalize_return_schema(const json& schema, const std::string& path) {
    return normalize_compact(schema, path);
}

ToolSpec tool_spec_from_json(const json& doc) {
    if (!doc.is_object()) spec_invalid("", "spec document must be a JSON object");
    ToolSpec spec;

    if (!doc.contains("name") || !doc["name"].is_string()) spec_invalid("name", "missing or non-string name");
    spec.name = doc["name"].get<std::string>();
    if (!is_valid_tool_name(spec.name)) spec_invalid("name", "'" + spec.name + "' does not match [a-z][a-z0-9_]* (max 128)");

    if (!doc.contains("description") || !doc["description"].is_string()) {
        spec_invalid("description", "missing or non-string description");
    }
    spec.description = doc["description"].get<std::string>();

    if (doc.contains("parameters") && doc.contains("parameter")) {
        spec_invalid("parameter", "both 'parameters' and 'parameter' given");
    }
    if (doc.contains("parameters")) {
        spec.parameters = parse_flat_parameters(doc["parameters"]);
    } else if (doc.contains("parameter")) {
        spec.parameters = parse_nested_parameters(doc["parameter"]);
    }

    if (doc.contains("return_schema")) spec.return_schema = normalize_return_schema(doc["return_schema"]);

    if (doc.contains("tags")) {
        const json& tags = doc["tags"];
        if (!tags.is_array()) spec_invalid("tags", "must be a list of strings");
        for (std::size_t i = 0; i < tags.size(); ++i) {
            if (!tags[i].is_string()) spec_invalid("tags[" + std::to_string(i) + "]", "must be a string");
            spec.tags.push_back(tags[i].get<std::string>());
        }
    }

    if (doc.contains("settings")) {
        if (!doc["settings"].is_object()) spec_invalid("settings", "must be an object");
        spec.settings = doc["settings"];
    }
    static const std::set<std::string> known{"name", "description", "parameters", "parameter",
                                             "return_schema", "tags", "settings"};
    for (const auto& [key, value] : doc.items()) {
        if (!known.count(key) && !spec.settings.contains(key)) spec.settings[key] = value;
    }
    return spec;
}

ToolSpec parse_tool_spec(std::string_view text) {
    json doc = json::parse(text.begin(), text.end(), nullptr, false);
    if (doc.is_discarded()) spec_invalid("", "spec document is not valid JSON");
    return tool_spec_from_json(doc);
}

json to_json(const ToolSpec& spec) {
    json params = json::array();
    for (const auto& p : spec.parameters) {
        params.push_back({{"name", p.name},
                          {"type", p.type.name()},
                          {"description", p.description},
                          {"required", p.required}});
    }
    return json{{"name", spec.name},
                {"description", spec.description},
                {"parameters", std::move(params)},
                {"return_schema", spec.return_schema},
                {"tags", spec.tags},
                {"settings", spec.settings}};
}

std::string serialize_tool_spec(const ToolSpec& spec) { return to_json(spec).dump(); }

ConformanceResult conforms_to_return_schema(const json& value, const json& schema) {
    return check_conformance(value, schema, "");
}

// ---------------------------------------------------------------------------

ToolCall tool_call_from_json(const json& j) {
    if (!j.is_object()) spec_invalid("", "tool call must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (key != "name" && key != "arguments") spec_invalid(key, "unexpected key; a tool call has exactly 'name' and 'arguments'");
    }
    if (!j.contains("name")) spec_invalid("name", "missing key");
    if (!j.contains("arguments")) spec_invalid("arguments", "missing key");
    if (!j["name"].is_string() || j["name"].get<std::string>().empty()) spec_invalid("name", "must be a non-empty string");
    if (!j["arguments"].is_object()) spec_invalid("arguments", "must be an object");
    return ToolCall{j["name"].get<std::string>(), j["arguments"]};
}

ToolCall parse_tool_call(std::string_view text) {
    json j = json::parse(text.begin(), text.end(), nullptr, false);
    if (j.is_discarded()) spec_invalid("", "tool call is not valid JSON");
    return tool_call_from_json(j);
}

json to_json(const ToolCall& call) { return json{{"name", call.name}, {"arguments", call.arguments}}; }

json validate_arguments(const ToolCall& call, const ToolSpec& spec) {
    if (!call.arguments.is_object()) {
        throw ToolFailure(ErrorCode::TypeMismatch, "arguments must be an object",
                          json{{"param", nullptr}, {"expected", "object"}, {"got", json_type_name(call.arguments)}});
    }
    for (const auto& [key, _] : call.arguments.items()) {
        if (!spec.find_parameter(key)) {
            throw ToolFailure(ErrorCode::UnknownArgument, "unknown argument '" + key + "'", json{{"argument", key}});
        }
    }
    json missing = json::array();
    for (const auto& p : spec.parameters) {
        if (p.required && !call.arguments.contains(p.name)) missing.push_back(p.name);
    }
    if (!missing.empty()) {
        std::string names;
        for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m.get<std::string>();
        throw ToolFailure(ErrorCode::MissingRequired, "missing required argument(s): " + names, missing);
    }
    for (const auto& p : spec.parameters) {
        auto it = call.arguments.find(p.name);
        if (it == call.arguments.end()) continue;
        if (!p.type.matches(*it)) {
            const std::string got = json_type_name(*it);
            throw ToolFailure(ErrorCode::TypeMismatch,
                              "argument '" + p.name + "' expects " + p.type.name() + ", got " + got,
                              json{{"param", p.name}, {"expected", p.type.name()}, {"got", got}});
        }
    }
    return call.arguments;
}

// ---------------------------------------------------------------------------

ToolResult ToolResult::success(json payload, double duration_ms) {
    ToolResult r;
    r.status = ResultStatus::Ok;
    r.payload = std::move(payload);
    r.duration_ms = duration_ms;
    return r;
}

ToolResult ToolResult::failure(ToolError err, double duration_ms) {
    ToolResult r;
    r.status = ResultStatus::Error;
    if (err.message.empty()) err.message = std::string(to_string(err.code));
    r.error = std::move(err);
    r.duration_ms = duration_ms;
    return r;
}

ToolResult ToolResult::failure(ErrorCode code, std::string message, json detail) {
    return failure(ToolError{code, std::move(message), std::move(detail)});
}

bool ToolResult::same_outcome(const ToolResult& other) const {
    return status == other.status && payload == other.payload && error == other.error;
}

json to_json(const ToolResult& result, bool include_timing) {
    json j;
    if (result.ok()) {
        j = json{{"status", "ok"}, {"payload", result.payload}};
    } else {
        j = json{{"status", "error"}, {"error", to_json(result.error.value_or(ToolError{}))}};
    }
    if (include_timing) j["duration_ms"] = result.duration_ms;
    return j;
}

ToolResult tool_result_from_json(const json& j) {
    if (!j.is_object() || !j.contains("status")) {
        return ToolResult::failure(ErrorCode::ExecutionFailed, "malformed tool result", j);
    }
    const double duration = j.contains("duration_ms") && j["duration_ms"].is_number() ? j["duration_ms"].get<double>() : 0.0;
    if (j["status"] == "ok") return ToolResult::success(j.value("payload", json()), duration);
    return ToolResult::failure(tool_error_from_json(j.value("error", json::object())), duration);
}

std::string serialize_tool_result(const ToolResult& result) {
    return to_json(result).dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace toolhub
