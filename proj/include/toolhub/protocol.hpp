#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace toolhub {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorCode {
    ToolNotFound,
    SpecInvalid,
    MissingRequired,
    UnknownArgument,
    TypeMismatch,
    ExecutionFailed,
    Timeout,
    RemoteUnavailable,
    ExpertUnavailable,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> error_code_from_string(std::string_view name);

struct ToolError {
    ErrorCode code = ErrorCode::ExecutionFailed;
    std::string message;
    json detail;  // null when absent

    bool operator==(const ToolError&) const = default;
};

json to_json(const ToolError& err);
ToolError tool_error_from_json(const json& j);

/// Exception carrying a structured ToolError. Thrown by parsers and by handlers
/// that want to surface a specific error code (e.g. a remote proxy).
class ToolFailure : public std::runtime_error {
public:
    explicit ToolFailure(ToolError err);
    ToolFailure(ErrorCode code, std::string message, json detail = nullptr);

    const ToolError& error() const noexcept { return error_; }

private:
    ToolError error_;
};

// ---------------------------------------------------------------------------
// Value types
// ---------------------------------------------------------------------------

/// Closed set of parameter types: string, integer, number, boolean, object and
/// array<T> over any of these (nesting allowed).
class ValueType {
public:
    enum class Kind { String, Integer, Number, Boolean, Object, Array };

    /// Parses "string", "array<integer>", "array<array<number>>", ...
    /// Returns nullopt for anything outside the closed set.
    static std::optional<ValueType> parse(std::string_view text);

    static ValueType string() { return ValueType(Kind::String); }
    static ValueType integer() { return ValueType(Kind::Integer); }
    static ValueType number() { return ValueType(Kind::Number); }
    static ValueType boolean() { return ValueType(Kind::Boolean); }
    static ValueType object() { return ValueType(Kind::Object); }
    static ValueType array_of(const ValueType& element);

    Kind kind() const noexcept { return depth_ > 0 ? Kind::Array : base_; }
    /// Element type for arrays; the type itself otherwise.
    ValueType element() const;
    bool matches(const json& value) const;
    std::string name() const;

    bool operator==(const ValueType&) const = default;

private:
    explicit ValueType(Kind k) : base_(k) {}
    Kind base_;
    int depth_ = 0;  // number of array<> wrappers around base_
};

/// Name of the JSON type of `value` in the vocabulary used by error messages
/// ("integer", "number", "string", "boolean", "array", "object", "null").
std::string json_type_name(const json& value);

// ---------------------------------------------------------------------------
// Tool specification
// ---------------------------------------------------------------------------

struct ParameterSpec {
    std::string name;
    ValueType type = ValueType::string();
    std::string description;
    bool required = false;

    bool operator==(const ParameterSpec&) const = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ParameterSpec> parameters;
    json return_schema = "object";  // canonical compact form
    std::vector<std::string> tags;
    json settings = json::object();

    const ParameterSpec* find_parameter(std::string_view param) const;
    bool operator==(const ToolSpec&) const = default;
};

/// True when `name` matches [a-z][a-z0-9_]* and is at most 128 characters.
bool is_valid_tool_name(std::string_view name);

/// Parses a spec document. Accepts both the flat `parameters` list and the
/// nested `parameter` object form; unknown top-level keys are kept in settings.
/// Throws ToolFailure(SpecInvalid) whose detail.path names the first bad field.
ToolSpec parse_tool_spec(std::string_view text);
ToolSpec tool_spec_from_json(const json& doc);

/// Canonical (flat) serialized form.
json to_json(const ToolSpec& spec);
std::string serialize_tool_spec(const ToolSpec& spec);

/// Normalizes a return schema into the canonical compact form.
/// Compact form: a type name ("string", "array<integer>", ...), an object
/// mapping field names to schemas, or a one-element array `[schema]` for
/// arrays of records. A JSON-Schema style object with "type":"object" and
/// "properties" is also accepted. Throws ToolFailure(SpecInvalid).
json normalize_return_schema(const json& schema, const std::string& path = "return_schema");

struct ConformanceResult {
    bool ok = true;
    std::string path;    // deepest failing field, "" when ok
    std::string reason;  // human readable
};

/// Structural check of `value` against a canonical return schema. Records
/// require every declared field and reject undeclared ones.
ConformanceResult conforms_to_return_schema(const json& value, const json& schema);

// ---------------------------------------------------------------------------
// Interaction schema
// ---------------------------------------------------------------------------

struct ToolCall {
    std::string name;
    json arguments = json::object();

    bool operator==(const ToolCall&) const = default;
};

/// Parses `{"name": ..., "arguments": {...}}`; any other key, a missing key,
/// or non-JSON input yields ToolFailure(SpecInvalid).
ToolCall parse_tool_call(std::string_view text);
ToolCall tool_call_from_json(const json& j);
json to_json(const ToolCall& call);

/// Checks a call's arguments against a spec. Returns the argument object
/// unchanged on success; throws ToolFailure with UnknownArgument,
/// MissingRequired or TypeMismatch otherwise (checked in that order).
json validate_arguments(const ToolCall& call, const ToolSpec& spec);

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

enum class ResultStatus { Ok, Error };

struct ToolResult {
    ResultStatus status = ResultStatus::Ok;
    json payload;                    // set when ok
    std::optional<ToolError> error;  // set when error
    double duration_ms = 0.0;

    static ToolResult success(json payload, double duration_ms = 0.0);
    static ToolResult failure(ToolError err, double duration_ms = 0.0);
    static ToolResult failure(ErrorCode code, std::string message, json detail = nullptr);

    bool ok() const noexcept { return status == ResultStatus::Ok; }
    /// Equality ignoring timing.
    bool same_outcome(const ToolResult& other) const;
};

json to_json(const ToolResult& result, bool include_timing = true);
ToolResult tool_result_from_json(const json& j);
std::string serialize_tool_result(const ToolResult& result);

}  // namespace toolhub
