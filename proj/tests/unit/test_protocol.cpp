#include <doctest.h>

#include "gen.hpp"
#include "toolhub/protocol.hpp"

using namespace toolhub;

namespace {

ErrorCode spec_error_path(const std::string& text, std::string* path) {
    try {
        parse_tool_spec(text);
    } catch (const ToolFailure& f) {
        *path = f.error().detail.value("path", std::string{});
        return f.error().code;
    }
    *path = "<accepted>";
    return ErrorCode::ExecutionFailed;
}

ToolError validation_error(const ToolCall& call, const ToolSpec& spec) {
    try {
        validate_arguments(call, spec);
    } catch (const ToolFailure& f) {
        return f.error();
    }
    return ToolError{ErrorCode::ExecutionFailed, "<accepted>", nullptr};
}

ToolSpec sample_spec() {
    return parse_tool_spec(R"({
        "name": "sample_tool",
        "description": "Does a sample thing.",
        "parameters": [
            {"name": "query", "type": "string", "description": "What to look for.", "required": true},
            {"name": "limit", "type": "integer", "description": "Maximum results."},
            {"name": "weights", "type": "array<number>", "description": "Optional weights."}
        ],
        "return_schema": {"results": ["string"], "count": "integer"},
        "tags": ["utility"]
    })");
}

}  // namespace

TEST_SUITE("protocol") {

TEST_CASE("value types parse, print and match") {
    for (const auto* t : {"string", "integer", "number", "boolean", "object", "array<string>",
                          "array<array<integer>>"}) {
        auto v = ValueType::parse(t);
        REQUIRE(v.has_value());
        CHECK(v->name() == t);
    }
    for (const auto* t : {"", "int", "array", "array<>", "array<float>", "String", "array<string"}) {
        CAPTURE(t);
        CHECK_FALSE(ValueType::parse(t).has_value());
    }
    CHECK(ValueType::integer().matches(3));
    CHECK_FALSE(ValueType::integer().matches(3.5));
    CHECK(ValueType::number().matches(3));
    CHECK(ValueType::number().matches(3.5));
    CHECK_FALSE(ValueType::string().matches(nullptr));
    CHECK(ValueType::array_of(ValueType::integer()).matches(json::array({1, 2})));
    CHECK_FALSE(ValueType::array_of(ValueType::integer()).matches(json::array({1, "2"})));
    CHECK(ValueType::array_of(ValueType::integer()).matches(json::array()));
    CHECK(ValueType::parse("array<array<integer>>")->element() == ValueType::array_of(ValueType::integer()));
}

TEST_CASE("tool names") {
    CHECK(is_valid_tool_name("a"));
    CHECK(is_valid_tool_name("mock_tool_2"));
    CHECK_FALSE(is_valid_tool_name(""));
    CHECK_FALSE(is_valid_tool_name("2tool"));
    CHECK_FALSE(is_valid_tool_name("Tool"));
    CHECK_FALSE(is_valid_tool_name("tool-name"));
    CHECK(is_valid_tool_name(std::string(128, 'a')));
    CHECK_FALSE(is_valid_tool_name(std::string(129, 'a')));
}

TEST_CASE("flat and nested parameter forms give the same spec") {
    const auto flat = parse_tool_spec(R"({"name":"t","description":"d","parameters":[
        {"name":"a","type":"string","description":"first","required":true},
        {"name":"b","type":"array<integer>","description":"second"}]})");
    const auto nested = parse_tool_spec(R"({"name":"t","description":"d","parameter":{
        "type":"object",
        "properties":{"a":{"type":"string","description":"first"},
                      "b":{"type":"array","items":{"type":"integer"},"description":"second"}},
        "required":["a"]}})");
    CHECK(flat == nested);
    CHECK(flat.parameters.at(0).required);
    CHECK_FALSE(flat.parameters.at(1).required);
}

TEST_CASE("malformed specs name the offending field") {
    struct Row {
        const char* doc;
        const char* path;
    };
    const std::vector<Row> rows{
        {R"([1,2])", ""},
        {R"(not json)", ""},
        {R"({"description":"d"})", "name"},
        {R"({"name":"Bad Name","description":"d"})", "name"},
        {R"({"name":"t"})", "description"},
        {R"({"name":"t","description":"d","parameters":{}})", "parameters"},
        {R"({"name":"t","description":"d","parameters":[{"name":"a"}]})", "parameters[0].type"},
        {R"({"name":"t","description":"d","parameters":[{"name":"a","type":"float"}]})", "parameters[0].type"},
        {R"({"name":"t","description":"d","parameters":[{"name":"a","type":"string"},{"name":"a","type":"string"}]})",
         "parameters[1].name"},
        {R"({"name":"t","description":"d","parameters":[{"name":"a","type":"string","required":"yes"}]})",
         "parameters[0].required"},
        {R"({"name":"t","description":"d","parameters":[{"name":"a","type":"string","default":1}]})",
         "parameters[0].default"},
        {R"({"name":"t","description":"d","parameter":{"properties":{"a":{"type":"string"}},"required":["b"]}})",
         "parameter.required[0]"},
        {R"({"name":"t","description":"d","return_schema":"float"})", "return_schema"},
        {R"({"name":"t","description":"d","return_schema":{"a":{"b":"date"}}})", "return_schema.a.b"},
        {R"({"name":"t","description":"d","tags":[1]})", "tags[0]"},
        {R"({"name":"t","description":"d","settings":[]})", "settings"},
    };
    for (const auto& row : rows) {
        CAPTURE(row.doc);
        std::string path;
        CHECK(spec_error_path(row.doc, &path) == ErrorCode::SpecInvalid);
        CHECK(path == row.path);
    }
}

TEST_CASE("return schemas normalize to the compact form") {
    CHECK(normalize_return_schema("string") == "string");
    CHECK(normalize_return_schema(json::array({"integer"})) == "array<integer>");
    CHECK(normalize_return_schema(json::parse(R"([{"id":"string"}])")) == json::parse(R"([{"id":"string"}])"));
    CHECK(normalize_return_schema(json::parse(
              R"({"type":"object","properties":{"n":{"type":"integer"},"xs":{"type":"array","items":{"type":"string"}}}})")) ==
          json::parse(R"({"n":"integer","xs":"array<string>"})"));
    CHECK_THROWS_AS(normalize_return_schema(json::array({"a", "b"})), ToolFailure);
    CHECK_THROWS_AS(normalize_return_schema(3), ToolFailure);
}

TEST_CASE("return schema conformance reports the deepest field") {
    const json schema = json::parse(R"({"results":[{"id":"string","score":"number"}],"count":"integer"})");
    CHECK(conforms_to_return_schema(json::parse(R"({"results":[{"id":"a","score":1}],"count":1})"), schema).ok);
    auto r = conforms_to_return_schema(json::parse(R"({"results":[{"id":"a","score":"x"}],"count":1})"), schema);
    CHECK_FALSE(r.ok);
    CHECK(r.path == ".results[0].score");
    r = conforms_to_return_schema(json::parse(R"({"results":[],"count":1,"extra":true})"), schema);
    CHECK(r.path == ".extra");
    r = conforms_to_return_schema(json::parse(R"({"results":[]})"), schema);
    CHECK(r.path == ".count");
    CHECK(conforms_to_return_schema(json::object(), "object").ok);
    CHECK_FALSE(conforms_to_return_schema(json::array(), "object").ok);
}

TEST_CASE("spec serialization round trips") {
    const auto s = sample_spec();
    CHECK(parse_tool_spec(serialize_tool_spec(s)) == s);
    gen::Gen g(17);
    const std::vector<std::string> types{"string", "integer", "number", "boolean", "object", "array<string>",
                                         "array<array<number>>"};
    for (int i = 0; i < 300; ++i) {
        ToolSpec spec;
        spec.name = "tool_" + std::to_string(i);
        spec.description = g.sentence(0, 10);
        for (int p = g.integer(0, 4); p > 0; --p) {
            ParameterSpec ps;
            ps.name = "p" + std::to_string(p);
            ps.type = *ValueType::parse(g.pick(types));
            ps.description = g.sentence(0, 5);
            ps.required = g.chance(0.5);
            spec.parameters.push_back(ps);
        }
        spec.return_schema = json{{"value", g.pick(types)}};
        if (g.chance(0.5)) spec.tags.push_back(g.word());
        if (g.chance(0.3)) spec.settings["call_timeout_seconds"] = g.integer(1, 9);
        CHECK(parse_tool_spec(serialize_tool_spec(spec)) == spec);
    }
}

TEST_CASE("unknown top-level keys are kept in settings") {
    const auto s = parse_tool_spec(R"({"name":"t","description":"d","version":"1.2"})");
    CHECK(s.settings.at("version") == "1.2");
}

TEST_CASE("tool call parsing is strict") {
    CHECK(parse_tool_call(R"({"name":"t","arguments":{}})") == ToolCall{"t", json::object()});
    for (const auto* bad : {R"({"name":"t"})", R"({"arguments":{}})", R"({"name":"t","arguments":[]})",
                            R"({"name":"","arguments":{}})", R"({"name":"t","arguments":{},"id":1})", "[]", "{",
                            ""}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(parse_tool_call(bad), ToolFailure);
    }
}

TEST_CASE("argument validation checks unknown, then missing, then types") {
    const auto spec = sample_spec();
    CHECK_NOTHROW(validate_arguments({"sample_tool", {{"query", "x"}}}, spec));
    CHECK_NOTHROW(validate_arguments({"sample_tool", {{"query", "x"}, {"limit", 3}, {"weights", {1, 2.5}}}}, spec));

    auto e = validation_error({"sample_tool", {{"limit", "three"}, {"bogus", 1}}}, spec);
    CHECK(e.code == ErrorCode::UnknownArgument);
    CHECK(e.detail.at("argument") == "bogus");

    e = validation_error({"sample_tool", {{"limit", "three"}}}, spec);
    CHECK(e.code == ErrorCode::MissingRequired);
    CHECK(e.detail == json::array({"query"}));

    e = validation_error({"sample_tool", {{"query", "x"}, {"limit", 2.5}}}, spec);
    CHECK(e.code == ErrorCode::TypeMismatch);
    CHECK(e.detail == json{{"param", "limit"}, {"expected", "integer"}, {"got", "number"}});

    e = validation_error({"sample_tool", {{"query", "x"}, {"weights", {1, "a"}}}}, spec);
    CHECK(e.code == ErrorCode::TypeMismatch);
    CHECK(e.detail.at("expected") == "array<number>");
}

TEST_CASE("results and errors serialize and parse back") {
    const auto ok = ToolResult::success({{"a", 1}}, 2.5);
    CHECK(to_json(ok) == json{{"status", "ok"}, {"payload", {{"a", 1}}}, {"duration_ms", 2.5}});
    CHECK(to_json(ok, false) == json{{"status", "ok"}, {"payload", {{"a", 1}}}});
    CHECK(tool_result_from_json(to_json(ok)).same_outcome(ok));

    const auto err = ToolResult::failure(ErrorCode::Timeout, "too slow", {{"seconds", 1}});
    const auto back = tool_result_from_json(to_json(err));
    CHECK(back.same_outcome(err));
    CHECK(back.error->code == ErrorCode::Timeout);

    for (auto code : {ErrorCode::ToolNotFound, ErrorCode::SpecInvalid, ErrorCode::MissingRequired,
                      ErrorCode::UnknownArgument, ErrorCode::TypeMismatch, ErrorCode::ExecutionFailed,
                      ErrorCode::Timeout, ErrorCode::RemoteUnavailable, ErrorCode::ExpertUnavailable}) {
        CHECK(error_code_from_string(to_string(code)) == code);
    }
    CHECK_FALSE(error_code_from_string("Nope").has_value());
    CHECK_FALSE(tool_result_from_json(json::array()).ok());
}

TEST_CASE("invalid UTF-8 in payloads still serializes") {
    const auto r = ToolResult::success(std::string("bad \xff byte"));
    CHECK_NOTHROW(serialize_tool_result(r));
}

}
