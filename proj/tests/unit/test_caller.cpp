#include <doctest.h>

#include <atomic>
#include <barrier>
#include <chrono>
#include <thread>

#include "gen.hpp"
#include "toolhub/caller.hpp"

using namespace toolhub;
using namespace std::chrono_literals;

namespace {

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
                                  {{"name", "flag"}, {"type", "boolean"}}}},
                                {"return_schema", {{"echo", "string"}}}}
                               .dump());
}

// Handler factory that counts loads and runs; loading takes `load_delay`.
HandlerFactory counting_factory(Counters& c, std::chrono::milliseconds load_delay = 0ms) {
    return [&c, load_delay](const ToolSpec&, const json&) {
        std::this_thread::sleep_for(load_delay);
        ++c.loads;
        return std::make_shared<FunctionHandler>([&c](const json& a, const ToolContext&) {
            ++c.runs;
            return json{{"echo", a.at("text")}};
        });
    };
}

struct FakeClock {
    std::shared_ptr<std::atomic<long long>> ms = std::make_shared<std::atomic<long long>>(0);
    SteadyTime epoch = std::chrono::steady_clock::now();
    ClockFn fn() const {
        return [ms = ms, epoch = epoch] { return epoch + std::chrono::milliseconds(ms->load()); };
    }
    void advance(double seconds) { *ms += static_cast<long long>(seconds * 1000); }
};

ToolSpec simple(const std::string& name) {
    ToolSpec s;
    s.name = name;
    s.description = "simple";
    return s;
}

}  // namespace

TEST_SUITE("caller") {

TEST_CASE("invalid calls never reach the handler") {
    Registry reg;
    Counters c;
    reg.register_local(typed_spec("counted"), counting_factory(c));
    Caller caller(reg);
    const std::vector<json> invalid{
        json::object(),
        {{"n", 1}},
        {{"text", 1}},
        {{"text", "a"}, {"n", 1.5}},
        {{"text", "a"}, {"n", "1"}},
        {{"text", "a"}, {"xs", {1, "b"}}},
        {{"text", "a"}, {"xs", 3}},
        {{"text", "a"}, {"flag", "true"}},
        {{"text", "a"}, {"extra", true}},
        {{"text", nullptr}},
    };
    for (const auto& args : invalid) {
        CAPTURE(args.dump());
        auto r = caller.call_tool({"counted", args});
        REQUIRE_FALSE(r.ok());
        CHECK((r.error->code == ErrorCode::MissingRequired || r.error->code == ErrorCode::TypeMismatch ||
               r.error->code == ErrorCode::UnknownArgument));
    }
    gen::Gen g(8);
    for (int i = 0; i < 500; ++i) {
        json args = g.value(2);
        if (args.is_object()) args.erase("text");
        caller.call_tool({"counted", args});
    }
    CHECK(c.runs == 0);
    CHECK(c.loads == 0);
    CHECK(caller.load_count() == 0);
    CHECK(caller.call_tool({"counted", {{"text", "ok"}}}).ok());
    CHECK(c.runs == 1);
}

TEST_CASE("unknown tool") {
    Registry reg;
    Caller caller(reg);
    auto r = caller.call_tool({"ghost", json::object()});
    REQUIRE_FALSE(r.ok());
    CHECK(r.error->code == ErrorCode::ToolNotFound);
}

TEST_CASE("single-flight load under 32 concurrent first calls") {
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
    CHECK(ok == 32);
    CHECK(c.loads == 1);
    CHECK(caller.load_count("slow_load") == 1);
    CHECK(c.runs == 32);
}

TEST_CASE("a failed load is retried by the next call") {
    Registry reg;
    std::atomic<int> attempts{0};
    reg.register_local(simple("flaky_load"), [&](const ToolSpec&, const json&) -> std::shared_ptr<ToolHandler> {
        if (attempts++ == 0) throw std::runtime_error("no model file");
        return std::make_shared<FunctionHandler>([](const json&, const ToolContext&) { return json::object(); });
    });
    Caller caller(reg);
    auto r = caller.call_tool({"flaky_load", json::object()});
    REQUIRE_FALSE(r.ok());
    CHECK(r.error->code == ErrorCode::ExecutionFailed);
    CHECK_FALSE(caller.is_loaded("flaky_load"));
    CHECK(caller.call_tool({"flaky_load", json::object()}).ok());
}

TEST_CASE("idle handlers expire after the TTL") {
    Registry reg;
    Counters c;
    reg.register_local(typed_spec("ttl_tool"), counting_factory(c));
    FakeClock clock;
    CallerOptions opt;
    opt.cache.ttl_seconds = 10;
    opt.clock = clock.fn();
    Caller caller(reg, opt);

    caller.call_tool({"ttl_tool", {{"text", "a"}}});
    CHECK(c.loads == 1);
    clock.advance(9.9);
    CHECK(caller.evict_expired().empty());
    caller.call_tool({"ttl_tool", {{"text", "b"}}});  // refreshes last use
    CHECK(c.loads == 1);
    clock.advance(9.9);
    caller.call_tool({"ttl_tool", {{"text", "c"}}});
    CHECK(c.loads == 1);
    clock.advance(10.1);
    CHECK(caller.evict_expired() == std::vector<std::string>{"ttl_tool"});
    CHECK_FALSE(caller.is_loaded("ttl_tool"));
    caller.call_tool({"ttl_tool", {{"text", "d"}}});
    CHECK(c.loads == 2);
    clock.advance(11);
    caller.call_tool({"ttl_tool", {{"text", "e"}}});  // eviction also happens lazily on call
    CHECK(c.loads == 3);
}

TEST_CASE("least recently used handler is evicted at capacity") {
    Registry reg;
    Counters a, b, c;
    reg.register_local(typed_spec("tool_a"), counting_factory(a));
    reg.register_local(typed_spec("tool_b"), counting_factory(b));
    reg.register_local(typed_spec("tool_c"), counting_factory(c));
    FakeClock clock;
    CallerOptions opt;
    opt.cache.max_loaded = 2;
    opt.cache.ttl_seconds = 1e9;
    opt.clock = clock.fn();
    Caller caller(reg, opt);
    const json args{{"text", "x"}};

    caller.call_tool({"tool_a", args});
    clock.advance(1);
    caller.call_tool({"tool_b", args});
    clock.advance(1);
    caller.call_tool({"tool_a", args});  // a is now more recent than b
    clock.advance(1);
    caller.call_tool({"tool_c", args});  // evicts b
    CHECK(caller.is_loaded("tool_a"));
    CHECK_FALSE(caller.is_loaded("tool_b"));
    CHECK(caller.is_loaded("tool_c"));
    CHECK(caller.loaded_tools().size() == 2);
    clock.advance(1);
    caller.call_tool({"tool_b", args});  // evicts a
    CHECK_FALSE(caller.is_loaded("tool_a"));
    CHECK(a.loads == 1);
    CHECK(b.loads == 2);
    CHECK(c.loads == 1);
}

TEST_CASE("re-registration drops the cached handler") {
    Registry reg;
    Counters c1, c2;
    reg.register_local(typed_spec("swap"), counting_factory(c1));
    Caller caller(reg);
    caller.call_tool({"swap", {{"text", "x"}}});
    reg.unregister("swap");
    reg.register_local(typed_spec("swap"), counting_factory(c2));
    caller.call_tool({"swap", {{"text", "x"}}});
    CHECK(c1.runs == 1);
    CHECK(c2.runs == 1);
}

TEST_CASE("deadline produces Timeout") {
    Registry reg;
    ToolSpec s = simple("sleepy");
    s.settings["call_timeout_seconds"] = 0.05;
    reg.register_local(s, std::make_shared<FunctionHandler>([](const json&, const ToolContext&) {
        std::this_thread::sleep_for(300ms);
        return json::object();
    }));
    ToolSpec quick = simple("quick");
    reg.register_local(quick, std::make_shared<FunctionHandler>([](const json&, const ToolContext&) { return json::object(); }));
    Caller caller(reg);
    const auto start = std::chrono::steady_clock::now();
    auto r = caller.call_tool({"sleepy", json::object()});
    REQUIRE_FALSE(r.ok());
    CHECK(r.error->code == ErrorCode::Timeout);
    CHECK(std::chrono::steady_clock::now() - start < 250ms);
    CHECK(caller.call_tool({"quick", json::object()}).ok());
}

TEST_CASE("payload that breaks the return schema is an execution failure") {
    Registry reg;
    ToolSpec s = simple("liar");
    s.return_schema = normalize_return_schema(json::parse(R"({"items":[{"id":"string"}]})"));
    reg.register_local(s, std::make_shared<FunctionHandler>([](const json&, const ToolContext&) {
        return json::parse(R"({"items":[{"id":"a"},{"id":7}]})");
    }));
    Caller caller(reg);
    auto r = caller.call_tool({"liar", json::object()});
    REQUIRE_FALSE(r.ok());
    CHECK(r.error->code == ErrorCode::ExecutionFailed);
    CHECK(r.error->detail.at("path") == ".items[1].id");
}

TEST_CASE("handler exceptions map to error codes") {
    Registry reg;
    reg.register_local(simple("throws_tool_failure"), std::make_shared<FunctionHandler>([](const json&, const ToolContext&) -> json {
        throw ToolFailure(ErrorCode::RemoteUnavailable, "down");
    }));
    reg.register_local(simple("throws_std"), std::make_shared<FunctionHandler>([](const json&, const ToolContext&) -> json {
        throw std::runtime_error("boom");
    }));
    reg.register_local(simple("throws_int"), std::make_shared<FunctionHandler>([](const json&, const ToolContext&) -> json {
        throw 42;
    }));
    Caller caller(reg);
    CHECK(caller.call_tool({"throws_tool_failure", json::object()}).error->code == ErrorCode::RemoteUnavailable);
    CHECK(caller.call_tool({"throws_std", json::object()}).error->code == ErrorCode::ExecutionFailed);
    CHECK(caller.call_tool({"throws_int", json::object()}).error->code == ErrorCode::ExecutionFailed);
}

TEST_CASE("non-reentrant handlers are serialized") {
    Registry reg;
    std::atomic<int> inside{0}, max_inside{0};
    reg.register_local(simple("exclusive"), std::make_shared<FunctionHandler>(
                                                [&](const json&, const ToolContext&) {
                                                    int now = ++inside;
                                                    int prev = max_inside.load();
                                                    while (now > prev && !max_inside.compare_exchange_weak(prev, now)) {}
                                                    std::this_thread::sleep_for(5ms);
                                                    --inside;
                                                    return json::object();
                                                },
                                                false));
    Caller caller(reg);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { caller.call_tool({"exclusive", json::object()}); });
    for (auto& t : threads) t.join();
    CHECK(max_inside == 1);
}

TEST_CASE("environment interpolation in settings") {
    ::setenv("TOOLHUB_TEST_TOKEN", "s3cret", 1);
    CHECK(interpolate_env(json{{"k", "Bearer ${ENV:TOOLHUB_TEST_TOKEN}"}, {"n", 1}, {"l", {"${ENV:TOOLHUB_UNSET_VAR}x"}}}) ==
          json{{"k", "Bearer s3cret"}, {"n", 1}, {"l", {"x"}}});
    Registry reg;
    ToolSpec s = simple("needs_key");
    s.settings["api_key"] = "${ENV:TOOLHUB_TEST_TOKEN}";
    reg.register_local(s, [](const ToolSpec&, const json& settings) {
        return std::make_shared<FunctionHandler>([key = settings.at("api_key")](const json&, const ToolContext&) {
            return json{{"key", key}};
        });
    });
    Caller caller(reg);
    CHECK(caller.call_tool({"needs_key", json::object()}).payload.at("key") == "s3cret");
}

TEST_CASE("run() is total over 10000 fuzz inputs") {
    Registry reg;
    Counters c;
    reg.register_local(typed_spec("counted"), counting_factory(c));
    reg.register_local(simple("anything"), std::make_shared<FunctionHandler>([](const json& a, const ToolContext&) {
        return json{{"seen", a}};
    }));
    Caller caller(reg);
    gen::Gen g(424242);
    const std::vector<std::string> names{"counted", "anything", "ghost", "", "COUNTED"};
    int ok = 0;
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
                json call{{"name", g.pick(names)}, {"arguments", {{"text", g.sentence(0, 3)}}}};
                input = call.dump();
                if (g.chance(0.5)) input = input.substr(0, static_cast<std::size_t>(g.integer(0, static_cast<int>(input.size()))));
                break;
            }
        }
        std::string out;
        REQUIRE_NOTHROW(out = caller.run(input));
        const json parsed = json::parse(out, nullptr, false);
        REQUIRE_FALSE(parsed.is_discarded());
        REQUIRE(parsed.is_object());
        REQUIRE(parsed.contains("status"));
        if (parsed["status"] == "ok") {
            REQUIRE(parsed.contains("payload"));
            ++ok;
        } else {
            REQUIRE(parsed["status"] == "error");
            REQUIRE(parsed["error"].contains("code"));
            REQUIRE(error_code_from_string(parsed["error"]["code"].get<std::string>()).has_value());
            REQUIRE(parsed["error"]["message"].is_string());
        }
    }
    CHECK(ok > 0);
}

}
