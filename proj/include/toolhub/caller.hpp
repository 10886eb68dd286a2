#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <future>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "toolhub/protocol.hpp"
#include "toolhub/registry.hpp"

namespace toolhub {

using SteadyTime = std::chrono::steady_clock::time_point;
using ClockFn = std::function<SteadyTime()>;

struct CacheConfig {
    double ttl_seconds = 600.0;
    std::size_t max_loaded = 128;
};

struct CallerOptions {
    CacheConfig cache;
    /// Per-call deadline; a tool may override it with the setting
    /// "call_timeout_seconds". Zero or less disables the deadline.
    double timeout_seconds = 60.0;
    ClockFn clock;  // defaults to steady_clock::now
};

/// Replaces "${ENV:NAME}" inside string values (recursively) with the
/// environment variable, or "" when unset.
json interpolate_env(const json& value);

/// Executes tool calls: resolve, validate, lazily load, run under a deadline,
/// and check the payload against the return schema.
class Caller {
public:
    explicit Caller(Registry& registry, CallerOptions options = {});
    ~Caller();

    Caller(const Caller&) = delete;
    Caller& operator=(const Caller&) = delete;

    ToolResult call_tool(const ToolCall& call);
    /// Serialized call in, serialized result out. Never throws.
    std::string run(std::string_view call_schema);

    /// Drops idle handlers whose last use is older than the TTL.
    std::vector<std::string> evict_expired(SteadyTime now);
    std::vector<std::string> evict_expired();

    /// Total handler loads since construction.
    std::size_t load_count() const;
    std::size_t load_count(const std::string& tool) const;
    std::vector<std::string> loaded_tools() const;
    bool is_loaded(const std::string& tool) const;
    void unload_all();

    Registry& registry() { return registry_; }
    const ToolContext& context() const;
    const CallerOptions& options() const { return options_; }
    SteadyTime now() const { return options_.clock(); }

private:
    using HandlerFuture = std::shared_future<std::shared_ptr<ToolHandler>>;

    struct Slot {
        std::shared_ptr<const ToolEntry> entry;
        HandlerFuture handler;
        SteadyTime loaded_at{};
        SteadyTime last_used{};
        int in_flight = 0;
        std::shared_ptr<std::mutex> gate = std::make_shared<std::mutex>();
    };

    struct Worker {
        std::thread thread;
        std::shared_ptr<std::atomic<bool>> done;
    };

    class Context;

    ToolResult execute(const ToolCall& call);
    std::vector<std::string> evict_expired_locked(SteadyTime now);
    void make_room_locked();
    void release(const std::string& name, const std::shared_ptr<const ToolEntry>& entry);
    json run_with_deadline(const std::shared_ptr<ToolHandler>& handler, const std::shared_ptr<std::mutex>& gate,
                           const json& arguments, double timeout_seconds, const std::string& name);
    void reap_workers(bool all);

    Registry& registry_;
    CallerOptions options_;
    std::unique_ptr<Context> context_;

    mutable std::mutex mutex_;
    std::map<std::string, Slot> slots_;
    std::size_t total_loads_ = 0;
    std::map<std::string, std::size_t> loads_;

    std::mutex workers_mutex_;
    std::list<Worker> workers_;
};

}  // namespace toolhub
