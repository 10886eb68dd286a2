#include "toolhub/caller.hpp"

#include <cstdlib>

namespace toolhub {

namespace {

double ms_between(SteadyTime a, SteadyTime b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

ToolError error_from_exception(const std::string& tool) {
    try {
        throw;
    } catch (const ToolFailure& f) {
        return f.error();
    } catch (const json::exception& ex) {
        return {ErrorCode::ExecutionFailed, "handler for '" + tool + "' failed: " + ex.what(), json{{"tool", tool}}};
    } catch (const std::exception& ex) {
        return {ErrorCode::ExecutionFailed, "handler for '" + tool + "' failed: " + ex.what(), json{{"tool", tool}}};
    } catch (...) {
        return {ErrorCode::ExecutionFailed, "handler for '" + tool + "' failed with an unknown exception",
                json{{"tool", tool}}};
    }
}

std::string interpolate_string(const std::string& s) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto start = s.find("${ENV:", pos);
        if (start == std::string::npos) break;
        const auto end = s.find('}', start);
        if (end == std::string::npos) break;
        out.append(s, pos, start - pos);
        const std::string var = s.substr(start + 6, end - start - 6);
        if (const char* v = std::getenv(var.c_str())) out += v;
        pos = end + 1;
    }
    out.append(s, pos, std::string::npos);
    return out;
}

}  // namespace

json interpolate_env(const json& value) {
    if (value.is_string()) return interpolate_string(value.get<std::string>());
    if (value.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : value.items()) out[k] = interpolate_env(v);
        return out;
    }
    if (value.is_array()) {
        json out = json::array();
        for (const auto& v : value) out.push_back(interpolate_env(v));
        return out;
    }
    return value;
}

class Caller::Context final : public ToolContext {
public:
    explicit Context(Caller& caller) : caller_(caller) {}
    ToolResult call_tool(const ToolCall& call) const override { return caller_.call_tool(call); }
    const Registry& registry() const override { return caller_.registry_; }

private:
    Caller& caller_;
};

Caller::Caller(Registry& registry, CallerOptions options)
    : registry_(registry), options_(std::move(options)), context_(std::make_unique<Context>(*this)) {
    if (!options_.clock) options_.clock = [] { return std::chrono::steady_clock::now(); };
    if (options_.cache.max_loaded == 0) options_.cache.max_loaded = 1;
}

Caller::~Caller() { reap_workers(true); }

const ToolContext& Caller::context() const { return *context_; }

ToolResult Caller::call_tool(const ToolCall& call) {
    const auto start = std::chrono::steady_clock::now();
    ToolResult result = execute(call);
    result.duration_ms = ms_between(start, std::chrono::steady_clock::now());
    return result;
}

ToolResult Caller::execute(const ToolCall& call) {
    auto entry = registry_.find(call.name);
    if (!entry) {
        return ToolResult::failure(ErrorCode::ToolNotFound, "no tool named '" + call.name + "'",
                                   json{{"tool", call.name}});
    }
    try {
        validate_arguments(call, entry->spec);
    } catch (const ToolFailure& f) {
        return ToolResult::failure(f.error());
    }

    const json settings = interpolate_env(merged_settings(*entry));

    // Acquire (or start loading) the cached handler.
    HandlerFuture future;
    std::shared_ptr<std::mutex> gate;
    std::promise<std::shared_ptr<ToolHandler>> loader;
    bool is_loader = false;
    {
        std::lock_guard lock(mutex_);
        const SteadyTime now = options_.clock();
        evict_expired_locked(now);
        auto it = slots_.find(call.name);
        if (it != slots_.end() && it->second.entry != entry && it->second.in_flight == 0) {
            slots_.erase(it);  // tool was re-registered
            it = slots_.end();
        }
        if (it == slots_.end()) {
            make_room_locked();
            Slot slot;
            slot.entry = entry;
            slot.handler = loader.get_future().share();
            slot.loaded_at = now;
            it = slots_.emplace(call.name, std::move(slot)).first;
            is_loader = true;
            ++total_loads_;
            ++loads_[call.name];
        }
        it->second.in_flight += 1;
        it->second.last_used = now;
        future = it->second.handler;
        gate = it->second.gate;
    }

    if (is_loader) {
        try {
            loader.set_value(registry_.catalog().instantiate(*entry, settings));
        } catch (...) {
            loader.set_exception(std::current_exception());
        }
    }

    std::shared_ptr<ToolHandler> handler;
    try {
        handler = future.get();
    } catch (...) {
        ToolError err = error_from_exception(call.name);
        {
            std::lock_guard lock(mutex_);
            auto it = slots_.find(call.name);
            if (it != slots_.end() && it->second.handler.valid() && it->second.entry == entry) {
                if (--it->second.in_flight <= 0) slots_.erase(it);  // let the next call retry the load
            }
        }
        return ToolResult::failure(std::move(err));
    }

    double timeout = options_.timeout_seconds;
    if (settings.contains("call_timeout_seconds") && settings["call_timeout_seconds"].is_number()) {
        timeout = settings["call_timeout_seconds"].get<double>();
    }

    ToolResult result;
    try {
        json payload = run_with_deadline(handler, handler->reentrant() ? nullptr : gate, call.arguments, timeout, call.name);
        const auto check = conforms_to_return_schema(payload, entry->spec.return_schema);
        if (!check.ok) {
            result = ToolResult::failure(ErrorCode::ExecutionFailed,
                                         "payload of '" + call.name + "' does not match its return schema at '" +
                                             (check.path.empty() ? "." : check.path) + "': " + check.reason,
                                         json{{"path", check.path}, {"reason", check.reason}});
        } else {
            result = ToolResult::success(std::move(payload));
        }
    } catch (...) {
        result = ToolResult::failure(error_from_exception(call.name));
    }
    release(call.name, entry);
    return result;
}

json Caller::run_with_deadline(const std::shared_ptr<ToolHandler>& handler, const std::shared_ptr<std::mutex>& gate,
                               const json& arguments, double timeout_seconds, const std::string& name) {
    auto invoke = [handler, gate, arguments, ctx = context_.get()]() {
        if (gate) {
            std::lock_guard lock(*gate);
            return handler->run(arguments, *ctx);
        }
        return handler->run(arguments, *ctx);
    };
    if (timeout_seconds <= 0) return invoke();

    reap_workers(false);
    auto promise = std::make_shared<std::promise<json>>();
    auto result = promise->get_future();
    auto done = std::make_shared<std::atomic<bool>>(false);
    {
        std::lock_guard lock(workers_mutex_);
        workers_.push_back({std::thread([invoke, promise, done] {
                                try {
                                    promise->set_value(invoke());
                                } catch (...) {
                                    promise->set_exception(std::current_exception());
                                }
                                done->store(true);
                            }),
                            done});
    }
    const auto deadline = std::chrono::duration<double>(timeout_seconds);
    if (result.wait_for(deadline) != std::future_status::ready) {
        throw ToolFailure(ErrorCode::Timeout,
                          "tool '" + name + "' did not finish within " + json(timeout_seconds).dump() + " s",
                          json{{"tool", name}, {"timeout_seconds", timeout_seconds}});
    }
    return result.get();
}

void Caller::reap_workers(bool all) {
    std::list<Worker> finished;
    {
        std::lock_guard lock(workers_mutex_);
        for (auto it = workers_.begin(); it != workers_.end();) {
            if (all || it->done->load()) {
                finished.splice(finished.end(), workers_, it++);
            } else {
                ++it;
            }
        }
    }
    for (auto& w : finished) {
        if (w.thread.joinable()) w.thread.join();
    }
}

void Caller::release(const std::string& name, const std::shared_ptr<const ToolEntry>& entry) {
    std::lock_guard lock(mutex_);
    auto it = slots_.find(name);
    if (it == slots_.end() || it->second.entry != entry) return;
    it->second.in_flight -= 1;
    it->second.last_used = options_.clock();
}

std::vector<std::string> Caller::evict_expired_locked(SteadyTime now) {
    std::vector<std::string> evicted;
    const auto ttl = std::chrono::duration<double>(options_.cache.ttl_seconds);
    for (auto it = slots_.begin(); it != slots_.end();) {
        if (it->second.in_flight == 0 && now - it->second.last_used > ttl) {
            evicted.push_back(it->first);
            it = slots_.erase(it);
        } else {
            ++it;
        }
    }
    return evicted;
}

void Caller::make_room_locked() {
    while (slots_.size() >= options_.cache.max_loaded) {
        auto victim = slots_.end();
        for (auto it = slots_.begin(); it != slots_.end(); ++it) {
            if (it->second.in_flight > 0) continue;
            if (victim == slots_.end() || it->second.last_used < victim->second.last_used) victim = it;
        }
        if (victim == slots_.end()) return;  // everything busy; go over capacity briefly
        slots_.erase(victim);
    }
}

std::vector<std::string> Caller::evict_expired(SteadyTime now) {
    std::lock_guard lock(mutex_);
    return evict_expired_locked(now);
}

std::vector<std::string> Caller::evict_expired() { return evict_expired(options_.clock()); }

std::size_t Caller::load_count() const {
    std::lock_guard lock(mutex_);
    return total_loads_;
}

std::size_t Caller::load_count(const std::string& tool) const {
    std::lock_guard lock(mutex_);
    auto it = loads_.find(tool);
    return it == loads_.end() ? 0 : it->second;
}

std::vector<std::string> Caller::loaded_tools() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [name, _] : slots_) out.push_back(name);
    return out;
}

bool Caller::is_loaded(const std::string& tool) const {
    std::lock_guard lock(mutex_);
    return slots_.count(tool) > 0;
}

void Caller::unload_all() {
    std::lock_guard lock(mutex_);
    for (auto it = slots_.begin(); it != slots_.end();) {
        it = it->second.in_flight == 0 ? slots_.erase(it) : std::next(it);
    }
}

std::string Caller::run(std::string_view call_schema) {
    try {
        ToolCall call = parse_tool_call(call_schema);
        return serialize_tool_result(call_tool(call));
    } catch (const ToolFailure& f) {
        return serialize_tool_result(ToolResult::failure(f.error()));
    } catch (const std::exception& ex) {
        return serialize_tool_result(ToolResult::failure(ErrorCode::ExecutionFailed, std::string("internal error: ") + ex.what()));
    } catch (...) {
        return serialize_tool_result(ToolResult::failure(ErrorCode::ExecutionFailed, "internal error"));
    }
}

}  // namespace toolhub
