#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "toolhub/agentic.hpp"
#include "toolhub/caller.hpp"
#include "toolhub/composer.hpp"
#include "toolhub/finder.hpp"
#include "toolhub/registry.hpp"
#include "toolhub/wire.hpp"

namespace toolhub {

struct RuntimeOptions {
    CallerOptions caller;
    FinderOptions finder;
    std::size_t parallel_width = 8;
};

/// Registry, caller, finder and agent backends wired together, with the
/// "program", "agentic" and "remote" handler schemes installed.
class Runtime {
public:
    explicit Runtime(RuntimeOptions options = {});
    ~Runtime();

    Runtime(const Runtime&) = delete;
    Runtime& operator=(const Runtime&) = delete;

    Registry& registry() { return registry_; }
    BackendRegistry& backends() { return backends_; }
    Caller& caller() { return *caller_; }
    Finder& finder() { return *finder_; }
    wire::ClientPool& clients() { return clients_; }
    wire::RpcServer& rpc() { return *rpc_; }

    ToolResult call(const ToolCall& call) { return caller_->call_tool(call); }
    std::string run(std::string_view call_schema) { return caller_->run(call_schema); }
    std::vector<ToolMatch> find(std::string_view query, SearchStrategy strategy, std::size_t limit) {
        return finder_->find_tool(query, strategy, limit);
    }

    /// Registers a composite described by a plan document.
    std::string compose(const json& plan_doc) { return toolhub::compose(registry_, plan_doc); }
    /// Registers an agentic tool.
    std::string register_agent(const AgentConfig& config, Origin origin = Origin::Local);
    wire::RemoteImport register_remote(const std::string& endpoint) {
        return wire::register_remote(registry_, clients_, endpoint);
    }

private:
    RuntimeOptions options_;
    Registry registry_;
    BackendRegistry backends_;
    wire::ClientPool clients_;
    std::unique_ptr<Caller> caller_;
    std::unique_ptr<Finder> finder_;
    std::unique_ptr<wire::RpcServer> rpc_;
};

}  // namespace toolhub
