#include "toolhub/runtime.hpp"

namespace toolhub {

Runtime::Runtime(RuntimeOptions options) : options_(std::move(options)) {
    const std::size_t width = options_.parallel_width;
    registry_.catalog().add_scheme("program", [this, width](const ToolEntry& entry, const json&) {
        return std::make_shared<ProgramHandler>(parse_plan(entry.handler_config, &entry.spec), &backends_, width);
    });
    registry_.catalog().add_scheme("agentic", [this](const ToolEntry& entry, const json&) {
        return std::make_shared<AgenticHandler>(agent_config_from_json(entry.handler_config), backends_);
    });
    wire::install_remote_scheme(registry_, clients_);
    caller_ = std::make_unique<Caller>(registry_, options_.caller);
    finder_ = std::make_unique<Finder>(registry_, &backends_, options_.finder);
    rpc_ = std::make_unique<wire::RpcServer>(registry_, *caller_, *finder_);
}

Runtime::~Runtime() {
    rpc_.reset();
    caller_.reset();  // joins worker threads before the registry goes away
    clients_.clear();
}

std::string Runtime::register_agent(const AgentConfig& config, Origin origin) {
    check_agent_config(config);
    ToolEntry entry;
    entry.spec = agent_tool_spec(config);
    entry.origin = origin;
    entry.handler_ref = "agentic";
    entry.handler_config = to_json(config);
    return registry_.register_tool(std::move(entry));
}

}  // namespace toolhub
