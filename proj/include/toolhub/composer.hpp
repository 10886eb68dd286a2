#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "toolhub/agentic.hpp"
#include "toolhub/protocol.hpp"
#include "toolhub/registry.hpp"

namespace toolhub {

// Argument templates
//
//   "$name" / "$name.field.0"   whole-value reference (keeps the JSON type);
//                               an absent optional input drops the enclosing key
//   "text ${name.field} more"   string interpolation
//   "$$literal"                 a literal leading '$'
//   {"$op": "length", "args": [...]}
//                               length upper lower trim concat add multiply
//                               word_count not equals
// Anything else is copied with its children evaluated.

using Scope = std::map<std::string, json>;

/// Variables a template reads (first path segment only).
std::vector<std::string> template_references(const json& tmpl);
/// nullopt means "absent". Throws ToolFailure(ExecutionFailed) on a bad path
/// or operator.
std::optional<json> evaluate_template(const json& tmpl, const Scope& scope);
/// Follows ".a.b.0" style paths. Throws ToolFailure(ExecutionFailed).
json extract_path(const json& value, const std::string& path, const std::string& what = "value");

struct CallStep {
    std::string tool;
    json arguments = json::object();
    std::string as;
};

struct ParallelStep {
    std::vector<CallStep> calls;
    std::string as;
};

struct LoopStep {
    std::string backend;      // "" selects the default backend
    std::string goal;         // template rendered into the agent prompt
    int max_iterations = 1;
    std::vector<std::string> tools;  // tools offered to the agent; empty = all
    std::optional<double> temperature;
    std::string as;
};

/// name -> template; a template starting with '.' is a path into the last result.
struct BindStep {
    std::vector<std::pair<std::string, json>> bindings;
};

using Step = std::variant<CallStep, ParallelStep, LoopStep, BindStep>;

struct CompositePlan {
    ToolSpec spec;
    std::vector<Step> steps;
    std::optional<json> output;  // template; defaults to the last result
};

/// Parses {"spec": ..., "steps": [...], "output": ...}. When `fallback_spec`
/// is given the "spec" key becomes optional. Throws ToolFailure(SpecInvalid).
CompositePlan parse_plan(const json& doc, const ToolSpec* fallback_spec = nullptr);
json to_json(const CompositePlan& plan);
json to_json(const Step& step);

/// Unknown tools, unbound variables and bad loop bounds raise SpecInvalid.
void check_plan(const CompositePlan& plan, const Registry& registry);

/// Results in call order; every branch runs even when others fail.
std::vector<ToolResult> execute_parallel(const std::vector<ToolCall>& calls, const ToolContext& ctx,
                                         std::size_t width = 8);
json parallel_entry(const ToolResult& result);

/// Agent-driven loop. Payload: {"result", "stopped", "iterations", "trace"}.
/// Throws ToolFailure.
json execute_loop(const LoopStep& loop, const Scope& scope, const ToolContext& ctx, BackendRegistry& backends);

/// Handler that interprets a plan.
class ProgramHandler final : public ToolHandler {
public:
    ProgramHandler(CompositePlan plan, BackendRegistry* backends, std::size_t parallel_width = 8);
    json run(const json& arguments, const ToolContext& ctx) override;

private:
    CompositePlan plan_;
    BackendRegistry* backends_;
    std::size_t width_;
};

/// Validates the plan and registers it as a composed tool whose handler_ref
/// is "program". Returns the tool name.
std::string compose(Registry& registry, const json& plan_doc);

}  // namespace toolhub
