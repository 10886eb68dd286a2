#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolhub/match.hpp"
#include "toolhub/protocol.hpp"
#include "toolhub/registry.hpp"

namespace toolhub {

struct GenerationSettings {
    double temperature = 0.0;
};

/// A text model: prompt in, text out. Implementations may throw; callers
/// turn that into ExecutionFailed.
class AgentBackend {
public:
    virtual ~AgentBackend() = default;
    virtual std::string id() const = 0;
    virtual std::string generate(const std::string& prompt, const GenerationSettings& settings) = 0;
    /// Upper bound on concurrent generate() calls, enforced by BackendRegistry.
    virtual std::size_t max_concurrency() const { return 4; }
};

/// Rule-driven backend for tests and offline use. Rules are tried in the
/// order they were added; the first that produces text wins, then the
/// fallback. Without a match and without a fallback generate() throws.
class MockBackend final : public AgentBackend {
public:
    using Rule = std::function<std::optional<std::string>(const std::string& prompt)>;

    explicit MockBackend(std::string id = "mock", std::size_t max_concurrency = 4);

    /// Answer `response` whenever the prompt contains `needle`.
    MockBackend& on(std::string needle, std::string response);
    /// Answer responses[0], responses[1], ... on successive matches (the
    /// last one repeats). Stateful, unlike the other rules.
    MockBackend& on_sequence(std::string needle, std::vector<std::string> responses);
    MockBackend& on_match(Rule rule);
    MockBackend& fallback(std::string response);

    std::string id() const override { return id_; }
    std::string generate(const std::string& prompt, const GenerationSettings& settings) override;
    std::size_t max_concurrency() const override { return max_concurrency_; }

    std::vector<std::string> prompts() const;
    std::size_t calls() const;

private:
    std::string id_;
    std::size_t max_concurrency_;
    mutable std::mutex mutex_;
    std::vector<Rule> rules_;
    std::optional<std::string> fallback_;
    std::vector<std::string> prompts_;
};

/// Adapter for a hosted text-generation endpoint. POSTs
/// {"prompt": ..., "temperature": ...} to `url` and reads "text" from the
/// JSON reply.
class HttpBackend final : public AgentBackend {
public:
    HttpBackend(std::string id, std::string url, double timeout_seconds = 120.0, std::size_t max_concurrency = 4);

    std::string id() const override { return id_; }
    std::string generate(const std::string& prompt, const GenerationSettings& settings) override;
    std::size_t max_concurrency() const override { return max_concurrency_; }

private:
    std::string id_;
    std::string url_;
    double timeout_seconds_;
    std::size_t max_concurrency_;
};

/// Named backends with a per-backend admission gate.
class BackendRegistry {
public:
    void add(std::shared_ptr<AgentBackend> backend);
    bool has(const std::string& id) const;
    bool empty() const;
    std::vector<std::string> ids() const;
    /// First backend added, or "" when none.
    std::string default_id() const;

    /// Throws ToolFailure(ExecutionFailed) for an unknown backend or when the
    /// backend itself fails. An empty id selects the default backend.
    std::string generate(const std::string& backend_id, const std::string& prompt,
                         const GenerationSettings& settings = {});

private:
    struct Gate {
        std::shared_ptr<AgentBackend> backend;
        std::mutex mutex;
        std::condition_variable cv;
        std::size_t active = 0;
    };

    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Gate>> gates_;
    std::string default_;
};

enum class OutputContract { FreeText, ToolCall, ScoredReport };

std::string_view to_string(OutputContract c);
std::optional<OutputContract> output_contract_from_string(std::string_view name);

/// Declarative agentic tool.
struct AgentConfig {
    std::string name;
    std::string description;
    std::string prompt_template;
    std::vector<ParameterSpec> input_parameters;
    OutputContract output_contract = OutputContract::FreeText;
    std::string backend;  // "" selects the default backend
    std::optional<double> temperature;
    std::vector<std::string> tags{"agent"};
};

/// Throws ToolFailure(SpecInvalid) on malformed documents or unbound
/// placeholders.
AgentConfig agent_config_from_json(const json& doc);
json to_json(const AgentConfig& config);

/// Placeholder names in a template. "{{" and "}}" are literal braces.
/// Throws ToolFailure(SpecInvalid) on an unterminated placeholder.
std::vector<std::string> template_placeholders(std::string_view tmpl);
/// Every placeholder must name an input parameter or be "context".
void check_agent_config(const AgentConfig& config);
/// Missing optional arguments render as "". Strings are inserted raw, other
/// values as compact JSON.
std::string render_prompt(std::string_view tmpl, const json& arguments, const std::string& context = "");

/// Tool interface of an agentic tool: its input parameters plus a return
/// schema determined by the output contract.
ToolSpec agent_tool_spec(const AgentConfig& config);

/// Extracts a JSON value from model output, tolerating code fences and
/// surrounding prose. Returns a discarded value on failure.
json extract_json(std::string_view text);

/// Renders, generates and parses according to the contract; a parse failure
/// is retried once with the error appended. Throws ToolFailure.
json run_agent(const AgentConfig& config, const json& arguments, BackendRegistry& backends,
               const std::string& context = "");
ToolResult run_agentic_tool(const AgentConfig& config, const json& arguments, BackendRegistry& backends,
                            const std::string& context = "");

class AgenticHandler final : public ToolHandler {
public:
    AgenticHandler(AgentConfig config, BackendRegistry& backends);
    json run(const json& arguments, const ToolContext& ctx) override;

private:
    AgentConfig config_;
    BackendRegistry& backends_;
};

struct AgenticFindResult {
    std::vector<ToolMatch> matches;
    std::vector<std::string> dropped;  // names the backend invented
};

/// Asks the backend to pick and order the relevant candidates. Names outside
/// the candidate list are dropped and reported. Throws std::invalid_argument
/// for an empty candidate list, ToolFailure(ExecutionFailed) on backend
/// failure.
AgenticFindResult agentic_find(std::string_view query, const std::vector<ToolSpec>& candidates,
                               BackendRegistry& backends, const std::string& backend_id = "");

}  // namespace toolhub
