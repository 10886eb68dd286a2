#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "toolhub/protocol.hpp"

namespace toolhub {

class Registry;

enum class Origin { Local, Remote, Composed, Generated };

std::string_view to_string(Origin origin);
std::optional<Origin> origin_from_string(std::string_view name);

/// What a running handler can reach: other tools (through the caller, so
/// validation and caching apply) and the registry itself.
class ToolContext {
public:
    virtual ~ToolContext() = default;
    virtual ToolResult call_tool(const ToolCall& call) const = 0;
    virtual const Registry& registry() const = 0;
};

/// Executable body of a tool. run() receives validated arguments and returns
/// the payload; throwing ToolFailure surfaces that exact error, any other
/// exception becomes ExecutionFailed.
class ToolHandler {
public:
    virtual ~ToolHandler() = default;
    virtual json run(const json& arguments, const ToolContext& ctx) = 0;
    /// Non-reentrant handlers are serialized per tool by the caller.
    virtual bool reentrant() const { return true; }
};

/// Builds a handler instance from the spec and merged settings. Called
/// lazily on first use.
using HandlerFactory = std::function<std::shared_ptr<ToolHandler>(const ToolSpec&, const json& settings)>;

/// Wraps a lambda as a handler.
class FunctionHandler final : public ToolHandler {
public:
    using Fn = std::function<json(const json&, const ToolContext&)>;
    explicit FunctionHandler(Fn fn, bool reentrant = true) : fn_(std::move(fn)), reentrant_(reentrant) {}
    json run(const json& arguments, const ToolContext& ctx) override { return fn_(arguments, ctx); }
    bool reentrant() const override { return reentrant_; }

private:
    Fn fn_;
    bool reentrant_;
};

struct ToolEntry {
    ToolSpec spec;
    Origin origin = Origin::Local;
    std::string endpoint;      // remote origin only
    /// "builtin:<id>", "program", "agentic", "remote:<endpoint>" or "inline".
    std::string handler_ref = "inline";
    json handler_config;       // program/agent document for those handler kinds
    json settings = json::object();  // per-tool manifest settings, merged over spec.settings
    HandlerFactory factory;    // set for inline handlers
    std::chrono::system_clock::time_point registered_at{};
};

/// Resolves handler_ref strings into handler instances at call time.
/// Builtins are looked up by id; other schemes go through a resolver.
class HandlerCatalog {
public:
    using Resolver = std::function<std::shared_ptr<ToolHandler>(const ToolEntry&, const json& settings)>;

    void add_builtin(const std::string& id, HandlerFactory factory);
    void add_scheme(const std::string& scheme, Resolver resolver);
    bool has_builtin(const std::string& id) const;
    std::vector<std::string> builtin_ids() const;

    /// Throws ToolFailure(ExecutionFailed) when the reference cannot be resolved.
    std::shared_ptr<ToolHandler> instantiate(const ToolEntry& entry, const json& settings) const;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, HandlerFactory> builtins_;
    std::map<std::string, Resolver> schemes_;
};

struct ToolFilter {
    std::optional<std::string> tag;
    std::optional<Origin> origin;

    bool matches(const ToolEntry& entry) const;
};

struct ManifestError {
    std::string file;
    ToolError error;
};

struct ManifestReport {
    std::vector<std::string> loaded;
    std::vector<ManifestError> errors;
};

/// The tool table. Reads run concurrently; writes are serialized and publish
/// whole entries, so a reader sees an entry completely or not at all.
class Registry {
public:
    Registry();
    explicit Registry(std::shared_ptr<HandlerCatalog> catalog);

    Registry(const Registry&) = delete;
    Registry& operator=(const Registry&) = delete;

    /// Registers a tool whose handler is resolved from `handler_ref`.
    std::string register_tool(ToolEntry entry);
    std::string register_local(const ToolSpec& spec, HandlerFactory factory);
    std::string register_local(const ToolSpec& spec, std::shared_ptr<ToolHandler> handler);
    std::string register_local(const ToolSpec& spec, const std::string& handler_ref, json handler_config = nullptr,
                               Origin origin = Origin::Local);

    bool unregister(const std::string& name);
    /// Replaces the spec of an existing tool, keeping its handler.
    void update_spec(const ToolSpec& spec);

    std::shared_ptr<const ToolEntry> find(std::string_view name) const;
    bool contains(std::string_view name) const;
    std::size_t size() const;
    /// Bumped on every mutation.
    std::uint64_t version() const;

    /// Sorted by name.
    std::vector<ToolSpec> list_tools(const ToolFilter& filter = {}) const;
    std::vector<std::shared_ptr<const ToolEntry>> entries(const ToolFilter& filter = {}) const;

    /// Accepts a directory containing manifest.json or the manifest file
    /// itself. Bad entries are reported, the rest are registered.
    ManifestReport load_manifest(const std::filesystem::path& path);
    /// Writes one spec file per tool plus manifest.json. Inline handlers
    /// cannot be persisted; their names are returned.
    std::vector<std::string> save_manifest(const std::filesystem::path& dir) const;

    HandlerCatalog& catalog() { return *catalog_; }
    const HandlerCatalog& catalog() const { return *catalog_; }

private:
    std::shared_ptr<HandlerCatalog> catalog_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const ToolEntry>, std::less<>> entries_;
    std::uint64_t version_ = 0;
};

/// Spec settings overlaid with the entry's manifest settings.
json merged_settings(const ToolEntry& entry);

}  // namespace toolhub
