#include "toolhub/registry.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

namespace toolhub {

namespace fs = std::filesystem;

std::string_view to_string(Origin origin) {
    switch (origin) {
        case Origin::Local: return "local";
        case Origin::Remote: return "remote";
        case Origin::Composed: return "composed";
        case Origin::Generated: return "generated";
    }
    return "local";
}

std::optional<Origin> origin_from_string(std::string_view name) {
    if (name == "local") return Origin::Local;
    if (name == "remote") return Origin::Remote;
    if (name == "composed") return Origin::Composed;
    if (name == "generated") return Origin::Generated;
    return std::nullopt;
}

json merged_settings(const ToolEntry& entry) {
    json out = entry.spec.settings.is_object() ? entry.spec.settings : json::object();
    if (entry.settings.is_object()) {
        for (const auto& [k, v] : entry.settings.items()) out[k] = v;
    }
    return out;
}

// --- HandlerCatalog ----------------------------------------------------------

void HandlerCatalog::add_builtin(const std::string& id, HandlerFactory factory) {
    std::unique_lock lock(mutex_);
    builtins_[id] = std::move(factory);
}

void HandlerCatalog::add_scheme(const std::string& scheme, Resolver resolver) {
    std::unique_lock lock(mutex_);
    schemes_[scheme] = std::move(resolver);
}

bool HandlerCatalog::has_builtin(const std::string& id) const {
    std::shared_lock lock(mutex_);
    return builtins_.count(id) > 0;
}

std::vector<std::string> HandlerCatalog::builtin_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : builtins_) out.push_back(id);
    return out;
}

std::shared_ptr<ToolHandler> HandlerCatalog::instantiate(const ToolEntry& entry, const json& settings) const {
    if (entry.factory) {
        auto h = entry.factory(entry.spec, settings);
        if (!h) throw ToolFailure(ErrorCode::ExecutionFailed, "handler factory for '" + entry.spec.name + "' returned nothing");
        return h;
    }
    const std::string& ref = entry.handler_ref;
    const auto colon = ref.find(':');
    const std::string scheme = ref.substr(0, colon);
    HandlerFactory builtin;
    Resolver resolver;
    {
        std::shared_lock lock(mutex_);
        if (scheme == "builtin") {
            auto it = builtins_.find(colon == std::string::npos ? "" : ref.substr(colon + 1));
            if (it != builtins_.end()) builtin = it->second;
        } else if (auto it = schemes_.find(scheme); it != schemes_.end()) {
            resolver = it->second;
        }
    }
    std::shared_ptr<ToolHandler> h;
    if (builtin) {
        h = builtin(entry.spec, settings);
    } else if (resolver) {
        h = resolver(entry, settings);
    } else {
        throw ToolFailure(ErrorCode::ExecutionFailed,
                          "no handler available for '" + entry.spec.name + "' (reference '" + ref + "')",
                          json{{"handler", ref}});
    }
    if (!h) throw ToolFailure(ErrorCode::ExecutionFailed, "handler '" + ref + "' could not be created");
    return h;
}

// --- ToolFilter --------------------------------------------------------------

bool ToolFilter::matches(const ToolEntry& entry) const {
    if (origin && entry.origin != *origin) return false;
    if (tag && std::find(entry.spec.tags.begin(), entry.spec.tags.end(), *tag) == entry.spec.tags.end()) return false;
    return true;
}

// --- Registry ----------------------------------------------------------------

Registry::Registry() : Registry(std::make_shared<HandlerCatalog>()) {}

Registry::Registry(std::shared_ptr<HandlerCatalog> catalog) : catalog_(std::move(catalog)) {}

std::string Registry::register_tool(ToolEntry entry) {
    if (!is_valid_tool_name(entry.spec.name)) {
        throw ToolFailure(ErrorCode::SpecInvalid, "invalid tool name '" + entry.spec.name + "'", json{{"path", "name"}});
    }
    if (entry.origin == Origin::Remote && entry.endpoint.empty()) {
        throw ToolFailure(ErrorCode::SpecInvalid, "remote tool '" + entry.spec.name + "' has no endpoint",
                          json{{"path", "endpoint"}});
    }
    if (!entry.settings.is_object()) entry.settings = json::object();
    entry.registered_at = std::chrono::system_clock::now();
    const std::string name = entry.spec.name;
    auto shared = std::make_shared<const ToolEntry>(std::move(entry));
    std::unique_lock lock(mutex_);
    if (entries_.count(name)) {
        throw ToolFailure(ErrorCode::SpecInvalid, "a tool named '" + name + "' is already registered",
                          json{{"conflict", name}});
    }
    entries_.emplace(name, std::move(shared));
    ++version_;
    return name;
}

std::string Registry::register_local(const ToolSpec& spec, HandlerFactory factory) {
    ToolEntry e;
    e.spec = spec;
    e.factory = std::move(factory);
    return register_tool(std::move(e));
}

std::string Registry::register_local(const ToolSpec& spec, std::shared_ptr<ToolHandler> handler) {
    return register_local(spec, [handler](const ToolSpec&, const json&) { return handler; });
}

std::string Registry::register_local(const ToolSpec& spec, const std::string& handler_ref, json handler_config,
                                     Origin origin) {
    ToolEntry e;
    e.spec = spec;
    e.origin = origin;
    e.handler_ref = handler_ref;
    e.handler_config = std::move(handler_config);
    if (handler_ref.rfind("remote:", 0) == 0) {
        e.origin = Origin::Remote;
        e.endpoint = handler_ref.substr(7);
    }
    return register_tool(std::move(e));
}

bool Registry::unregister(const std::string& name) {
    std::unique_lock lock(mutex_);
    if (entries_.erase(name) == 0) return false;
    ++version_;
    return true;
}

void Registry::update_spec(const ToolSpec& spec) {
    std::unique_lock lock(mutex_);
    auto it = entries_.find(spec.name);
    if (it == entries_.end()) throw ToolFailure(ErrorCode::ToolNotFound, "no tool named '" + spec.name + "'");
    auto copy = std::make_shared<ToolEntry>(*it->second);
    copy->spec = spec;
    it->second = std::move(copy);
    ++version_;
}

std::shared_ptr<const ToolEntry> Registry::find(std::string_view name) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(name);
    return it == entries_.end() ? nullptr : it->second;
}

bool Registry::contains(std::string_view name) const { return find(name) != nullptr; }

std::size_t Registry::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::uint64_t Registry::version() const {
    std::shared_lock lock(mutex_);
    return version_;
}

std::vector<std::shared_ptr<const ToolEntry>> Registry::entries(const ToolFilter& filter) const {
    std::shared_lock lock(mutex_);
    std::vector<std::shared_ptr<const ToolEntry>> out;
    for (const auto& [_, e] : entries_) {
        if (filter.matches(*e)) out.push_back(e);
    }
    return out;
}

std::vector<ToolSpec> Registry::list_tools(const ToolFilter& filter) const {
    std::vector<ToolSpec> out;
    for (const auto& e : entries(filter)) out.push_back(e->spec);
    return out;
}

// --- manifest ----------------------------------------------------------------

namespace {

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ToolFailure(ErrorCode::SpecInvalid, "cannot read " + path.string(), json{{"path", path.string()}});
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) {
        throw ToolFailure(ErrorCode::SpecInvalid, path.filename().string() + " is not valid JSON",
                          json{{"path", path.string()}});
    }
    return j;
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace

ManifestReport Registry::load_manifest(const fs::path& path) {
    ManifestReport report;
    const fs::path manifest = fs::is_directory(path) ? path / "manifest.json" : path;
    const fs::path dir = manifest.parent_path();
    json doc;
    try {
        doc = read_json_file(manifest);
    } catch (const ToolFailure& f) {
        report.errors.push_back({manifest.string(), f.error()});
        return report;
    }
    if (!doc.is_object() || !doc.contains("tools") || !doc["tools"].is_array()) {
        report.errors.push_back({manifest.string(), {ErrorCode::SpecInvalid, "manifest must have a 'tools' list", json{{"path", "tools"}}}});
        return report;
    }
    for (std::size_t i = 0; i < doc["tools"].size(); ++i) {
        const json& item = doc["tools"][i];
        std::string file = item.is_object() ? item.value("file", std::string()) : std::string();
        try {
            if (!item.is_object() || file.empty()) {
                throw ToolFailure(ErrorCode::SpecInvalid, "manifest entry needs a 'file'",
                                  json{{"path", "tools[" + std::to_string(i) + "].file"}});
            }
            ToolEntry e;
            e.spec = tool_spec_from_json(read_json_file(dir / file));
            e.handler_ref = item.value("handler", std::string("builtin:") + e.spec.name);
            if (item.contains("settings")) e.settings = item["settings"];
            if (item.contains("origin")) {
                auto o = origin_from_string(item["origin"].get<std::string>());
                if (!o) throw ToolFailure(ErrorCode::SpecInvalid, "unknown origin", json{{"path", "origin"}});
                e.origin = *o;
            }
            const auto colon = e.handler_ref.find(':');
            const std::string scheme = e.handler_ref.substr(0, colon);
            const std::string arg = colon == std::string::npos ? "" : e.handler_ref.substr(colon + 1);
            if (scheme == "program" || scheme == "agentic") {
                if (arg.empty()) throw ToolFailure(ErrorCode::SpecInvalid, scheme + " handler needs a file", json{{"path", "handler"}});
                e.handler_config = read_json_file(dir / arg);
                e.handler_ref = scheme;
            } else if (scheme == "remote") {
                e.origin = Origin::Remote;
                e.endpoint = arg;
            }
            report.loaded.push_back(register_tool(std::move(e)));
        } catch (const ToolFailure& f) {
            report.errors.push_back({file, f.error()});
        } catch (const std::exception& ex) {
            report.errors.push_back({file, {ErrorCode::SpecInvalid, ex.what(), nullptr}});
        }
    }
    return report;
}

std::vector<std::string> Registry::save_manifest(const fs::path& dir) const {
    fs::create_directories(dir);
    std::vector<std::string> skipped;
    json tools = json::array();
    for (const auto& e : entries()) {
        if (e->factory || e->handler_ref == "inline") {
            skipped.push_back(e->spec.name);
            continue;
        }
        const std::string file = e->spec.name + ".json";
        write_json_file(dir / file, to_json(e->spec));
        json item{{"file", file}, {"origin", std::string(to_string(e->origin))}, {"settings", e->settings}};
        if (e->handler_ref == "program" || e->handler_ref == "agentic") {
            const std::string side = e->spec.name + (e->handler_ref == "program" ? ".program.json" : ".agent.json");
            write_json_file(dir / side, e->handler_config);
            item["handler"] = e->handler_ref + ":" + side;
        } else {
            item["handler"] = e->handler_ref;
        }
        tools.push_back(std::move(item));
    }
    write_json_file(dir / "manifest.json", json{{"tools", std::move(tools)}});
    return skipped;
}

}  // namespace toolhub
