#include "toolhub/finder.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace toolhub {

Finder::Finder(const Registry& registry, BackendRegistry* backends, FinderOptions options,
               std::shared_ptr<const Embedder> embedder)
    : registry_(registry), backends_(backends), options_(std::move(options)), embedder_(std::move(embedder)) {
    if (!embedder_) embedder_ = std::make_shared<HashingEmbedder>();
}

void Finder::set_embedder(std::shared_ptr<const Embedder> embedder) {
    std::lock_guard lock(mutex_);
    embedder_ = std::move(embedder);
    snapshot_.reset();
}

std::shared_ptr<const Finder::Snapshot> Finder::snapshot() {
    std::lock_guard lock(mutex_);
    const auto version = registry_.version();
    if (snapshot_ && snapshot_->version == version) return snapshot_;
    auto snap = std::make_shared<Snapshot>();
    snap->version = version;
    snap->specs = registry_.list_tools();
    snap->keyword = KeywordIndex::build(snap->specs);
    snap->vectors = VectorStore::build(snap->specs, *embedder_);
    snapshot_ = std::move(snap);
    return snapshot_;
}

std::vector<ToolMatch> merge_normalized(const std::vector<ToolMatch>& keyword, const std::vector<ToolMatch>& embedding,
                                        std::size_t limit) {
    struct Merged {
        ToolMatch match;
        bool from_keyword = false;
    };
    auto max_of = [](const std::vector<ToolMatch>& v) {
        double m = 0.0;
        for (const auto& x : v) m = std::max(m, x.score);
        return m;
    };
    const double kmax = max_of(keyword);
    const double emax = max_of(embedding);
    std::map<std::string, Merged> merged;
    for (const auto& m : keyword) {
        if (!(m.score > 0.0)) continue;
        ToolMatch copy = m;
        copy.score = m.score / kmax;
        merged[m.tool_name] = {std::move(copy), true};
    }
    for (const auto& m : embedding) {
        if (!(m.score > 0.0)) continue;
        const double s = m.score / emax;
        auto it = merged.find(m.tool_name);
        if (it == merged.end()) {
            ToolMatch copy = m;
            copy.score = s;
            merged[m.tool_name] = {std::move(copy), false};
        } else if (s > it->second.match.score) {
            it->second.match.score = s;
            it->second.match.strategy = SearchStrategy::Embedding;
        }
    }
    std::vector<Merged> all;
    for (auto& [_, m] : merged) all.push_back(std::move(m));
    std::sort(all.begin(), all.end(), [](const Merged& a, const Merged& b) {
        if (a.match.score != b.match.score) return a.match.score > b.match.score;
        if (a.from_keyword != b.from_keyword) return a.from_keyword;
        return a.match.tool_name < b.match.tool_name;
    });
    std::vector<ToolMatch> out;
    for (auto& m : all) {
        if (out.size() == limit) break;
        out.push_back(std::move(m.match));
    }
    return out;
}

std::vector<ToolMatch> Finder::auto_search(const Snapshot& snap, std::string_view query, std::size_t limit) {
    auto kw = snap.keyword.search(query, limit, options_.scoring);
    std::vector<ToolMatch> emb;
    if (snap.vectors.size() > 0) emb = embedding_search(snap.vectors, *embedder_, query, limit);
    return merge_normalized(kw, emb, limit);
}

FindOutcome Finder::find(std::string_view query, SearchStrategy strategy, std::size_t limit) {
    if (limit == 0) throw std::invalid_argument("limit must be at least 1");
    auto snap = snapshot();
    FindOutcome out;
    switch (strategy) {
        case SearchStrategy::Keyword:
            out.matches = snap->keyword.search(query, limit, options_.scoring);
            break;
        case SearchStrategy::Embedding:
            if (snap->vectors.size() > 0) out.matches = embedding_search(snap->vectors, *embedder_, query, limit);
            break;
        case SearchStrategy::Auto:
            out.matches = auto_search(*snap, query, limit);
            break;
        case SearchStrategy::Agentic: {
            const std::string backend = options_.agent_backend;
            if (!backends_ || backends_->empty() || (!backend.empty() && !backends_->has(backend))) {
                const std::string shown = backend.empty() ? std::string("(default)") : backend;
                throw ToolFailure(ErrorCode::ExecutionFailed,
                                  "strategy 'agentic' needs an agent backend; backend '" + shown + "' is not configured",
                                  json{{"backend", shown}});
            }
            if (snap->specs.empty()) break;
            const std::size_t budget = std::max<std::size_t>(1, options_.agentic_candidates);
            // Best auto-search hits first, then the rest of the registry in
            // name order until the budget is full.
            std::vector<ToolSpec> candidates;
            std::set<std::string> taken;
            for (const auto& m : auto_search(*snap, query, budget)) {
                for (const auto& spec : snap->specs) {
                    if (spec.name == m.tool_name && taken.insert(spec.name).second) candidates.push_back(spec);
                }
            }
            for (const auto& spec : snap->specs) {
                if (candidates.size() >= budget) break;
                if (taken.insert(spec.name).second) candidates.push_back(spec);
            }
            auto found = agentic_find(query, candidates, *backends_, backend);
            out.matches = std::move(found.matches);
            out.dropped = std::move(found.dropped);
            if (out.matches.size() > limit) out.matches.resize(limit);
            break;
        }
    }
    return out;
}

}  // namespace toolhub
