#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "toolhub/agentic.hpp"
#include "toolhub/embedding.hpp"
#include "toolhub/keyword_index.hpp"
#include "toolhub/match.hpp"
#include "toolhub/registry.hpp"

namespace toolhub {

struct FinderOptions {
    KeywordScoring scoring;
    std::size_t agentic_candidates = 20;  // context budget for agentic search
    std::string agent_backend;            // "" selects the default backend
};

struct FindOutcome {
    std::vector<ToolMatch> matches;
    std::vector<std::string> dropped;  // agentic: names outside the candidate set
};

/// Search over the registry. Indexes are immutable snapshots rebuilt when the
/// registry version changes; concurrent searches share a snapshot.
class Finder {
public:
    Finder(const Registry& registry, BackendRegistry* backends, FinderOptions options = {},
           std::shared_ptr<const Embedder> embedder = nullptr);

    /// Throws std::invalid_argument when limit is 0; ToolFailure for agentic
    /// search without a backend.
    FindOutcome find(std::string_view query, SearchStrategy strategy, std::size_t limit);
    std::vector<ToolMatch> find_tool(std::string_view query, SearchStrategy strategy, std::size_t limit) {
        return find(query, strategy, limit).matches;
    }

    struct Snapshot {
        std::uint64_t version = 0;
        std::vector<ToolSpec> specs;
        KeywordIndex keyword;
        VectorStore vectors;
    };

    std::shared_ptr<const Snapshot> snapshot();
    void set_embedder(std::shared_ptr<const Embedder> embedder);
    const Embedder& embedder() const { return *embedder_; }
    FinderOptions& options() { return options_; }

private:
    std::vector<ToolMatch> auto_search(const Snapshot& snap, std::string_view query, std::size_t limit);

    const Registry& registry_;
    BackendRegistry* backends_;
    FinderOptions options_;
    std::shared_ptr<const Embedder> embedder_;
    std::mutex mutex_;
    std::shared_ptr<const Snapshot> snapshot_;
};

/// Union of two ranked lists, each scaled by its own maximum; ranked by the
/// larger scaled score, ties going to the keyword side and then by name.
std::vector<ToolMatch> merge_normalized(const std::vector<ToolMatch>& keyword, const std::vector<ToolMatch>& embedding,
                                        std::size_t limit);

}  // namespace toolhub
