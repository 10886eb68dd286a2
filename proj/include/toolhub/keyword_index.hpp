#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "toolhub/kernels.hpp"
#include "toolhub/match.hpp"
#include "toolhub/protocol.hpp"
#include "toolhub/text.hpp"

namespace toolhub {

struct KeywordScoring {
    double name_bonus = 2.0;    // any query term found in the tool name
    double phrase_bonus = 1.5;  // any query bigram/trigram found verbatim in the description
    bool parallel = true;
};

/// Inverted index over tool specs. Each document combines the tool name and
/// its description field (tool description plus parameter descriptions);
/// the name field and description n-grams are kept separately for bonuses.
///
/// idf(t) = max(0, ln(N / (1 + df(t))) + 1)
class KeywordIndex {
public:
    KeywordIndex() = default;

    static KeywordIndex build(const std::vector<ToolSpec>& specs,
                              const TextNormalizer& normalizer = default_normalizer());

    std::size_t document_count() const noexcept { return docs_.size(); }
    std::size_t df(const std::string& term) const;
    double idf(const std::string& term) const;
    /// Raw count of `term` in the tool's combined text; 0 for unknown tools.
    int tf(const std::string& tool, const std::string& term) const;
    std::vector<std::string> tool_names() const;

    /// Top `limit` tools with a positive score. Throws std::invalid_argument
    /// when limit is 0.
    std::vector<ToolMatch> search(std::string_view query, std::size_t limit,
                                  const KeywordScoring& scoring = {}) const;

private:
    struct Document {
        std::string name;
        std::unordered_set<std::uint32_t> name_terms;
        std::unordered_set<std::string> phrases;
    };

    std::uint32_t intern(const std::string& term);
    std::int64_t term_id(const std::string& term) const;

    const TextNormalizer* normalizer_ = &default_normalizer();
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::vector<std::string> terms_;
    std::vector<std::size_t> df_;
    std::vector<Document> docs_;
    std::vector<kernels::SparseDocument> postings_;  // parallel to docs_
};

inline std::vector<ToolMatch> keyword_search(const KeywordIndex& index, std::string_view query,
                                             std::size_t limit, const KeywordScoring& scoring = {}) {
    return index.search(query, limit, scoring);
}

}  // namespace toolhub
