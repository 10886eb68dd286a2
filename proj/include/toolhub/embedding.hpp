#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toolhub/match.hpp"
#include "toolhub/protocol.hpp"
#include "toolhub/text.hpp"

namespace toolhub {

/// Text in, fixed-dimension vector out.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> embed(std::string_view text) const = 0;
};

/// Feature-hashing embedder: each normalized term is hashed (FNV-1a 64) into
/// one of `dimension` buckets with a hash-derived sign, then L2-normalized.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dimension = 256, const TextNormalizer& normalizer = default_normalizer());

    std::size_t dimension() const override { return dimension_; }
    std::vector<double> embed(std::string_view text) const override;

private:
    std::size_t dimension_;
    const TextNormalizer* normalizer_;
};

/// Exact nearest-neighbour store (linear scan, cosine similarity).
class VectorStore {
public:
    VectorStore() = default;

    /// Embeds every spec's description. Descriptions embedding to a zero
    /// vector are skipped and listed in skipped(). Throws
    /// ToolFailure(SpecInvalid) if the embedder returns the wrong dimension.
    static VectorStore build(const std::vector<ToolSpec>& specs, const Embedder& embedder);
    static VectorStore from_vectors(std::vector<std::string> names, const std::vector<std::vector<double>>& vectors);

    /// Copy with every stored vector multiplied by `factor`.
    VectorStore scaled(double factor) const;

    std::size_t size() const noexcept { return names_.size(); }
    std::size_t dimension() const noexcept { return dimension_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<std::string>& skipped() const noexcept { return skipped_; }

    /// Top-k by cosine similarity (all entries when k exceeds size()).
    std::vector<ToolMatch> search(std::span<const double> query, std::size_t k, bool parallel = true) const;

private:
    std::size_t dimension_ = 0;
    std::vector<std::string> names_;
    std::vector<double> rows_;
    std::vector<double> norms_;
    std::vector<std::string> skipped_;
};

std::vector<ToolMatch> embedding_search(const VectorStore& store, const Embedder& embedder,
                                        std::string_view query, std::size_t k);

}  // namespace toolhub
