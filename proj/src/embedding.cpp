#include "toolhub/embedding.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "toolhub/kernels.hpp"

namespace toolhub {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void check_dimension(std::size_t expected, std::size_t got, const std::string& what) {
    if (expected != got) {
        throw ToolFailure(ErrorCode::SpecInvalid,
                          "embedder returned " + std::to_string(got) + " components for " + what + ", expected " +
                              std::to_string(expected),
                          json{{"expected", expected}, {"got", got}});
    }
}

}  // namespace

HashingEmbedder::HashingEmbedder(std::size_t dimension, const TextNormalizer& normalizer)
    : dimension_(dimension), normalizer_(&normalizer) {
    if (dimension_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

std::vector<double> HashingEmbedder::embed(std::string_view text) const {
    std::vector<double> v(dimension_, 0.0);
    for (const auto& term : normalizer_->terms(text)) {
        const std::uint64_t h = fnv1a(term);
        const std::size_t bucket = static_cast<std::size_t>(h % dimension_);
        v[bucket] += ((h >> 32) & 1U) ? -1.0 : 1.0;
    }
    const double norm = kernels::l2_norm(v);
    if (norm > 0.0) {
        for (double& x : v) x /= norm;
    }
    return v;
}

VectorStore VectorStore::build(const std::vector<ToolSpec>& specs, const Embedder& embedder) {
    VectorStore store;
    store.dimension_ = embedder.dimension();
    for (const auto& spec : specs) {
        auto v = embedder.embed(spec.description);
        check_dimension(store.dimension_, v.size(), "tool '" + spec.name + "'");
        const double norm = kernels::l2_norm(v);
        if (!(norm > 0.0)) {
            store.skipped_.push_back(spec.name);
            continue;
        }
        store.names_.push_back(spec.name);
        store.rows_.insert(store.rows_.end(), v.begin(), v.end());
        store.norms_.push_back(norm);
    }
    return store;
}

VectorStore VectorStore::from_vectors(std::vector<std::string> names, const std::vector<std::vector<double>>& vectors) {
    if (names.size() != vectors.size()) throw std::invalid_argument("names and vectors differ in length");
    VectorStore store;
    store.dimension_ = vectors.empty() ? 0 : vectors.front().size();
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        check_dimension(store.dimension_, vectors[i].size(), "vector " + std::to_string(i));
        const double norm = kernels::l2_norm(vectors[i]);
        if (!(norm > 0.0)) {
            store.skipped_.push_back(names[i]);
            continue;
        }
        store.names_.push_back(names[i]);
        store.rows_.insert(store.rows_.end(), vectors[i].begin(), vectors[i].end());
        store.norms_.push_back(norm);
    }
    return store;
}

VectorStore VectorStore::scaled(double factor) const {
    VectorStore out = *this;
    for (double& x : out.rows_) x *= factor;
    for (double& n : out.norms_) n = kernels::l2_norm({out.rows_.data() + (&n - out.norms_.data()) * dimension_, dimension_});
    return out;
}

std::vector<ToolMatch> VectorStore::search(std::span<const double> query, std::size_t k, bool parallel) const {
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    if (names_.empty()) return {};
    check_dimension(dimension_, query.size(), "query");
    std::vector<double> scores(names_.size());
    if (parallel) {
        kernels::cosine_scores_parallel(query, rows_, norms_, scores);
    } else {
        kernels::cosine_scores_serial(query, rows_, norms_, scores);
    }
    std::vector<ToolMatch> matches;
    matches.reserve(names_.size());
    for (std::size_t i = 0; i < names_.size(); ++i) {
        matches.push_back({names_[i], scores[i], SearchStrategy::Embedding, std::nullopt});
    }
    sort_matches(matches);
    if (matches.size() > k) matches.resize(k);
    return matches;
}

std::vector<ToolMatch> embedding_search(const VectorStore& store, const Embedder& embedder, std::string_view query,
                                        std::size_t k) {
    const auto q = embedder.embed(query);
    if (store.size() == 0) {
        if (k == 0) throw std::invalid_argument("k must be at least 1");
        return {};
    }
    return store.search(q, k);
}

}  // namespace toolhub
