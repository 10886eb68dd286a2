#include "toolhub/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace toolhub::kernels {

int SparseDocument::tf(std::uint32_t term) const {
    auto it = std::lower_bound(postings.begin(), postings.end(), term,
                               [](const auto& p, std::uint32_t t) { return p.first < t; });
    return (it != postings.end() && it->first == term) ? it->second : 0;
}

namespace {

inline double score_one(const SparseDocument& doc, std::span<const WeightedTerm> query) {
    double s = 0.0;
    for (const auto& q : query) {
        const int tf = doc.tf(q.term);
        if (tf > 0) s += static_cast<double>(tf) * q.weight;
    }
    return s;
}

inline double cosine_one(std::span<const double> query, double qnorm, const double* row, double rnorm) {
    if (qnorm == 0.0 || rnorm == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j) dot += query[j] * row[j];
    return dot / (qnorm * rnorm);
}

}  // namespace

void term_scores_serial(std::span<const SparseDocument> docs, std::span<const WeightedTerm> query,
                        std::span<double> out) {
    assert(out.size() == docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) out[d] = score_one(docs[d], query);
}

void term_scores_parallel(std::span<const SparseDocument> docs, std::span<const WeightedTerm> query,
                          std::span<double> out) {
    assert(out.size() == docs.size());
    const auto n = static_cast<std::ptrdiff_t>(docs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t d = 0; d < n; ++d) out[d] = score_one(docs[d], query);
}

void cosine_scores_serial(std::span<const double> query, std::span<const double> rows,
                          std::span<const double> row_norms, std::span<double> out) {
    const std::size_t dim = query.size();
    assert(rows.size() == out.size() * dim && row_norms.size() == out.size());
    const double qnorm = l2_norm(query);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cosine_one(query, qnorm, rows.data() + i * dim, row_norms[i]);
}

void cosine_scores_parallel(std::span<const double> query, std::span<const double> rows,
                            std::span<const double> row_norms, std::span<double> out) {
    const std::size_t dim = query.size();
    assert(rows.size() == out.size() * dim && row_norms.size() == out.size());
    const double qnorm = l2_norm(query);
    const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[i] = cosine_one(query, qnorm, rows.data() + static_cast<std::size_t>(i) * dim, row_norms[i]);
    }
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

bool openmp_enabled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace toolhub::kernels
