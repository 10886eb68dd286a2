#pragma once

// Scoring kernels for the finder. Each kernel has a serial reference
// implementation and an OpenMP version that must produce identical output;
// the serial variants are what the unit tests compare against.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace toolhub::kernels {

/// Term-frequency postings of one document, sorted by term id.
struct SparseDocument {
    std::vector<std::pair<std::uint32_t, int>> postings;

    int tf(std::uint32_t term) const;
};

/// Query term with its precomputed weight idf(t) * ln(1 + qf(t)).
struct WeightedTerm {
    std::uint32_t term = 0;
    double weight = 0.0;
};

/// out[d] = sum over query terms of tf(d, t) * weight(t).
void term_scores_serial(std::span<const SparseDocument> docs, std::span<const WeightedTerm> query,
                        std::span<double> out);
void term_scores_parallel(std::span<const SparseDocument> docs, std::span<const WeightedTerm> query,
                          std::span<double> out);

/// `rows` is row-major, rows.size() == out.size() * query.size().
/// out[i] = <q, r_i> / (|q| |r_i|), 0 when either norm is 0.
void cosine_scores_serial(std::span<const double> query, std::span<const double> rows,
                          std::span<const double> row_norms, std::span<double> out);
void cosine_scores_parallel(std::span<const double> query, std::span<const double> rows,
                            std::span<const double> row_norms, std::span<double> out);

double l2_norm(std::span<const double> v);

/// Whether the parallel variants were compiled with OpenMP.
bool openmp_enabled();
int max_threads();

}  // namespace toolhub::kernels
