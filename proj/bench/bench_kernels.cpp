// Serial vs OpenMP finder kernels on synthetic corpora.
//   ./bench_kernels --benchmark_filter=term

#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "toolhub/kernels.hpp"

using namespace toolhub::kernels;

namespace {

struct TermData {
    std::vector<SparseDocument> docs;
    std::vector<WeightedTerm> query;
    std::vector<double> out;
};

TermData make_term_data(std::size_t docs, std::size_t vocab) {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<std::uint32_t> term(0, static_cast<std::uint32_t>(vocab - 1));
    TermData d;
    d.docs.resize(docs);
    for (auto& doc : d.docs) {
        std::vector<std::uint32_t> ids;
        for (int i = 0; i < 40; ++i) ids.push_back(term(rng));
        std::sort(ids.begin(), ids.end());
        for (auto id : ids) {
            if (!doc.postings.empty() && doc.postings.back().first == id) {
                ++doc.postings.back().second;
            } else {
                doc.postings.emplace_back(id, 1);
            }
        }
    }
    for (int i = 0; i < 6; ++i) d.query.push_back({term(rng), 1.0 + i});
    d.out.resize(docs);
    return d;
}

struct DenseData {
    std::vector<double> query, rows, norms, out;
};

DenseData make_dense_data(std::size_t rows, std::size_t dim) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> x;
    DenseData d;
    for (std::size_t i = 0; i < dim; ++i) d.query.push_back(x(rng));
    d.rows.resize(rows * dim);
    for (auto& v : d.rows) v = x(rng);
    for (std::size_t r = 0; r < rows; ++r) d.norms.push_back(l2_norm({d.rows.data() + r * dim, dim}));
    d.out.resize(rows);
    return d;
}

void bm_term_serial(benchmark::State& state) {
    auto d = make_term_data(static_cast<std::size_t>(state.range(0)), 5000);
    for (auto _ : state) {
        term_scores_serial(d.docs, d.query, d.out);
        benchmark::DoNotOptimize(d.out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_term_parallel(benchmark::State& state) {
    auto d = make_term_data(static_cast<std::size_t>(state.range(0)), 5000);
    for (auto _ : state) {
        term_scores_parallel(d.docs, d.query, d.out);
        benchmark::DoNotOptimize(d.out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_cosine_serial(benchmark::State& state) {
    auto d = make_dense_data(static_cast<std::size_t>(state.range(0)), 256);
    for (auto _ : state) {
        cosine_scores_serial(d.query, d.rows, d.norms, d.out);
        benchmark::DoNotOptimize(d.out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_cosine_parallel(benchmark::State& state) {
    auto d = make_dense_data(static_cast<std::size_t>(state.range(0)), 256);
    for (auto _ : state) {
        cosine_scores_parallel(d.query, d.rows, d.norms, d.out);
        benchmark::DoNotOptimize(d.out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(bm_term_serial)->Range(1 << 8, 1 << 16);
BENCHMARK(bm_term_parallel)->Range(1 << 8, 1 << 16);
BENCHMARK(bm_cosine_serial)->Range(1 << 8, 1 << 14);
BENCHMARK(bm_cosine_parallel)->Range(1 << 8, 1 << 14);

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    benchmark::AddCustomContext("openmp", openmp_enabled() ? "on" : "off");
    benchmark::AddCustomContext("max_threads", std::to_string(max_threads()));
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
