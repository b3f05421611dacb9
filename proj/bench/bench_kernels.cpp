#include <random>

#include <benchmark/benchmark.h>

#include "selfevo/kernels.hpp"

namespace k = selfevo::kernels;

namespace {

std::vector<k::TokenIds> corpus(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<k::TokenIds> out(n);
    for (auto& s : out) {
        s.resize(40 + rng() % 120);
        for (auto& t : s) t = static_cast<std::uint32_t>(rng() % 400);
    }
    return out;
}

void BM_ngram_parallel(benchmark::State& state) {
    auto c = corpus(state.range(0), 1), r = corpus(state.range(0), 2);
    for (auto _ : state) benchmark::DoNotOptimize(k::corpus_ngram_stats(c, r, 4));
}

void BM_ngram_serial(benchmark::State& state) {
    auto c = corpus(state.range(0), 1), r = corpus(state.range(0), 2);
    for (auto _ : state) benchmark::DoNotOptimize(k::serial::corpus_ngram_stats(c, r, 4));
}

std::vector<std::vector<double>> logprob_rows(std::size_t n) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> lp(-8.0, 0.0);
    std::vector<std::vector<double>> rows(n);
    for (auto& row : rows) {
        row.resize(16 + rng() % 240);
        for (auto& x : row) x = lp(rng);
    }
    return rows;
}

void BM_mean_nll_parallel(benchmark::State& state) {
    auto rows = logprob_rows(state.range(0));
    std::vector<double> out(rows.size());
    for (auto _ : state) {
        k::mean_nll_batch(rows, out);
        benchmark::DoNotOptimize(out.data());
    }
}

void BM_mean_nll_serial(benchmark::State& state) {
    auto rows = logprob_rows(state.range(0));
    std::vector<double> out(rows.size());
    for (auto _ : state) {
        k::serial::mean_nll_batch(rows, out);
        benchmark::DoNotOptimize(out.data());
    }
}

struct Keys {
    std::vector<std::string> ids;
    std::vector<k::RankKey> keys;
};

Keys rank_keys(std::size_t n) {
    std::mt19937_64 rng(4);
    Keys k;
    k.ids.resize(n);
    k.keys.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        k.ids[i] = "it" + std::to_string(rng() % 8) + ":doc" + std::to_string(i);
        k.keys[i] = {static_cast<double>(rng() % 100000) / 1000.0, static_cast<int>(rng() % 8), k.ids[i]};
    }
    return k;
}

void BM_topk_parallel(benchmark::State& state) {
    auto k = rank_keys(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(k::top_k_indices(k.keys, 2000));
}

void BM_topk_serial(benchmark::State& state) {
    auto k = rank_keys(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(k::serial::top_k_indices(k.keys, 2000));
}

}  // namespace

BENCHMARK(BM_ngram_parallel)->Arg(100)->Arg(4000);
BENCHMARK(BM_ngram_serial)->Arg(100)->Arg(4000);
BENCHMARK(BM_mean_nll_parallel)->Arg(1000)->Arg(32000);
BENCHMARK(BM_mean_nll_serial)->Arg(1000)->Arg(32000);
BENCHMARK(BM_topk_parallel)->Arg(4000)->Arg(32000);
BENCHMARK(BM_topk_serial)->Arg(4000)->Arg(32000);

BENCHMARK_MAIN();
