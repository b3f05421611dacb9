#pragma once

// Data-parallel inner loops. Every kernel in `selfevo::kernels` has a plain
// serial twin in `selfevo::kernels::serial`; tests hold them equal and
// bench/ compares their speed.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace selfevo::kernels {

using TokenIds = std::vector<std::uint32_t>;

/// Clipped n-gram match counts and candidate n-gram totals per order
/// (index 0 holds unigrams), plus summed lengths for the brevity penalty.
struct NgramStats {
    std::vector<std::int64_t> matches;
    std::vector<std::int64_t> totals;
    std::int64_t candidate_length = 0;
    std::int64_t reference_length = 0;

    explicit NgramStats(int max_n = 4) : matches(max_n, 0), totals(max_n, 0) {}
    NgramStats& operator+=(const NgramStats& other);
    bool operator==(const NgramStats&) const = default;
};

NgramStats sentence_ngram_stats(const TokenIds& candidate, const TokenIds& reference, int max_n);

/// Sums sentence statistics over aligned corpora (OpenMP reduction).
NgramStats corpus_ngram_stats(std::span<const TokenIds> candidates, std::span<const TokenIds> references,
                              int max_n);

/// out[i] = -(1/N_i) * sum(logprobs[i]). Rows must be non-empty.
void mean_nll_batch(std::span<const std::vector<double>> logprobs, std::span<double> out);

/// Ordering key for IFD selection: higher ifd first, then lower iteration,
/// then lexicographically smaller id.
struct RankKey {
    double ifd = 0.0;
    int iteration = 0;
    std::string_view id;
};

bool ranks_before(const RankKey& a, const RankKey& b);

/// Indices of the min(k, n) best keys in rank order. Per-thread partial
/// selection followed by a merge.
std::vector<std::size_t> top_k_indices(std::span<const RankKey> keys, std::size_t k);

namespace serial {

NgramStats corpus_ngram_stats(std::span<const TokenIds> candidates, std::span<const TokenIds> references,
                              int max_n);
void mean_nll_batch(std::span<const std::vector<double>> logprobs, std::span<double> out);
/// Full stable sort, then truncate.
std::vector<std::size_t> top_k_indices(std::span<const RankKey> keys, std::size_t k);

}  // namespace serial

}  // namespace selfevo::kernels
