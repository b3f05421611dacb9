#include "selfevo/kernels.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include <omp.h>

namespace selfevo::kernels {

NgramStats& NgramStats::operator+=(const NgramStats& other) {
    for (std::size_t n = 0; n < matches.size(); ++n) {
        matches[n] += other.matches[n];
        totals[n] += other.totals[n];
    }
    candidate_length += other.candidate_length;
    reference_length += other.reference_length;
    return *this;
}

namespace {

std::string ngram_key(const TokenIds& tokens, std::size_t start, int n) {
    return std::string(reinterpret_cast<const char*>(tokens.data() + start), sizeof(std::uint32_t) * n);
}

void check_aligned(std::size_t a, std::size_t b) {
    if (a != b) throw std::invalid_argument("candidate and reference corpora differ in length");
}

}  // namespace

NgramStats sentence_ngram_stats(const TokenIds& candidate, const TokenIds& reference, int max_n) {
    NgramStats stats(max_n);
    stats.candidate_length = static_cast<std::int64_t>(candidate.size());
    stats.reference_length = static_cast<std::int64_t>(reference.size());

    std::unordered_map<std::string, std::int64_t> ref_counts;
    std::unordered_map<std::string, std::int64_t> cand_counts;
    for (int n = 1; n <= max_n; ++n) {
        if (candidate.size() < static_cast<std::size_t>(n)) break;
        ref_counts.clear();
        cand_counts.clear();
        for (std::size_t i = 0; i + n <= reference.size(); ++i) ++ref_counts[ngram_key(reference, i, n)];
        for (std::size_t i = 0; i + n <= candidate.size(); ++i) ++cand_counts[ngram_key(candidate, i, n)];

        std::int64_t matched = 0;
        for (const auto& [gram, count] : cand_counts) {
            if (auto it = ref_counts.find(gram); it != ref_counts.end()) matched += std::min(count, it->second);
        }
        stats.matches[n - 1] = matched;
        stats.totals[n - 1] = static_cast<std::int64_t>(candidate.size() - n + 1);
    }
    return stats;
}

NgramStats corpus_ngram_stats(std::span<const TokenIds> candidates, std::span<const TokenIds> references,
                              int max_n) {
    check_aligned(candidates.size(), references.size());
    const auto count = static_cast<long long>(candidates.size());
    NgramStats total(max_n);

#pragma omp parallel
    {
        NgramStats local(max_n);
#pragma omp for schedule(dynamic, 16) nowait
        for (long long i = 0; i < count; ++i) {
            local += sentence_ngram_stats(candidates[i], references[i], max_n);
        }
#pragma omp critical(selfevo_ngram_reduce)
        total += local;
    }
    return total;
}

void mean_nll_batch(std::span<const std::vector<double>> logprobs, std::span<double> out) {
    if (logprobs.size() != out.size()) throw std::invalid_argument("mean_nll_batch: output size mismatch");
    const auto count = static_cast<long long>(logprobs.size());
    bool empty_row = false;

#pragma omp parallel for schedule(static) reduction(|| : empty_row)
    for (long long i = 0; i < count; ++i) {
        const auto& row = logprobs[i];
        if (row.empty()) {
            empty_row = true;
            continue;
        }
        double sum = 0.0;
        for (double lp : row) sum += lp;
        out[i] = -sum / static_cast<double>(row.size());
    }
    if (empty_row) throw std::invalid_argument("mean_nll_batch: empty logprob row");
}

bool ranks_before(const RankKey& a, const RankKey& b) {
    if (a.ifd != b.ifd) return a.ifd > b.ifd;
    if (a.iteration != b.iteration) return a.iteration < b.iteration;
    return a.id < b.id;
}

std::vector<std::size_t> top_k_indices(std::span<const RankKey> keys, std::size_t k) {
    const std::size_t n = keys.size();
    k = std::min(k, n);
    if (k == 0) return {};

    // Index breaks exact key ties so the result matches a stable sort.
    auto before = [&](std::size_t a, std::size_t b) {
        if (ranks_before(keys[a], keys[b])) return true;
        if (ranks_before(keys[b], keys[a])) return false;
        return a < b;
    };
    std::vector<std::size_t> candidates;

#pragma omp parallel
    {
        const auto threads = static_cast<std::size_t>(omp_get_num_threads());
        const auto tid = static_cast<std::size_t>(omp_get_thread_num());
        const std::size_t chunk = (n + threads - 1) / threads;
        const std::size_t begin = std::min(n, tid * chunk);
        const std::size_t end = std::min(n, begin + chunk);

        std::vector<std::size_t> local(end - begin);
        std::iota(local.begin(), local.end(), begin);
        const std::size_t keep = std::min(k, local.size());
        std::partial_sort(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(keep), local.end(), before);
        local.resize(keep);

#pragma omp critical(selfevo_topk_merge)
        candidates.insert(candidates.end(), local.begin(), local.end());
    }

    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                      before);
    candidates.resize(k);
    return candidates;
}

namespace serial {

NgramStats corpus_ngram_stats(std::span<const TokenIds> candidates, std::span<const TokenIds> references,
                              int max_n) {
    check_aligned(candidates.size(), references.size());
    NgramStats total(max_n);
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const auto& cand = candidates[s];
        const auto& ref = references[s];
        total.candidate_length += static_cast<std::int64_t>(cand.size());
        total.reference_length += static_cast<std::int64_t>(ref.size());
        for (int n = 1; n <= max_n; ++n) {
            if (cand.size() < static_cast<std::size_t>(n)) break;
            std::map<TokenIds, std::int64_t> ref_counts;
            std::map<TokenIds, std::int64_t> cand_counts;
            for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[TokenIds(ref.begin() + i, ref.begin() + i + n)];
            for (std::size_t i = 0; i + n <= cand.size(); ++i) ++cand_counts[TokenIds(cand.begin() + i, cand.begin() + i + n)];
            for (const auto& [gram, count] : cand_counts) {
                auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) total.matches[n - 1] += std::min(count, it->second);
            }
            total.totals[n - 1] += static_cast<std::int64_t>(cand.size() - n + 1);
        }
    }
    return total;
}

void mean_nll_batch(std::span<const std::vector<double>> logprobs, std::span<double> out) {
    if (logprobs.size() != out.size()) throw std::invalid_argument("mean_nll_batch: output size mismatch");
    for (std::size_t i = 0; i < logprobs.size(); ++i) {
        if (logprobs[i].empty()) throw std::invalid_argument("mean_nll_batch: empty logprob row");
        double sum = 0.0;
        for (double lp : logprobs[i]) sum += lp;
        out[i] = -sum / static_cast<double>(logprobs[i].size());
    }
}

std::vector<std::size_t> top_k_indices(std::span<const RankKey> keys, std::size_t k) {
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ranks_before(keys[a], keys[b]); });
    order.resize(std::min(k, order.size()));
    return order;
}

}  // namespace serial

}  // namespace selfevo::kernels
