#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "selfevo/generation.hpp"
#include "selfevo/scoring.hpp"

namespace selfevo {

enum class SelectionStrategy { ifd_topk, random_k, all_history, no_history };

std::string to_string(SelectionStrategy s);
SelectionStrategy selection_strategy_from_string(const std::string& s);

struct SelectionConfig {
    SelectionStrategy strategy = SelectionStrategy::ifd_topk;
    std::size_t k = 0;
    std::uint64_t seed = 0;  // random_k only
};

/// One historical sample. `score` is required for ifd_topk.
struct HistoryEntry {
    QAPair pair;
    std::optional<ScoreRecord> score;
};

struct SelectionResult {
    int iteration = 0;
    std::vector<std::string> selected_ids;
    SelectionStrategy strategy_used = SelectionStrategy::ifd_topk;
    std::size_t pool_size = 0;
    std::size_t k = 0;
    std::uint64_t seed = 0;

    bool operator==(const SelectionResult&) const = default;
};

json to_json(const SelectionResult& r);
SelectionResult selection_result_from_json(const json& j);

/// ifd_topk: the min(k, pool) highest-IFD ids ordered by (ifd desc,
/// iteration asc, qa_id asc). random_k: uniform sample without replacement
/// under `seed`, in draw order. all_history: every id in pool order.
/// no_history: nothing. Throws PreconditionError naming the first pair that
/// lacks a ScoreRecord under ifd_topk.
SelectionResult select(int iteration, const std::vector<HistoryEntry>& history, const SelectionConfig& config);

/// D_i first, then the selected historical pairs; duplicate ids keep the
/// first occurrence, so new data wins.
std::vector<QAPair> assemble_training_set(const std::vector<QAPair>& new_data, const SelectionResult& selected,
                                          const std::unordered_map<std::string, QAPair>& history_lookup);

}  // namespace selfevo
