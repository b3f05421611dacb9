#include "selfevo/selection.hpp"

#include <numeric>
#include <random>
#include <unordered_set>

#include "selfevo/kernels.hpp"

namespace selfevo {

std::string to_string(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::ifd_topk: return "ifd_topk";
        case SelectionStrategy::random_k: return "random_k";
        case SelectionStrategy::all_history: return "all_history";
        case SelectionStrategy::no_history: return "no_history";
    }
    return "ifd_topk";
}

SelectionStrategy selection_strategy_from_string(const std::string& s) {
    if (s == "ifd_topk") return SelectionStrategy::ifd_topk;
    if (s == "random_k") return SelectionStrategy::random_k;
    if (s == "all_history") return SelectionStrategy::all_history;
    if (s == "no_history") return SelectionStrategy::no_history;
    throw ConfigError("unknown selection strategy: " + s);
}

json to_json(const SelectionResult& r) {
    return json{{"iteration", r.iteration},
                {"selected_ids", r.selected_ids},
                {"strategy", to_string(r.strategy_used)},
                {"pool_size", r.pool_size},
                {"k", r.k},
                {"seed", r.seed}};
}

SelectionResult selection_result_from_json(const json& j) {
    SelectionResult r;
    try {
        r.iteration = j.at("iteration").get<int>();
        r.selected_ids = j.at("selected_ids").get<std::vector<std::string>>();
        r.strategy_used = selection_strategy_from_string(j.at("strategy").get<std::string>());
        r.pool_size = j.at("pool_size").get<std::size_t>();
        r.k = j.value("k", std::size_t{0});
        r.seed = j.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid selection result: ") + e.what());
    }
    return r;
}

namespace {

std::vector<std::string> top_k_by_ifd(const std::vector<HistoryEntry>& history, std::size_t k) {
    std::vector<kernels::RankKey> keys;
    keys.reserve(history.size());
    for (const auto& entry : history) {
        if (!entry.score) throw PreconditionError("ifd_topk: no score record for " + entry.pair.id);
        keys.push_back({entry.score->ifd, entry.pair.iteration, entry.pair.id});
    }
    std::vector<std::string> ids;
    for (auto idx : kernels::top_k_indices(keys, k)) ids.push_back(history[idx].pair.id);
    return ids;
}

std::vector<std::string> random_k(const std::vector<HistoryEntry>& history, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> order(history.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    const std::size_t take = std::min(k, order.size());
    // Partial Fisher-Yates: the first `take` slots are a uniform sample.
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < take; ++i) ids.push_back(history[order[i]].pair.id);
    return ids;
}

}  // namespace

SelectionResult select(int iteration, const std::vector<HistoryEntry>& history, const SelectionConfig& config) {
    SelectionResult result;
    result.iteration = iteration;
    result.strategy_used = config.strategy;
    result.pool_size = history.size();
    result.k = config.k;
    result.seed = config.seed;

    switch (config.strategy) {
        case SelectionStrategy::ifd_topk:
            result.selected_ids = top_k_by_ifd(history, config.k);
            break;
        case SelectionStrategy::random_k:
            result.selected_ids = random_k(history, config.k, config.seed);
            break;
        case SelectionStrategy::all_history:
            for (const auto& entry : history) result.selected_ids.push_back(entry.pair.id);
            break;
        case SelectionStrategy::no_history:
            break;
    }
    return result;
}

std::vector<QAPair> assemble_training_set(const std::vector<QAPair>& new_data, const SelectionResult& selected,
                                          const std::unordered_map<std::string, QAPair>& history_lookup) {
    std::vector<QAPair> out;
    out.reserve(new_data.size() + selected.selected_ids.size());
    std::unordered_set<std::string> seen;
    for (const auto& pair : new_data) {
        if (seen.insert(pair.id).second) out.push_back(pair);
    }
    for (const auto& id : selected.selected_ids) {
        auto it = history_lookup.find(id);
        if (it == history_lookup.end()) throw PreconditionError("selected id not found in history: " + id);
        if (seen.insert(id).second) out.push_back(it->second);
    }
    return out;
}

}  // namespace selfevo
