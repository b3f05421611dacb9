#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "selfevo/error.hpp"
#include "selfevo/selection.hpp"

using namespace selfevo;

namespace {

HistoryEntry entry(int iteration, const std::string& doc, double ifd) {
    QAPair p{qa_pair_id(iteration, doc), iteration, doc, "q?", "answer"};
    return {p, ScoreRecord{p.id, ifd, 1.0, ifd, 1}};
}

/// Brute force: sort a copy by the documented key and take a prefix.
std::vector<std::string> oracle_topk(std::vector<HistoryEntry> pool, std::size_t k) {
    std::sort(pool.begin(), pool.end(), [](const HistoryEntry& a, const HistoryEntry& b) {
        if (a.score->ifd != b.score->ifd) return a.score->ifd > b.score->ifd;
        if (a.pair.iteration != b.pair.iteration) return a.pair.iteration < b.pair.iteration;
        return a.pair.id < b.pair.id;
    });
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < std::min(k, pool.size()); ++i) ids.push_back(pool[i].pair.id);
    return ids;
}

}  // namespace

TEST_CASE("ifd_topk picks the highest scores") {
    std::vector<HistoryEntry> pool{entry(0, "a", 0.4), entry(0, "b", 0.9), entry(1, "c", 0.7), entry(1, "d", 0.1)};
    auto r = select(2, pool, {SelectionStrategy::ifd_topk, 2, 0});
    CHECK(r.selected_ids == std::vector<std::string>{"it0:b", "it1:c"});
    CHECK(r.pool_size == 4);
    CHECK(r.iteration == 2);
}

TEST_CASE("ties break by iteration then id") {
    std::vector<HistoryEntry> pool{entry(1, "a", 0.5), entry(0, "z", 0.5), entry(0, "b", 0.5)};
    auto r = select(2, pool, {SelectionStrategy::ifd_topk, 3, 0});
    CHECK(r.selected_ids == std::vector<std::string>{"it0:b", "it0:z", "it1:a"});
}

TEST_CASE("k larger than the pool and empty pool") {
    std::vector<HistoryEntry> pool{entry(0, "a", 0.4)};
    CHECK(select(1, pool, {SelectionStrategy::ifd_topk, 10, 0}).selected_ids.size() == 1);
    CHECK(select(0, {}, {SelectionStrategy::ifd_topk, 10, 0}).selected_ids.empty());
    CHECK(select(0, {}, {SelectionStrategy::random_k, 10, 0}).selected_ids.empty());
}

TEST_CASE("ifd_topk requires scores") {
    std::vector<HistoryEntry> pool{entry(0, "a", 0.4)};
    pool.push_back({QAPair{"it0:x", 0, "x", "q?", "a"}, std::nullopt});
    try {
        select(1, pool, {SelectionStrategy::ifd_topk, 1, 0});
        FAIL("expected PreconditionError");
    } catch (const PreconditionError& e) {
        CHECK(std::string(e.what()).find("it0:x") != std::string::npos);
    }
    CHECK_NOTHROW(select(1, pool, {SelectionStrategy::random_k, 1, 0}));
}

TEST_CASE("ifd_topk agrees with a full sort and ignores input order") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t n = 1 + rng() % 400;
        std::vector<HistoryEntry> pool;
        for (std::size_t i = 0; i < n; ++i) {
            double ifd = static_cast<double>(rng() % 20) / 10.0;  // many duplicates
            pool.push_back(entry(static_cast<int>(rng() % 4), "d" + std::to_string(i), ifd));
        }
        std::size_t k = rng() % (n + 5);
        auto expected = oracle_topk(pool, k);
        CHECK(select(4, pool, {SelectionStrategy::ifd_topk, k, 0}).selected_ids == expected);
        std::shuffle(pool.begin(), pool.end(), rng);
        CHECK(select(4, pool, {SelectionStrategy::ifd_topk, k, 0}).selected_ids == expected);
    }
}

TEST_CASE("random_k is seeded, distinct and roughly uniform") {
    std::vector<HistoryEntry> pool;
    for (int i = 0; i < 10; ++i) pool.push_back(entry(0, "d" + std::to_string(i), 0.0));
    auto a = select(1, pool, {SelectionStrategy::random_k, 4, 42});
    auto b = select(1, pool, {SelectionStrategy::random_k, 4, 42});
    CHECK(a.selected_ids == b.selected_ids);
    auto ids = a.selected_ids;
    std::sort(ids.begin(), ids.end());
    CHECK(std::unique(ids.begin(), ids.end()) == ids.end());
    CHECK(a.selected_ids.size() == 4);

    // Each element is chosen with probability k/n = 0.4.
    const int trials = 1000;
    std::map<std::string, int> hits;
    for (int s = 0; s < trials; ++s) {
        for (const auto& id : select(1, pool, {SelectionStrategy::random_k, 4, static_cast<std::uint64_t>(s)}).selected_ids) {
            ++hits[id];
        }
    }
    const double mean = trials * 0.4;
    const double sigma = std::sqrt(trials * 0.4 * 0.6);
    for (const auto& e : pool) CHECK(std::abs(hits[e.pair.id] - mean) < 3 * sigma + 1);
}

TEST_CASE("all_history and no_history") {
    std::vector<HistoryEntry> pool{entry(0, "a", 0.4), entry(1, "b", 0.9)};
    CHECK(select(2, pool, {SelectionStrategy::all_history, 1, 0}).selected_ids ==
          std::vector<std::string>{"it0:a", "it1:b"});
    CHECK(select(2, pool, {SelectionStrategy::no_history, 1, 0}).selected_ids.empty());
}

TEST_CASE("training set assembly puts new data first and dedups") {
    std::vector<QAPair> fresh{{"it2:a", 2, "a", "q?", "new"}};
    std::unordered_map<std::string, QAPair> lookup{{"it0:a", {"it0:a", 0, "a", "q?", "old"}},
                                                   {"it2:a", {"it2:a", 2, "a", "q?", "stale"}}};
    SelectionResult sel;
    sel.selected_ids = {"it0:a", "it2:a"};
    auto set = assemble_training_set(fresh, sel, lookup);
    REQUIRE(set.size() == 2);
    CHECK(set[0].answer == "new");
    CHECK(set[1].id == "it0:a");

    sel.selected_ids = {"it9:missing"};
    CHECK_THROWS_AS(assemble_training_set(fresh, sel, lookup), PreconditionError);
}

TEST_CASE("selection result round trip and strategy names") {
    SelectionResult r{3, {"a", "b"}, SelectionStrategy::random_k, 10, 2, 77};
    CHECK(selection_result_from_json(to_json(r)) == r);
    for (auto s : {SelectionStrategy::ifd_topk, SelectionStrategy::random_k, SelectionStrategy::all_history,
                   SelectionStrategy::no_history}) {
        CHECK(selection_strategy_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(selection_strategy_from_string("best"), ConfigError);
}
