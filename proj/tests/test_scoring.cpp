#include <doctest.h>

#include <cmath>
#include <random>

#include "selfevo/error.hpp"
#include "selfevo/scoring.hpp"
#include "test_support.hpp"

using namespace selfevo;

namespace {

const ModelRef scorer{"mock://", "scorer", ModelRole::scorer};

QAPair pair_of(const std::string& id, const std::string& answer) { return {id, 0, "doc", "What now?", answer}; }

/// Scripts conditioned (question context) and direct (empty context) logprobs.
MockScoreRule conditioned_rule(const std::string& answer, std::vector<double> lp) {
    return {answer, std::nullopt, "What now?", "", std::move(lp), ""};
}
MockScoreRule direct_rule(const std::string& answer, std::vector<double> lp) {
    return {answer, std::string(""), "", "", std::move(lp), ""};
}

double oracle_mean_nll(const std::vector<double>& lp) {
    long double s = 0;
    for (double x : lp) s += x;
    return static_cast<double>(-s / lp.size());
}

/// Returns a different token count for the direct route.
class SkewedBackend final : public Backend {
protected:
    std::string do_generate(const ModelRef&, const MessageList&, const GenerationParams&) const override { return "x"; }
    ScoredContinuation do_score(const ModelRef&, const std::string& context, const std::string& c) const override {
        ScoredContinuation out{context, c, {{"a", -0.5}, {"b", -0.5}}, 0};
        if (context.empty()) out.token_scores.push_back({"c", -0.5});
        return out;
    }
};

}  // namespace

TEST_CASE("mean nll") {
    std::vector<TokenScore> s{{"a", -1.0}, {"b", -2.0}, {"c", -3.0}};
    CHECK(mean_nll(s) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(mean_nll(std::span<const TokenScore>{}), PreconditionError);
}

TEST_CASE("score_pair computes the conditioned/direct ratio") {
    MockScript script;
    script.synthesize = false;
    script.scores.push_back(conditioned_rule("one two three", {-0.2, -0.4, -0.6}));
    script.scores.push_back(direct_rule("one two three", {-1.0, -2.0, -3.0}));
    MockBackend mock(script);
    auto r = score_pair(pair_of("p", "one two three"), mock, scorer);
    CHECK(std::abs(r.conditioned_score - 0.4) < 1e-12);
    CHECK(std::abs(r.direct_score - 2.0) < 1e-12);
    CHECK(std::abs(r.ifd - 0.2) < 1e-12);
    CHECK(r.token_count == 3);
}

TEST_CASE("identical routes give IFD exactly one") {
    MockScript script;
    script.synthesize = false;
    script.scores.push_back(conditioned_rule("a b", {-0.37, -1.91}));
    script.scores.push_back(direct_rule("a b", {-0.37, -1.91}));
    MockBackend mock(script);
    CHECK(score_pair(pair_of("p", "a b"), mock, scorer).ifd == 1.0);
}

TEST_CASE("IFD is invariant under uniform logprob scaling") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> lp(-6.0, -0.01);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> c(4), d(4);
        for (auto& x : c) x = lp(rng);
        for (auto& x : d) x = lp(rng);
        double base = 0;
        for (double scale : {1.0, 0.5, 2.0, 10.0}) {
            std::vector<double> cs = c, ds = d;
            for (auto& x : cs) x *= scale;
            for (auto& x : ds) x *= scale;
            MockScript script;
            script.scores.push_back(conditioned_rule("w x y z", cs));
            script.scores.push_back(direct_rule("w x y z", ds));
            MockBackend mock(script);
            auto r = score_pair(pair_of("p", "w x y z"), mock, scorer);
            CHECK(std::abs(r.conditioned_score - oracle_mean_nll(cs)) < 1e-12);
            if (scale == 1.0) base = r.ifd;
            CHECK(std::abs(r.ifd - base) < 1e-12 * std::max(1.0, base));
        }
    }
}

TEST_CASE("degenerate direct score is excluded") {
    MockScript script;
    script.scores.push_back(conditioned_rule("a b", {-0.5, -0.5}));
    script.scores.push_back(direct_rule("a b", {0.0, 0.0}));
    MockBackend mock(script);
    CHECK_THROWS_AS(score_pair(pair_of("p", "a b"), mock, scorer), DegenerateScoreError);

    ScoringSettings s;
    s.max_failure_fraction = 0.5;
    std::vector<QAPair> pairs{pair_of("bad", "a b"), pair_of("good", "c d")};
    auto ds = score_dataset(pairs, mock, scorer, s);
    REQUIRE(ds.records.size() == 1);
    CHECK(ds.records[0].qa_id == "good");
    REQUIRE(ds.excluded.size() == 1);
    CHECK(ds.excluded[0] == ScoreExclusion{"bad", std::string(reason_degenerate_direct)});
}

TEST_CASE("route token count mismatch is an alignment error") {
    SkewedBackend b;
    CHECK_THROWS_AS(score_pair(pair_of("p", "a b"), b, scorer), AlignmentError);
}

TEST_CASE("score_dataset matches score_pair and gates failures") {
    MockScript script;
    script.scores.push_back({"broken answer", std::nullopt, "", "", {}, "capability"});
    MockBackend mock(script);
    std::vector<QAPair> pairs;
    for (int i = 0; i < 9; ++i) pairs.push_back(pair_of("p" + std::to_string(i), "answer number " + std::to_string(i)));
    auto ds = score_dataset(pairs, mock, scorer);
    REQUIRE(ds.records.size() == 9);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto single = score_pair(pairs[i], mock, scorer);
        CHECK(ds.records[i] == single);
    }

    pairs.push_back(pair_of("broken", "broken answer"));
    auto with_failure = score_dataset(pairs, mock, scorer);
    CHECK(with_failure.records.size() == 9);
    CHECK(with_failure.excluded.at(0).qa_id == "broken");

    std::vector<QAPair> mostly_broken{pair_of("b1", "broken answer"), pair_of("ok", "fine answer")};
    CHECK_THROWS_AS(score_dataset(mostly_broken, mock, scorer), FailureGateError);
    CHECK_THROWS_AS(score_dataset({}, mock, scorer), PreconditionError);
}

TEST_CASE("framing contexts") {
    ScoringSettings raw;
    CHECK(conditioned_context("Why?", raw) == "Question: Why?\nAnswer:\n");
    CHECK(direct_context(raw).empty());
    ScoringSettings chat;
    chat.framing = ScoreFraming::chat;
    CHECK(conditioned_context("Why?", chat).find("Why?") != std::string::npos);
    CHECK_FALSE(direct_context(chat).empty());
}

TEST_CASE("score records round trip") {
    testing::TempDir dir;
    std::vector<ScoreRecord> records{{"a", 0.1, 0.2, 0.5, 3}, {"b", 1.0 / 3.0, 2.0 / 3.0, 0.5, 7}};
    write_scores(dir / "s.jsonl", records);
    CHECK(load_scores(dir / "s.jsonl") == records);
}
