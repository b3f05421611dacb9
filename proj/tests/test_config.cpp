#include <doctest.h>

#include "selfevo/config.hpp"
#include "selfevo/error.hpp"
#include "test_support.hpp"

using namespace selfevo;

TEST_CASE("defaults and path resolution") {
    testing::TempDir dir;
    auto c = run_config_from_json(json{{"corpus_path", "data/docs.jsonl"}, {"eval_path", "/abs/eval.jsonl"}}, dir.get());
    CHECK(c.corpus_path == dir / "data/docs.jsonl");
    CHECK(c.eval_path == "/abs/eval.jsonl");
    CHECK(c.max_iterations == 8);
    CHECK(c.trainer.lora_rank == 4);
    CHECK(c.trainer.lora_alpha == 8);
    CHECK(c.trainer.lora_target == "all");
    CHECK(c.selection.strategy == SelectionStrategy::ifd_topk);
    CHECK_FALSE(c.selection.k.has_value());
    CHECK(c.evaluation.bleu.max_ngram == 4);
    CHECK(c.question_template == default_template_dir() / "question_prompt.v1.txt");
    CHECK(c.scorer_model.role == ModelRole::scorer);
}

TEST_CASE("unknown keys are rejected") {
    json base{{"corpus_path", "a"}, {"eval_path", "b"}};
    auto bad = base;
    bad["max_iteration"] = 3;
    CHECK_THROWS_AS(run_config_from_json(bad, "/"), ConfigError);
    bad = base;
    bad["selection"] = {{"strategy", "ifd_topk"}, {"kk", 2}};
    CHECK_THROWS_AS(run_config_from_json(bad, "/"), ConfigError);
    auto extra = base;
    extra["trainer"] = {{"extra", {{"anything", "goes"}}}};
    CHECK(run_config_from_json(extra, "/").trainer.extra.at("anything") == "goes");
}

TEST_CASE("invalid values") {
    json base{{"corpus_path", "a"}, {"eval_path", "b"}};
    auto j = base;
    j["max_iterations"] = 0;
    CHECK_THROWS_AS(run_config_from_json(j, "/"), ConfigError);
    j = base;
    j["selection"] = {{"strategy", "greedy"}};
    CHECK_THROWS_AS(run_config_from_json(j, "/"), ConfigError);
    j = base;
    j["evaluation"] = {{"max_ngram", "four"}};
    CHECK_THROWS_AS(run_config_from_json(j, "/"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"eval_path", "b"}}, "/"), ConfigError);
}

TEST_CASE("dotted overrides") {
    json j{{"corpus_path", "a"}, {"eval_path", "b"}};
    auto out = apply_overrides(j, {"selection.k=2000", "selection.strategy=random_k", "max_iterations=3",
                                   "trainer.extra.backend_url=http://x"});
    CHECK(out["selection"]["k"] == 2000);
    CHECK(out["selection"]["strategy"] == "random_k");
    CHECK(out["max_iterations"] == 3);
    CHECK(out["trainer"]["extra"]["backend_url"] == "http://x");
    CHECK_THROWS_AS(apply_overrides(j, {"selection.kay=1"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(j, {"nonsense"}), ConfigError);
}

TEST_CASE("snapshot round trip keeps the hash") {
    testing::TempDir dir;
    auto c = testing::mock_config(dir.get(), 3, 2, 2);
    auto again = run_config_from_json(to_json(c), "/");
    CHECK(config_hash(again) == config_hash(c));
    CHECK(to_json(again) == to_json(c));
    CHECK_FALSE(to_json(c).contains("run_dir"));
    CHECK(c.trainer.adapter_command.at(0) == default_mock_trainer().string());

    auto other = c;
    other.selection.k = 3;
    CHECK(config_hash(other) != config_hash(c));
    auto moved = c;
    moved.run_dir = "/elsewhere";
    CHECK(config_hash(moved) == config_hash(c));
}

TEST_CASE("load from file") {
    testing::TempDir dir;
    write_file_atomic(dir / "c.json", R"({"corpus_path":"docs.jsonl","eval_path":"eval.jsonl","run_dir":"out"})");
    auto c = load_run_config(dir / "c.json", {"max_iterations=2"});
    CHECK(c.max_iterations == 2);
    CHECK(c.run_dir == dir / "out");
    write_file_atomic(dir / "bad.json", "{");
    CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir / "none.json"), ConfigError);
}
