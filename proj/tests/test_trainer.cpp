#include <doctest.h>

#include "selfevo/config.hpp"
#include "selfevo/error.hpp"
#include "selfevo/process.hpp"
#include "selfevo/trainer.hpp"
#include "test_support.hpp"

using namespace selfevo;

namespace {

std::vector<QAPair> sample_pairs(int n) {
    std::vector<QAPair> out;
    for (int i = 0; i < n; ++i) {
        out.push_back({"it0:d" + std::to_string(i), 0, "d" + std::to_string(i), "Question " + std::to_string(i) + "?",
                       "Answer number " + std::to_string(i)});
    }
    return out;
}

TrainerConfig mock_trainer_config() {
    TrainerConfig c;
    c.adapter_command = {default_mock_trainer().string()};
    c.timeout_seconds = 30;
    return c;
}

ModelLineage base_lineage() { return {0, {"mock://", "mock-base", ModelRole::generator}, std::nullopt, "", ""}; }

FineTuneJob job_in(const testing::TempDir& dir, const std::string& name) {
    return {dir / "train.jsonl", dir / name, dir / (name + ".config.json")};
}

}  // namespace

TEST_CASE("training set file format") {
    testing::TempDir dir;
    auto digest = write_training_set(dir / "train.jsonl", sample_pairs(3));
    CHECK(digest == sha256_file(dir / "train.jsonl"));
    CHECK(validate_training_set(dir / "train.jsonl") == 3);
    std::vector<json> lines;
    for_each_jsonl(dir / "train.jsonl", [&](const json& j, std::size_t) { lines.push_back(j); });
    CHECK(lines[1] == json{{"instruction", "Question 1?"}, {"output", "Answer number 1"}});

    write_file_atomic(dir / "empty.jsonl", "");
    CHECK_THROWS_AS(validate_training_set(dir / "empty.jsonl"), PreconditionError);
    CHECK_THROWS_AS(validate_training_set(dir / "none.jsonl"), PreconditionError);
}

TEST_CASE("mock adapter produces a child generation") {
    testing::TempDir dir;
    write_training_set(dir / "train.jsonl", sample_pairs(10));
    auto config = mock_trainer_config();
    config.clean_env = true;
    auto child = fine_tune(base_lineage(), job_in(dir, "gen1"), config);
    CHECK(child.iteration == 1);
    CHECK(child.parent == 0);
    CHECK(child.model_ref.model_name == "mock-base@1");
    CHECK(child.model_ref.backend_url == "mock://");
    CHECK(child.artifact_path == (dir / "gen1").string());
    CHECK(child.training_set_digest == sha256_file(dir / "train.jsonl"));

    auto adapter = json::parse(read_file(dir / "gen1/adapter_config.json"));
    CHECK(adapter["lora_rank"] == 4);
    CHECK(adapter["lora_alpha"] == 8);
    CHECK(adapter["lora_target"] == "all");
    auto written = json::parse(read_file(dir / "gen1.config.json"));
    CHECK(trainer_config_from_json(written) == config);

    auto grandchild = fine_tune(child, job_in(dir, "gen2"), config);
    CHECK(grandchild.model_ref.model_name == "mock-base@2");
    CHECK(grandchild.parent == 1);

    config.from_base = true;
    auto base = base_lineage();
    auto from_base = fine_tune(child, job_in(dir, "gen2b"), config, &base);
    CHECK(from_base.model_ref.model_name == "mock-base@1");
    CHECK(from_base.parent == 1);
}

TEST_CASE("adapter failure surfaces exit code and stderr") {
    testing::TempDir dir;
    write_training_set(dir / "train.jsonl", sample_pairs(2));
    TrainerConfig config;
    config.adapter_command = {"/bin/sh", "-c", "echo OOM >&2; exit 1", "adapter"};
    try {
        fine_tune(base_lineage(), job_in(dir, "out"), config);
        FAIL("expected TrainerError");
    } catch (const TrainerError& e) {
        CHECK(e.exit_code() == 1);
        CHECK(std::string(e.what()).find("OOM") != std::string::npos);
    }
}

TEST_CASE("adapter without result.json or with a bad one") {
    testing::TempDir dir;
    write_training_set(dir / "train.jsonl", sample_pairs(2));
    TrainerConfig config;
    config.adapter_command = {"/bin/sh", "-c", "exit 0", "adapter"};
    CHECK_THROWS_AS(fine_tune(base_lineage(), job_in(dir, "a"), config), TrainerError);

    config.adapter_command = {"/bin/sh", "-c", "mkdir -p \"$6\" && echo '{\"model_ref\":{}}' > \"$6/result.json\"", "adapter"};
    CHECK_THROWS_AS(fine_tune(base_lineage(), job_in(dir, "b"), config), TrainerError);
}

TEST_CASE("adapter timeout") {
    testing::TempDir dir;
    write_training_set(dir / "train.jsonl", sample_pairs(2));
    TrainerConfig config;
    config.adapter_command = {"/bin/sh", "-c", "sleep 5", "adapter"};
    config.timeout_seconds = 0.3;
    CHECK_THROWS_AS(fine_tune(base_lineage(), job_in(dir, "t"), config), TrainerError);
}

TEST_CASE("process runner captures output and environment") {
    auto r = run_process({"/bin/sh", "-c", "echo out; echo err >&2; exit 3"}, std::chrono::seconds(5));
    CHECK(r.exit_code == 3);
    CHECK(r.stdout_text == "out\n");
    CHECK(r.stderr_text == "err\n");
    auto clean = run_process({"/usr/bin/env"}, std::chrono::seconds(5), true);
    CHECK(clean.exit_code == 0);
    CHECK(clean.stdout_text.empty());
    auto missing = run_process({"/definitely/not/here"}, std::chrono::seconds(5));
    CHECK(missing.exit_code != 0);
}

TEST_CASE("lineage chains follow parent links") {
    std::map<int, ModelLineage> entries;
    entries[0] = base_lineage();
    entries[1] = {1, {"mock://", "m@1", ModelRole::generator}, 0, "a", "x"};
    entries[2] = {2, {"mock://", "m@2", ModelRole::generator}, 1, "b", "y"};
    auto chain = lineage_chain(entries[2], entries);
    REQUIRE(chain.size() == 3);
    CHECK(chain.front().iteration == 0);
    CHECK(chain.back().model_ref.model_name == "m@2");

    entries[0].parent = 2;
    CHECK_THROWS_AS(lineage_chain(entries[2], entries), SchemaError);
    entries.erase(0);
    entries[1].parent = 7;
    CHECK_THROWS_AS(lineage_chain(entries[2], entries), SchemaError);

    ModelLineage l = entries[2];
    CHECK(model_lineage_from_json(to_json(l)) == l);
}

TEST_CASE("trainer config validation") {
    CHECK_THROWS_AS(trainer_config_from_json(json{{"epochs", 0}}), ConfigError);
    CHECK_THROWS_AS(trainer_config_from_json(json{{"lora_rank", "four"}}), ConfigError);
    TrainerConfig d;
    CHECK(d.lora_rank == 4);
    CHECK(d.lora_alpha == 8);
    CHECK(d.lora_target == "all");
}
