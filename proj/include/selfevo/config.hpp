#pragma once

#include <optional>
#include <string>
#include <vector>

#include "selfevo/backend.hpp"
#include "selfevo/evaluation.hpp"
#include "selfevo/generation.hpp"
#include "selfevo/scoring.hpp"
#include "selfevo/selection.hpp"
#include "selfevo/trainer.hpp"

namespace selfevo {

/// Selection settings as configured; k is resolved per iteration.
struct SelectionSettings {
    SelectionStrategy strategy = SelectionStrategy::ifd_topk;
    std::optional<std::size_t> k;  // unset: k = |D_i|
    std::uint64_t seed = 0;
};

struct RunConfig {
    fs::path corpus_path;
    fs::path eval_path;
    fs::path run_dir;  // not part of the config snapshot or its hash

    ModelRef base_model{"mock://", "mock-base", ModelRole::generator};
    ModelRef scorer_model{"mock://", "mock-scorer", ModelRole::scorer};
    std::optional<ModelRef> baseline_model;

    BackendConfig backend;
    GenerationSettings generation;
    fs::path question_template;
    fs::path answer_template;
    ScoringSettings scoring;
    SelectionSettings selection;
    TrainerConfig trainer;
    EvalSettings evaluation;

    int max_iterations = 8;
    std::optional<double> baseline_bleu;
    std::int64_t run_seed = 0;
    std::optional<double> stop_when_score_at_least;
};

/// Full configuration including defaults. `run_dir` is omitted so the result
/// doubles as the run's config snapshot.
json to_json(const RunConfig& config);

/// Parses a config object. Unknown keys are rejected with ConfigError;
/// relative paths resolve against `base_dir`.
RunConfig run_config_from_json(const json& j, const fs::path& base_dir);

/// Applies `a.b.c=value` overrides to a config object. The value is parsed
/// as JSON when possible, otherwise taken as a string. Keys must name an
/// existing config field.
json apply_overrides(json config, const std::vector<std::string>& overrides);

/// Reads a config file, applies overrides and parses it.
RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides = {});

std::string config_hash(const RunConfig& config);

/// Shipped template directory and mock trainer location, fixed at build time.
fs::path default_template_dir();
fs::path default_mock_trainer();

}  // namespace selfevo
