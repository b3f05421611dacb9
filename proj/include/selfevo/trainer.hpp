#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selfevo/backend.hpp"
#include "selfevo/generation.hpp"

namespace selfevo {

/// Everything here is serialized verbatim into the adapter's --config file.
/// LoRA defaults: rank 4, alpha 8, target "all". Epochs and learning rate
/// are conventional defaults, not taken from any reported setup.
struct TrainerConfig {
    std::vector<std::string> adapter_command;
    int lora_rank = 4;
    int lora_alpha = 8;
    std::string lora_target = "all";
    int epochs = 3;
    double learning_rate = 1e-4;
    std::map<std::string, std::string> extra;
    double timeout_seconds = 24 * 3600.0;
    /// Train every generation from the base model instead of the parent.
    bool from_base = false;
    /// Spawn the adapter with an empty environment.
    bool clean_env = false;

    bool operator==(const TrainerConfig&) const = default;
};

json to_json(const TrainerConfig& c);
TrainerConfig trainer_config_from_json(const json& j);

/// One model generation. Iteration 0 is the base model and has no parent.
struct ModelLineage {
    int iteration = 0;
    ModelRef model_ref;
    std::optional<int> parent;  // iteration of the parent entry
    std::string artifact_path;  // adapter --out directory; empty for the base model
    std::string training_set_digest;

    bool operator==(const ModelLineage&) const = default;
};

json to_json(const ModelLineage& l);
ModelLineage model_lineage_from_json(const json& j);

/// Trainer-facing dataset: one {"instruction","output"} object per line.
/// Returns the SHA-256 of the written file.
std::string write_training_set(const fs::path& path, const std::vector<QAPair>& pairs);

/// Validates the trainer-facing JSONL and returns its record count.
std::size_t validate_training_set(const fs::path& path);

struct FineTuneJob {
    fs::path training_set;
    fs::path out_dir;      // adapter --out
    fs::path config_path;  // where the serialized TrainerConfig is written
};

/// Runs `<adapter> --base <b> --data <path> --out <dir> --config <path>`
/// where <b> is the parent's artifact directory, or its model name when it
/// has no artifact. On exit 0 reads `<out>/result.json` and returns the
/// child lineage entry. `base` replaces the parent as the training source
/// when config.from_base is set.
ModelLineage fine_tune(const ModelLineage& parent, const FineTuneJob& job, const TrainerConfig& config,
                       const ModelLineage* base = nullptr);

/// theta_0 .. latest by following parent links. Throws SchemaError on a cycle
/// or a dangling parent.
std::vector<ModelLineage> lineage_chain(const ModelLineage& latest, const std::map<int, ModelLineage>& entries);

}  // namespace selfevo
