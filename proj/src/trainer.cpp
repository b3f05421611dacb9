#include "selfevo/trainer.hpp"

#include <algorithm>
#include <set>

#include "selfevo/error.hpp"
#include "selfevo/process.hpp"

namespace selfevo {

json to_json(const TrainerConfig& c) {
    return json{{"adapter_command", c.adapter_command},
                {"lora_rank", c.lora_rank},
                {"lora_alpha", c.lora_alpha},
                {"lora_target", c.lora_target},
                {"epochs", c.epochs},
                {"learning_rate", c.learning_rate},
                {"extra", c.extra},
                {"timeout_seconds", c.timeout_seconds},
                {"from_base", c.from_base},
                {"clean_env", c.clean_env}};
}

TrainerConfig trainer_config_from_json(const json& j) {
    TrainerConfig c;
    try {
        c.adapter_command = j.value("adapter_command", c.adapter_command);
        c.lora_rank = j.value("lora_rank", c.lora_rank);
        c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
        c.lora_target = j.value("lora_target", c.lora_target);
        c.epochs = j.value("epochs", c.epochs);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.extra = j.value("extra", c.extra);
        c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
        c.from_base = j.value("from_base", c.from_base);
        c.clean_env = j.value("clean_env", c.clean_env);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid trainer config: ") + e.what());
    }
    if (c.epochs < 1) throw ConfigError("trainer.epochs must be positive");
    if (!(c.learning_rate > 0)) throw ConfigError("trainer.learning_rate must be positive");
    if (c.lora_rank < 1 || c.lora_alpha < 1) throw ConfigError("trainer.lora_rank and lora_alpha must be positive");
    if (c.timeout_seconds <= 0) throw ConfigError("trainer.timeout_seconds must be positive");
    return c;
}

json to_json(const ModelLineage& l) {
    return json{{"iteration", l.iteration},
                {"model_ref", to_json(l.model_ref)},
                {"parent", l.parent ? json(*l.parent) : json(nullptr)},
                {"artifact_path", l.artifact_path},
                {"training_set_digest", l.training_set_digest}};
}

ModelLineage model_lineage_from_json(const json& j) {
    ModelLineage l;
    try {
        l.iteration = j.at("iteration").get<int>();
        l.model_ref = model_ref_from_json(j.at("model_ref"));
        if (auto it = j.find("parent"); it != j.end() && !it->is_null()) l.parent = it->get<int>();
        l.artifact_path = j.value("artifact_path", "");
        l.training_set_digest = j.value("training_set_digest", "");
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid lineage entry: ") + e.what());
    }
    return l;
}

std::string write_training_set(const fs::path& path, const std::vector<QAPair>& pairs) {
    std::vector<json> records;
    records.reserve(pairs.size());
    for (const auto& p : pairs) records.push_back(json{{"instruction", p.question}, {"output", p.answer}});
    auto content = to_jsonl(records);
    write_file_atomic(path, content);
    return sha256_hex(content);
}

std::size_t validate_training_set(const fs::path& path) {
    if (!fs::exists(path)) throw PreconditionError("training set not found: " + path.string());
    std::size_t count = 0;
    for_each_jsonl(path, [&](const json& record, std::size_t line) {
        require_string(record, "instruction", line);
        require_string(record, "output", line);
        ++count;
    });
    if (count == 0) throw PreconditionError("training set is empty: " + path.string());
    return count;
}

namespace {

std::string base_argument(const ModelLineage& source) {
    return source.artifact_path.empty() ? source.model_ref.model_name : source.artifact_path;
}

std::string tail(const std::string& s, std::size_t max_chars = 2000) {
    return s.size() <= max_chars ? s : s.substr(s.size() - max_chars);
}

}  // namespace

ModelLineage fine_tune(const ModelLineage& parent, const FineTuneJob& job, const TrainerConfig& config,
                       const ModelLineage* base) {
    validate_training_set(job.training_set);
    if (config.adapter_command.empty()) throw ConfigError("trainer.adapter_command is empty");

    fs::create_directories(job.out_dir);
    write_file_atomic(job.config_path, to_json(config).dump(2) + "\n");
    const fs::path result_path = job.out_dir / "result.json";
    if (fs::exists(result_path)) fs::remove(result_path);

    const ModelLineage& source = (config.from_base && base) ? *base : parent;
    std::vector<std::string> argv = config.adapter_command;
    argv.insert(argv.end(), {"--base", base_argument(source), "--data", job.training_set.string(), "--out",
                             job.out_dir.string(), "--config", job.config_path.string()});

    log_info("fine-tuning generation " + std::to_string(parent.iteration + 1) + " with " + argv.front());
    auto proc = run_process(argv, std::chrono::duration<double>(config.timeout_seconds), config.clean_env);
    if (proc.timed_out) {
        throw TrainerError("trainer adapter timed out after " + std::to_string(config.timeout_seconds) + "s");
    }
    if (proc.exit_code != 0) {
        throw TrainerError("trainer adapter exited with code " + std::to_string(proc.exit_code) +
                               ": " + tail(proc.stderr_text),
                           proc.exit_code);
    }
    if (!fs::exists(result_path)) throw TrainerError("trainer adapter did not write " + result_path.string());

    json result;
    try {
        result = json::parse(read_file(result_path));
    } catch (const json::parse_error& e) {
        throw TrainerError("invalid result.json: " + std::string(e.what()));
    }
    if (!result.is_object() || !result.contains("model_ref")) {
        throw TrainerError("result.json lacks model_ref");
    }

    ModelLineage child;
    child.iteration = parent.iteration + 1;
    try {
        child.model_ref = model_ref_from_json(result.at("model_ref"), ModelRole::generator);
    } catch (const Error& e) {
        throw TrainerError(std::string("invalid result.json: ") + e.what());
    }
    child.model_ref.role = ModelRole::generator;
    child.parent = parent.iteration;
    child.artifact_path = job.out_dir.string();
    child.training_set_digest = sha256_file(job.training_set);
    return child;
}

std::vector<ModelLineage> lineage_chain(const ModelLineage& latest, const std::map<int, ModelLineage>& entries) {
    std::vector<ModelLineage> chain{latest};
    std::set<int> visited{latest.iteration};
    const ModelLineage* current = &latest;
    while (current->parent) {
        const int parent = *current->parent;
        if (!visited.insert(parent).second) {
            throw SchemaError("lineage cycle detected at iteration " + std::to_string(parent));
        }
        auto it = entries.find(parent);
        if (it == entries.end()) throw SchemaError("lineage parent " + std::to_string(parent) + " is missing");
        chain.push_back(it->second);
        current = &it->second;
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

}  // namespace selfevo
