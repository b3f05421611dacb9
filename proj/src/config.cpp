#include "selfevo/config.hpp"

#include "selfevo/error.hpp"

#ifndef SELFEVO_TEMPLATE_DIR
#define SELFEVO_TEMPLATE_DIR "templates"
#endif
#ifndef SELFEVO_MOCK_TRAINER
#define SELFEVO_MOCK_TRAINER "selfevo-mock-trainer"
#endif

namespace selfevo {

fs::path default_template_dir() { return SELFEVO_TEMPLATE_DIR; }
fs::path default_mock_trainer() { return SELFEVO_MOCK_TRAINER; }

namespace {

constexpr const char* mock_trainer_token = "@mock_trainer";

json optional_json(const auto& value) {
    if (value) return json(*value);
    return json(nullptr);
}

fs::path resolve(const fs::path& base_dir, const std::string& value) {
    if (value.empty()) return {};
    fs::path p(value);
    if (p.is_relative()) p = base_dir / p;
    return p.lexically_normal();
}

/// Keys in these objects are user-defined.
bool free_form(const std::string& path) { return path == "trainer.extra"; }

void check_known_keys(const json& given, const json& reference, const std::string& prefix) {
    for (const auto& [key, value] : given.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        auto it = reference.find(key);
        if (it == reference.end()) throw ConfigError("unknown config key: " + path);
        if (value.is_object() && it->is_object() && !free_form(path)) check_known_keys(value, *it, path);
    }
}

template <typename T>
T field(const json& obj, const char* key, T fallback) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid value for '") + key + "': " + e.what());
    }
}

json reference_config() {
    json ref = to_json(RunConfig{});
    ref["run_dir"] = "";
    return ref;
}

}  // namespace

json to_json(const RunConfig& c) {
    const auto& g = c.generation;
    json generation{{"temperature", g.params.temperature},
                    {"max_tokens", g.params.max_tokens},
                    {"seed", optional_json(g.params.seed)},
                    {"stop", g.params.stop},
                    {"regeneration_attempts", g.regeneration_attempts},
                    {"max_failure_fraction", g.max_failure_fraction},
                    {"max_document_chars", g.max_document_chars},
                    {"max_question_chars", g.question_rules.max_chars},
                    {"min_answer_chars", g.answer_rules.min_chars},
                    {"dangling_patterns", g.answer_rules.dangling_patterns},
                    {"question_template", c.question_template.string()},
                    {"answer_template", c.answer_template.string()}};
    const auto& s = c.scoring;
    json scoring{{"framing", to_string(s.framing)},
                 {"question_frame", s.question_frame},
                 {"chat_question_frame", s.chat_question_frame},
                 {"chat_direct_context", s.chat_direct_context},
                 {"max_failure_fraction", s.max_failure_fraction},
                 {"min_direct_score", s.min_direct_score}};
    json selection{{"strategy", to_string(c.selection.strategy)},
                   {"k", optional_json(c.selection.k)},
                   {"seed", c.selection.seed}};
    const auto& e = c.evaluation;
    json evaluation{{"max_ngram", e.bleu.max_ngram},
                    {"tokenization", to_string(e.bleu.tokenization)},
                    {"smoothing", to_string(e.bleu.smoothing)},
                    {"temperature", e.params.temperature},
                    {"max_tokens", e.params.max_tokens},
                    {"max_failure_fraction", e.max_failure_fraction}};
    json baseline_model = c.baseline_model ? to_json(*c.baseline_model) : json(nullptr);
    return json{{"corpus_path", c.corpus_path.string()},
                {"eval_path", c.eval_path.string()},
                {"base_model", to_json(c.base_model)},
                {"scorer_model", to_json(c.scorer_model)},
                {"baseline_model", baseline_model},
                {"backend", to_json(c.backend)},
                {"generation", generation},
                {"scoring", scoring},
                {"selection", selection},
                {"trainer", to_json(c.trainer)},
                {"evaluation", evaluation},
                {"max_iterations", c.max_iterations},
                {"baseline_bleu", optional_json(c.baseline_bleu)},
                {"run_seed", c.run_seed},
                {"stop_when_score_at_least", optional_json(c.stop_when_score_at_least)}};
}

namespace {

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    check_known_keys(j, reference_config(), "");

    RunConfig c;
    c.corpus_path = resolve(base_dir, field<std::string>(j, "corpus_path", ""));
    c.eval_path = resolve(base_dir, field<std::string>(j, "eval_path", ""));
    c.run_dir = resolve(base_dir, field<std::string>(j, "run_dir", ""));
    if (c.corpus_path.empty()) throw ConfigError("corpus_path is required");
    if (c.eval_path.empty()) throw ConfigError("eval_path is required");

    try {
        if (j.contains("base_model")) c.base_model = model_ref_from_json(j["base_model"], ModelRole::generator);
        if (j.contains("scorer_model")) c.scorer_model = model_ref_from_json(j["scorer_model"], ModelRole::scorer);
        if (j.contains("baseline_model") && !j["baseline_model"].is_null()) {
            c.baseline_model = model_ref_from_json(j["baseline_model"], ModelRole::evaluatee);
        }
    } catch (const SchemaError& e) {
        throw ConfigError(e.what());
    }
    c.base_model.role = ModelRole::generator;
    c.scorer_model.role = ModelRole::scorer;
    if (c.baseline_model) c.baseline_model->role = ModelRole::evaluatee;

    const json backend = j.value("backend", json::object());
    c.backend = backend_config_from_json(backend);
    c.backend.mock_script = resolve(base_dir, c.backend.mock_script).string();

    const json g = j.value("generation", json::object());
    auto& gen = c.generation;
    gen.params.temperature = field(g, "temperature", gen.params.temperature);
    gen.params.max_tokens = field(g, "max_tokens", gen.params.max_tokens);
    if (g.contains("seed") && !g["seed"].is_null()) gen.params.seed = field<std::int64_t>(g, "seed", 0);
    gen.params.stop = field(g, "stop", gen.params.stop);
    gen.regeneration_attempts = field(g, "regeneration_attempts", gen.regeneration_attempts);
    gen.max_failure_fraction = field(g, "max_failure_fraction", gen.max_failure_fraction);
    gen.max_document_chars = field(g, "max_document_chars", gen.max_document_chars);
    gen.question_rules.max_chars = field(g, "max_question_chars", gen.question_rules.max_chars);
    gen.answer_rules.min_chars = field(g, "min_answer_chars", gen.answer_rules.min_chars);
    gen.answer_rules.dangling_patterns = field(g, "dangling_patterns", gen.answer_rules.dangling_patterns);
    gen.max_parallel = c.backend.max_parallel;
    c.question_template = resolve(base_dir, field<std::string>(g, "question_template", ""));
    c.answer_template = resolve(base_dir, field<std::string>(g, "answer_template", ""));
    if (c.question_template.empty()) c.question_template = default_template_dir() / "question_prompt.v1.txt";
    if (c.answer_template.empty()) c.answer_template = default_template_dir() / "answer_prompt.v1.txt";
    if (gen.regeneration_attempts < 0) throw ConfigError("generation.regeneration_attempts must be >= 0");
    try {
        gen.params.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("generation: ") + e.what());
    }

    const json s = j.value("scoring", json::object());
    auto& sc = c.scoring;
    sc.framing = score_framing_from_string(field<std::string>(s, "framing", to_string(sc.framing)));
    sc.question_frame = field(s, "question_frame", sc.question_frame);
    sc.chat_question_frame = field(s, "chat_question_frame", sc.chat_question_frame);
    sc.chat_direct_context = field(s, "chat_direct_context", sc.chat_direct_context);
    sc.max_failure_fraction = field(s, "max_failure_fraction", sc.max_failure_fraction);
    sc.min_direct_score = field(s, "min_direct_score", sc.min_direct_score);
    sc.max_parallel = c.backend.max_parallel;
    if (sc.question_frame.find("{Question}") == std::string::npos ||
        sc.chat_question_frame.find("{Question}") == std::string::npos) {
        throw ConfigError("scoring question frames must contain {Question}");
    }

    const json sel = j.value("selection", json::object());
    c.selection.strategy = selection_strategy_from_string(field<std::string>(sel, "strategy", "ifd_topk"));
    if (sel.contains("k") && !sel["k"].is_null()) {
        auto k = field<long long>(sel, "k", 0);
        if (k < 0) throw ConfigError("selection.k must be >= 0");
        c.selection.k = static_cast<std::size_t>(k);
    }
    c.selection.seed = field<std::uint64_t>(sel, "seed", 0);

    c.trainer = trainer_config_from_json(j.value("trainer", json::object()));
    if (!c.trainer.adapter_command.empty()) {
        auto& exe = c.trainer.adapter_command.front();
        if (exe == mock_trainer_token) {
            exe = default_mock_trainer().string();
        } else if (exe.find('/') != std::string::npos) {
            exe = resolve(base_dir, exe).string();
        }
    }

    const json e = j.value("evaluation", json::object());
    auto& ev = c.evaluation;
    ev.bleu.max_ngram = field(e, "max_ngram", ev.bleu.max_ngram);
    ev.bleu.tokenization = bleu_tokenization_from_string(field<std::string>(e, "tokenization", "character"));
    ev.bleu.smoothing = bleu_smoothing_from_string(field<std::string>(e, "smoothing", "add_one_on_zero_counts"));
    ev.params.temperature = field(e, "temperature", ev.params.temperature);
    ev.params.max_tokens = field(e, "max_tokens", ev.params.max_tokens);
    ev.max_failure_fraction = field(e, "max_failure_fraction", ev.max_failure_fraction);
    ev.max_parallel = c.backend.max_parallel;
    if (ev.bleu.max_ngram < 1) throw ConfigError("evaluation.max_ngram must be >= 1");

    c.max_iterations = field(j, "max_iterations", c.max_iterations);
    if (c.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (j.contains("baseline_bleu") && !j["baseline_bleu"].is_null()) {
        c.baseline_bleu = field<double>(j, "baseline_bleu", 0.0);
        if (!(*c.baseline_bleu > 0.0)) throw ConfigError("baseline_bleu must be positive");
    }
    c.run_seed = field<std::int64_t>(j, "run_seed", 0);
    if (j.contains("stop_when_score_at_least") && !j["stop_when_score_at_least"].is_null()) {
        c.stop_when_score_at_least = field<double>(j, "stop_when_score_at_least", 0.0);
    }
    return c;
}

}  // namespace

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
    try {
        return parse_run_config(j, base_dir);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
}

json apply_overrides(json config, const std::vector<std::string>& overrides) {
    json reference = reference_config();
    for (const auto& item : overrides) {
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + item);
        const std::string key = item.substr(0, eq);
        const std::string raw = item.substr(eq + 1);

        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            value = raw;
        }

        std::vector<std::string> parts;
        std::size_t start = 0;
        while (true) {
            auto dot = key.find('.', start);
            parts.push_back(key.substr(start, dot - start));
            if (dot == std::string::npos) break;
            start = dot + 1;
        }

        const json* ref = &reference;
        json* target = &config;
        std::string walked;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const auto& part = parts[i];
            walked += (walked.empty() ? "" : ".") + part;
            const bool last = i + 1 == parts.size();
            const bool inside_free_form = ref == nullptr;
            if (!inside_free_form) {
                if (!ref->is_object() || !ref->contains(part)) throw ConfigError("unknown override key: " + key);
                ref = free_form(walked) ? nullptr : &(*ref)[part];
            }
            if (last) {
                (*target)[part] = value;
            } else {
                if (!target->contains(part) || !(*target)[part].is_object()) (*target)[part] = json::object();
                target = &(*target)[part];
            }
        }
    }
    return config;
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    j = apply_overrides(std::move(j), overrides);
    return run_config_from_json(j, fs::absolute(path).parent_path());
}

std::string config_hash(const RunConfig& config) { return sha256_hex(to_json(config).dump()); }

}  // namespace selfevo
