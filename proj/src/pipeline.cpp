#include "selfevo/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>
#include <unordered_map>
#include <unordered_set>

#include "selfevo/error.hpp"

namespace selfevo {

std::string to_string(Phase p) {
    switch (p) {
        case Phase::generate: return "generate";
        case Phase::score: return "score";
        case Phase::select: return "select";
        case Phase::train: return "train";
        case Phase::evaluate: return "evaluate";
    }
    return "generate";
}

Phase phase_from_string(const std::string& s) {
    for (auto p : phase_order) {
        if (to_string(p) == s) return p;
    }
    throw SchemaError("unknown phase: " + s);
}

std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::running: return "running";
        case RunStatus::completed: return "completed";
        case RunStatus::failed: return "failed";
    }
    return "running";
}

RunStatus run_status_from_string(const std::string& s) {
    if (s == "running") return RunStatus::running;
    if (s == "completed") return RunStatus::completed;
    if (s == "failed") return RunStatus::failed;
    throw SchemaError("unknown run status: " + s);
}

const PhaseRecord* IterationRecord::find(Phase p) const {
    for (const auto& r : phases) {
        if (r.phase == p) return &r;
    }
    return nullptr;
}

json to_json(const RunManifest& m) {
    json lineage = json::array();
    for (const auto& l : m.lineage) lineage.push_back(to_json(l));
    json iterations = json::array();
    for (const auto& it : m.iterations) {
        json phases = json::array();
        for (const auto& p : it.phases) {
            phases.push_back(json{{"phase", to_string(p.phase)},
                                  {"seq", p.seq},
                                  {"completed_at", p.completed_at},
                                  {"details", p.details}});
        }
        iterations.push_back(json{{"iteration", it.iteration}, {"phases", phases}});
    }
    json failure = nullptr;
    if (m.failure) {
        failure = json{{"iteration", m.failure->iteration}, {"phase", m.failure->phase},
                       {"message", m.failure->message}};
    }
    return json{{"format", m.format},
                {"status", to_string(m.status)},
                {"config_hash", m.config_hash},
                {"config", m.config},
                {"templates", m.templates},
                {"inputs", m.inputs},
                {"baseline", {{"bleu", m.baseline_bleu}, {"source", m.baseline_source}}},
                {"lineage", lineage},
                {"iterations", iterations},
                {"failure", failure},
                {"next_seq", m.next_seq},
                {"stopped_early", m.stopped_early},
                {"created_at", m.created_at},
                {"updated_at", m.updated_at}};
}

RunManifest run_manifest_from_json(const json& j) {
    RunManifest m;
    try {
        m.format = j.at("format").get<int>();
        if (m.format != 1) throw SchemaError("unsupported manifest format " + std::to_string(m.format));
        m.status = run_status_from_string(j.at("status").get<std::string>());
        m.config_hash = j.at("config_hash").get<std::string>();
        m.config = j.at("config");
        m.templates = j.at("templates");
        m.inputs = j.at("inputs");
        m.baseline_bleu = j.at("baseline").at("bleu").get<double>();
        m.baseline_source = j.at("baseline").at("source").get<std::string>();
        for (const auto& l : j.at("lineage")) m.lineage.push_back(model_lineage_from_json(l));
        for (const auto& it : j.at("iterations")) {
            IterationRecord rec;
            rec.iteration = it.at("iteration").get<int>();
            for (const auto& p : it.at("phases")) {
                rec.phases.push_back({phase_from_string(p.at("phase").get<std::string>()),
                                      p.at("seq").get<std::uint64_t>(), p.value("completed_at", ""),
                                      p.at("details")});
            }
            m.iterations.push_back(std::move(rec));
        }
        if (auto f = j.find("failure"); f != j.end() && !f->is_null()) {
            m.failure = FailureRecord{f->at("iteration").get<int>(), f->at("phase").get<std::string>(),
                                      f->at("message").get<std::string>()};
        }
        m.next_seq = j.at("next_seq").get<std::uint64_t>();
        m.stopped_early = j.value("stopped_early", false);
        m.created_at = j.value("created_at", "");
        m.updated_at = j.value("updated_at", "");
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid run manifest: ") + e.what());
    }
    for (std::size_t i = 0; i < m.iterations.size(); ++i) {
        const auto& rec = m.iterations[i];
        if (rec.iteration != static_cast<int>(i)) throw SchemaError("manifest iterations are out of order");
        for (std::size_t k = 0; k < rec.phases.size(); ++k) {
            if (k >= phase_order.size() || rec.phases[k].phase != phase_order[k]) {
                throw SchemaError("manifest phase markers of iteration " + std::to_string(i) + " are not monotone");
            }
        }
    }
    return m;
}

json canonical_manifest(const RunManifest& m) {
    json j = to_json(m);
    j.erase("created_at");
    j.erase("updated_at");
    for (auto& it : j["iterations"]) {
        for (auto& p : it["phases"]) p.erase("completed_at");
    }
    return j;
}

RunManifest load_manifest(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("no run manifest at " + path.string());
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw SchemaError("run manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_manifest_from_json(j);
}

namespace {

std::string iteration_dir(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "iter_%03d", i);
    return buf;
}

std::string rel_path(int i, const char* name) { return iteration_dir(i) + "/" + name; }

int acquire_lock(const fs::path& dir) {
    const auto lock_path = dir / ".lock";
    int fd = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd < 0) throw IoError("cannot open lock file " + lock_path.string());
    if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd);
        throw RuntimeFailure("run directory " + dir.string() + " is in use by another process");
    }
    return fd;
}

json file_fingerprint(const fs::path& path, std::size_t count) {
    return json{{"path", path.string()}, {"sha256", sha256_file(path)}, {"count", count}};
}

void check_fingerprint(const json& recorded, const fs::path& path, const char* what) {
    if (!fs::exists(path)) throw DigestError(std::string(what) + " " + path.string() + " is missing");
    if (sha256_file(path) != recorded.at("sha256").get<std::string>()) {
        throw DigestError(std::string(what) + " " + path.string() + " changed since the run started");
    }
}

}  // namespace

struct Pipeline::State {
    RunConfig config;
    fs::path dir;
    std::shared_ptr<const Backend> backend;
    int lock_fd = -1;
    RunManifest manifest;
    std::vector<KnowledgeDocument> docs;
    std::vector<EvalPair> eval_set;
    PromptTemplates templates;

    ~State() {
        if (lock_fd >= 0) ::close(lock_fd);
    }

    void save() {
        manifest.updated_at = utc_timestamp();
        write_file_atomic(dir / manifest_file_name, to_json(manifest).dump(2) + "\n");
    }

    void load_inputs() {
        docs = load_documents(config.corpus_path);
        eval_set = load_eval_set(config.eval_path);
        templates = load_prompt_templates(config.question_template, config.answer_template);
        if (docs.empty()) throw PreconditionError("corpus " + config.corpus_path.string() + " is empty");
        if (eval_set.empty()) throw PreconditionError("evaluation set " + config.eval_path.string() + " is empty");
    }

    json artifact(const std::string& rel) const {
        return json{{"path", rel}, {"sha256", sha256_file(dir / rel)}};
    }

    void verify_artifacts() const {
        for (const auto& it : manifest.iterations) {
            for (const auto& p : it.phases) {
                for (const auto& a : p.details.value("artifacts", json::array())) {
                    const auto rel = a.at("path").get<std::string>();
                    const auto path = dir / rel;
                    if (!fs::exists(path)) throw DigestError("artifact " + rel + " recorded in the manifest is missing");
                    if (sha256_file(path) != a.at("sha256").get<std::string>()) {
                        throw DigestError("artifact " + rel + " does not match its recorded digest");
                    }
                }
                if (p.phase == Phase::score && p.details.at("scorer") != to_json(config.scorer_model)) {
                    throw ConfigError("iteration " + std::to_string(it.iteration) +
                                      " was scored by a different scorer model");
                }
            }
        }
    }

    ModelLineage absolute(const ModelLineage& l) const {
        ModelLineage copy = l;
        if (!copy.artifact_path.empty()) copy.artifact_path = (dir / copy.artifact_path).string();
        return copy;
    }

    const PhaseRecord& record(int i, Phase p) const {
        const auto* r = manifest.iterations.at(i).find(p);
        if (!r) throw PreconditionError(to_string(p) + " of iteration " + std::to_string(i) + " has not run");
        return *r;
    }

    json run_generate(int i) {
        auto settings = config.generation;
        const std::int64_t seed = settings.params.seed.value_or(config.run_seed) + 1000 * static_cast<std::int64_t>(i);
        settings.params.seed = seed;
        const ModelRef generator = manifest.lineage.at(i).model_ref;
        auto dataset = generate_iteration_dataset(docs, *backend, generator, i, settings, templates);
        const auto rel = rel_path(i, "dataset.jsonl");
        write_dataset(dir / rel, dataset.pairs);
        return json{{"generator", to_json(generator)},
                    {"seed", seed},
                    {"count", dataset.pairs.size()},
                    {"stats", to_json(dataset.stats)},
                    {"artifacts", json::array({artifact(rel)})}};
    }

    json run_score(int i) {
        const auto pairs = load_dataset(dir / rel_path(i, "dataset.jsonl"));
        auto scored = score_dataset(pairs, *backend, config.scorer_model, config.scoring);
        const auto rel = rel_path(i, "scores.jsonl");
        write_scores(dir / rel, scored.records);
        json excluded = json::array();
        for (const auto& e : scored.excluded) excluded.push_back(json{{"qa_id", e.qa_id}, {"reason", e.reason}});
        return json{{"scorer", to_json(config.scorer_model)},
                    {"count", scored.records.size()},
                    {"excluded", excluded},
                    {"artifacts", json::array({artifact(rel)})}};
    }

    /// D_0..D_{i-1} minus scoring exclusions, in iteration then dataset order.
    std::vector<HistoryEntry> history_pool(int i) const {
        std::vector<HistoryEntry> pool;
        for (int j = 0; j < i; ++j) {
            std::unordered_map<std::string, ScoreRecord> scores;
            for (auto& r : load_scores(dir / rel_path(j, "scores.jsonl"))) scores.emplace(r.qa_id, r);
            for (auto& pair : load_dataset(dir / rel_path(j, "dataset.jsonl"))) {
                auto it = scores.find(pair.id);
                if (it == scores.end()) continue;
                pool.push_back({std::move(pair), it->second});
            }
        }
        return pool;
    }

    json run_select(int i) {
        const auto pool = history_pool(i);
        const std::size_t new_count = record(i, Phase::generate).details.at("count").get<std::size_t>();
        SelectionConfig cfg;
        cfg.strategy = config.selection.strategy;
        cfg.k = config.selection.k.value_or(new_count);
        cfg.seed = config.selection.seed + static_cast<std::uint64_t>(i);
        const auto result = select(i, pool, cfg);
        const auto rel = rel_path(i, "selection.json");
        write_file_atomic(dir / rel, to_json(result).dump(2) + "\n");
        return json{{"strategy", to_string(result.strategy_used)},
                    {"k", result.k},
                    {"seed", result.seed},
                    {"pool_size", result.pool_size},
                    {"selected", result.selected_ids.size()},
                    {"artifacts", json::array({artifact(rel)})}};
    }

    json run_train(int i) {
        const auto new_data = load_dataset(dir / rel_path(i, "dataset.jsonl"));
        const auto selection = selection_result_from_json(json::parse(read_file(dir / rel_path(i, "selection.json"))));
        std::unordered_map<std::string, QAPair> lookup;
        for (auto& entry : history_pool(i)) lookup.emplace(entry.pair.id, std::move(entry.pair));
        const auto training = assemble_training_set(new_data, selection, lookup);

        const auto train_rel = rel_path(i, "train.jsonl");
        const auto model_rel = rel_path(i, "model");
        const auto config_rel = rel_path(i, "trainer_config.json");
        write_training_set(dir / train_rel, training);

        const auto parent = absolute(manifest.lineage.at(i));
        const auto base = absolute(manifest.lineage.at(0));
        auto child = fine_tune(parent, {dir / train_rel, dir / model_rel, dir / config_rel}, config.trainer, &base);
        child.artifact_path = model_rel;
        manifest.lineage.resize(i + 1);
        manifest.lineage.push_back(child);
        return json{{"size", training.size()},
                    {"new", new_data.size()},
                    {"historical", training.size() - new_data.size()},
                    {"model", to_json(child.model_ref)},
                    {"artifacts", json::array({artifact(train_rel), artifact(config_rel),
                                               artifact(model_rel + "/result.json")})}};
    }

    json run_evaluate(int i) {
        const ModelRef model = manifest.lineage.at(i + 1).model_ref;
        const auto report = evaluate_model(*backend, model, eval_set, manifest.baseline_bleu, config.evaluation, i);
        const auto rel = rel_path(i, "eval.json");
        write_file_atomic(dir / rel, to_json(report).dump(2) + "\n");
        return json{{"model", to_json(model)},
                    {"model_bleu", report.model_bleu},
                    {"relative_score", report.relative_score},
                    {"artifacts", json::array({artifact(rel)})}};
    }
};

Pipeline::Pipeline(std::unique_ptr<State> state) : state_(std::move(state)) {}
Pipeline::Pipeline(Pipeline&&) noexcept = default;
Pipeline& Pipeline::operator=(Pipeline&&) noexcept = default;
Pipeline::~Pipeline() = default;

Pipeline Pipeline::create(const RunConfig& config, std::shared_ptr<const Backend> backend) {
    if (config.run_dir.empty()) throw ConfigError("run_dir is required");
    if (fs::exists(config.run_dir / manifest_file_name)) {
        throw ConfigError("run directory " + config.run_dir.string() + " already has a manifest; use resume");
    }
    auto s = std::make_unique<State>();
    s->config = config;
    s->dir = config.run_dir;
    fs::create_directories(s->dir);
    s->lock_fd = acquire_lock(s->dir);
    s->backend = backend ? std::move(backend) : std::shared_ptr<const Backend>(make_backend(config.backend));
    s->load_inputs();

    auto& m = s->manifest;
    m.config_hash = config_hash(config);
    m.config = to_json(config);
    m.templates = json{{"question", {{"path", s->templates.question.path}, {"sha256", s->templates.question.sha256}}},
                       {"answer", {{"path", s->templates.answer.path}, {"sha256", s->templates.answer.sha256}}}};
    m.inputs = json{{"corpus", file_fingerprint(config.corpus_path, s->docs.size())},
                    {"eval", file_fingerprint(config.eval_path, s->eval_set.size())}};

    if (config.baseline_bleu) {
        m.baseline_bleu = *config.baseline_bleu;
        m.baseline_source = "config";
    } else if (config.baseline_model) {
        log_info("computing baseline BLEU with " + config.baseline_model->model_name);
        m.baseline_bleu = compute_baseline_bleu(*s->backend, *config.baseline_model, s->eval_set, config.evaluation);
        m.baseline_source = "model:" + config.baseline_model->model_name;
    } else {
        throw ConfigError("either baseline_bleu or baseline_model must be configured");
    }
    m.lineage.push_back(ModelLineage{0, config.base_model.with_role(ModelRole::generator), std::nullopt, "", ""});
    m.created_at = utc_timestamp();
    s->save();
    log_info("initialized run in " + s->dir.string());
    return Pipeline(std::move(s));
}

Pipeline Pipeline::open(const fs::path& run_dir, const std::optional<RunConfig>& config,
                        std::shared_ptr<const Backend> backend) {
    auto s = std::make_unique<State>();
    s->dir = run_dir;
    s->manifest = load_manifest(run_dir / manifest_file_name);
    if (config) {
        const auto hash = config_hash(*config);
        if (hash != s->manifest.config_hash) {
            throw ConfigError("config hash " + hash.substr(0, 12) + " does not match the run's config hash " +
                              s->manifest.config_hash.substr(0, 12));
        }
        s->config = *config;
    } else {
        s->config = run_config_from_json(s->manifest.config, "/");
        if (config_hash(s->config) != s->manifest.config_hash) {
            throw SchemaError("config snapshot in " + (run_dir / manifest_file_name).string() +
                              " does not match its recorded hash");
        }
    }
    s->config.run_dir = run_dir;
    s->lock_fd = acquire_lock(run_dir);

    const auto& m = s->manifest;
    check_fingerprint(m.inputs.at("corpus"), s->config.corpus_path, "corpus");
    check_fingerprint(m.inputs.at("eval"), s->config.eval_path, "evaluation set");
    check_fingerprint(m.templates.at("question"), s->config.question_template, "template");
    check_fingerprint(m.templates.at("answer"), s->config.answer_template, "template");
    s->verify_artifacts();

    s->backend = backend ? std::move(backend) : std::shared_ptr<const Backend>(make_backend(s->config.backend));
    s->load_inputs();
    return Pipeline(std::move(s));
}

std::optional<std::pair<int, Phase>> Pipeline::next_phase() const {
    const auto& m = state_->manifest;
    if (m.status == RunStatus::completed) return std::nullopt;
    for (int i = 0; i < state_->config.max_iterations; ++i) {
        if (i >= static_cast<int>(m.iterations.size())) return std::make_pair(i, Phase::generate);
        const auto& rec = m.iterations[i];
        if (!rec.complete()) return std::make_pair(i, phase_order[rec.phases.size()]);
    }
    return std::nullopt;
}

bool Pipeline::run_phase(int iteration, Phase phase) {
    auto& s = *state_;
    auto& m = s.manifest;
    if (iteration < 0 || iteration >= s.config.max_iterations) {
        throw PreconditionError("iteration " + std::to_string(iteration) + " is outside 0.." +
                                std::to_string(s.config.max_iterations - 1));
    }
    if (iteration < static_cast<int>(m.iterations.size()) && m.iterations[iteration].find(phase)) return false;
    const auto next = next_phase();
    if (!next) throw PreconditionError("run is already complete");
    if (next->first != iteration || next->second != phase) {
        throw PreconditionError("cannot run " + to_string(phase) + " of iteration " + std::to_string(iteration) +
                                "; next phase is " + to_string(next->second) + " of iteration " +
                                std::to_string(next->first));
    }

    m.status = RunStatus::running;
    m.failure.reset();
    log_info("iteration " + std::to_string(iteration) + ": " + to_string(phase));
    json details;
    try {
        fs::create_directories(s.dir / iteration_dir(iteration));
        switch (phase) {
            case Phase::generate: details = s.run_generate(iteration); break;
            case Phase::score: details = s.run_score(iteration); break;
            case Phase::select: details = s.run_select(iteration); break;
            case Phase::train: details = s.run_train(iteration); break;
            case Phase::evaluate: details = s.run_evaluate(iteration); break;
        }
    } catch (const std::exception& e) {
        m.status = RunStatus::failed;
        m.failure = FailureRecord{iteration, to_string(phase), e.what()};
        s.save();
        throw;
    }

    if (iteration == static_cast<int>(m.iterations.size())) m.iterations.push_back({iteration, {}});
    m.iterations[iteration].phases.push_back({phase, m.next_seq++, utc_timestamp(), std::move(details)});

    if (phase == Phase::evaluate) {
        write_file_atomic(s.dir / "report.csv", score_rows_csv(report_rows(m)));
        const double score = m.iterations[iteration].find(Phase::evaluate)->details.at("relative_score");
        if (s.config.stop_when_score_at_least && score >= *s.config.stop_when_score_at_least &&
            iteration + 1 < s.config.max_iterations) {
            log_info("relative score reached the stop threshold; stopping early");
            m.stopped_early = true;
            m.status = RunStatus::completed;
        } else if (iteration + 1 == s.config.max_iterations) {
            m.status = RunStatus::completed;
        }
    }
    s.save();
    return true;
}

const RunManifest& Pipeline::run(const RunOptions& options) {
    std::size_t done = 0;
    while (auto next = next_phase()) {
        if (options.stop_after_phases && done >= *options.stop_after_phases) break;
        run_phase(next->first, next->second);
        ++done;
    }
    return state_->manifest;
}

const RunManifest& Pipeline::manifest() const { return state_->manifest; }
const RunConfig& Pipeline::config() const { return state_->config; }
fs::path Pipeline::run_dir() const { return state_->dir; }
fs::path Pipeline::manifest_path() const { return state_->dir / manifest_file_name; }

RunManifest run(const RunConfig& config, const RunOptions& options, std::shared_ptr<const Backend> backend) {
    auto pipeline = Pipeline::create(config, std::move(backend));
    return pipeline.run(options);
}

RunManifest resume(const fs::path& manifest_path, const std::optional<RunConfig>& config, const RunOptions& options,
                   std::shared_ptr<const Backend> backend) {
    const fs::path dir = fs::is_directory(manifest_path) ? manifest_path : manifest_path.parent_path();
    auto pipeline = Pipeline::open(dir.empty() ? fs::path(".") : dir, config, std::move(backend));
    if (pipeline.manifest().status == RunStatus::completed) return pipeline.manifest();
    return pipeline.run(options);
}

std::vector<ScoreRow> report_rows(const RunManifest& m) {
    std::vector<ScoreRow> rows;
    for (const auto& it : m.iterations) {
        if (const auto* r = it.find(Phase::evaluate)) {
            rows.push_back({it.iteration, r->details.at("model_bleu").get<double>(),
                            r->details.at("relative_score").get<double>()});
        }
    }
    return rows;
}

}  // namespace selfevo
