#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "selfevo/config.hpp"

namespace selfevo {

enum class Phase { generate, score, select, train, evaluate };

inline constexpr std::array<Phase, 5> phase_order = {Phase::generate, Phase::score, Phase::select, Phase::train,
                                                     Phase::evaluate};

std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

enum class RunStatus { running, completed, failed };

std::string to_string(RunStatus s);
RunStatus run_status_from_string(const std::string& s);

/// Completion marker. `seq` is a run-wide counter, so markers order phases
/// across iterations without relying on clock resolution.
struct PhaseRecord {
    Phase phase = Phase::generate;
    std::uint64_t seq = 0;
    std::string completed_at;
    /// Phase outputs. `artifacts` lists {path, sha256} pairs relative to the
    /// run directory; they are re-hashed when a run is reopened.
    json details;
};

struct IterationRecord {
    int iteration = 0;
    std::vector<PhaseRecord> phases;  // in completion order

    const PhaseRecord* find(Phase p) const;
    bool complete() const { return phases.size() == phase_order.size(); }
};

struct FailureRecord {
    int iteration = 0;
    std::string phase;
    std::string message;
};

struct RunManifest {
    int format = 1;
    RunStatus status = RunStatus::running;
    std::string config_hash;
    json config;     // snapshot, see to_json(RunConfig)
    json templates;  // {question|answer: {path, sha256}}
    json inputs;     // {corpus|eval: {path, sha256, count}}
    double baseline_bleu = 0.0;
    std::string baseline_source;
    std::vector<ModelLineage> lineage;  // artifact paths relative to the run directory
    std::vector<IterationRecord> iterations;
    std::optional<FailureRecord> failure;
    std::uint64_t next_seq = 0;
    bool stopped_early = false;
    std::string created_at;
    std::string updated_at;
};

json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const json& j);

/// Manifest JSON with every wall-clock field removed; equal runs compare
/// equal on this form.
json canonical_manifest(const RunManifest& m);

inline constexpr const char* manifest_file_name = "manifest.json";

RunManifest load_manifest(const fs::path& path);

struct RunOptions {
    /// Stop (leaving status `running`) once this many phases have completed
    /// in this call. Used to simulate an interrupted process.
    std::optional<std::size_t> stop_after_phases;
};

/// Iteration controller bound to one run directory. Holds an exclusive lock
/// on `<run_dir>/.lock` for its lifetime. Everything it needs between phases
/// is read back from disk.
class Pipeline {
public:
    /// Initializes a new run: loads and fingerprints inputs, resolves the
    /// baseline BLEU and writes the initial manifest. Fails if the run
    /// directory already holds a manifest.
    static Pipeline create(const RunConfig& config, std::shared_ptr<const Backend> backend = nullptr);

    /// Reopens an existing run. Without a config the snapshot in the manifest
    /// is used; with one its hash must match. Recorded artifacts, inputs and
    /// templates are re-hashed (DigestError on mismatch).
    static Pipeline open(const fs::path& run_dir, const std::optional<RunConfig>& config = std::nullopt,
                         std::shared_ptr<const Backend> backend = nullptr);

    Pipeline(Pipeline&&) noexcept;
    Pipeline& operator=(Pipeline&&) noexcept;
    ~Pipeline();

    /// First incomplete (iteration, phase), or nothing when the run is done.
    std::optional<std::pair<int, Phase>> next_phase() const;

    /// Runs one phase. A phase already marked complete is a no-op returning
    /// false. Any other phase than next_phase() is a PreconditionError.
    bool run_phase(int iteration, Phase phase);

    /// Runs phases until the run completes (or the options stop it early).
    const RunManifest& run(const RunOptions& options = {});

    const RunManifest& manifest() const;
    const RunConfig& config() const;
    fs::path run_dir() const;
    fs::path manifest_path() const;

private:
    struct State;
    explicit Pipeline(std::unique_ptr<State> state);
    std::unique_ptr<State> state_;
};

/// Fresh run over config.run_dir.
RunManifest run(const RunConfig& config, const RunOptions& options = {},
                std::shared_ptr<const Backend> backend = nullptr);

/// Continues the run owning `manifest_path`. A completed run returns at once.
RunManifest resume(const fs::path& manifest_path, const std::optional<RunConfig>& config = std::nullopt,
                   const RunOptions& options = {}, std::shared_ptr<const Backend> backend = nullptr);

/// One row per evaluated generation, indexed by the producing iteration.
std::vector<ScoreRow> report_rows(const RunManifest& m);

}  // namespace selfevo
