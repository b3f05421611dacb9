#pragma once

#include <span>
#include <string>
#include <vector>

#include "selfevo/backend.hpp"
#include "selfevo/error.hpp"
#include "selfevo/generation.hpp"

namespace selfevo {

/// Per-pair instruction-following difficulty under the fixed scorer.
/// Scores are mean negative log-likelihoods in nats per answer token.
struct ScoreRecord {
    std::string qa_id;
    double conditioned_score = 0.0;
    double direct_score = 0.0;
    double ifd = 0.0;
    std::size_t token_count = 0;

    bool operator==(const ScoreRecord&) const = default;
};

json to_json(const ScoreRecord& r);
ScoreRecord score_record_from_json(const json& j, std::size_t line = 0);

/// -(1/N) * sum(logprob). Throws PreconditionError on an empty list.
double mean_nll(std::span<const TokenScore> scores);

enum class ScoreFraming { raw, chat };

std::string to_string(ScoreFraming f);
ScoreFraming score_framing_from_string(const std::string& s);

struct ScoringSettings {
    ScoreFraming framing = ScoreFraming::raw;
    /// Context for the conditioned score in raw framing. The direct score
    /// always uses the empty context in raw framing.
    std::string question_frame = "Question: {Question}\nAnswer:\n";
    std::string chat_question_frame = "<|im_start|>user\n{Question}<|im_end|>\n<|im_start|>assistant\n";
    std::string chat_direct_context = "<|im_start|>assistant\n";
    double max_failure_fraction = 0.2;
    /// Pairs whose direct score falls below this are excluded.
    double min_direct_score = 1e-9;
    int max_parallel = 4;
};

std::string conditioned_context(const std::string& question, const ScoringSettings& settings);
std::string direct_context(const ScoringSettings& settings);

class DegenerateScoreError : public RuntimeFailure {
public:
    using RuntimeFailure::RuntimeFailure;
};

inline constexpr std::string_view reason_degenerate_direct = "degenerate direct score";

/// Scores one answer twice (with and without the question) and forms the
/// ratio. Throws AlignmentError when the two routes disagree on the answer's
/// token count and DegenerateScoreError when the direct score is ~0.
ScoreRecord score_pair(const QAPair& pair, const Backend& backend, const ModelRef& scorer,
                       const ScoringSettings& settings = {});

struct ScoreExclusion {
    std::string qa_id;
    std::string reason;

    bool operator==(const ScoreExclusion&) const = default;
};

struct ScoredDataset {
    std::vector<ScoreRecord> records;  // input order, exclusions removed
    std::vector<ScoreExclusion> excluded;
};

/// Scores pairs concurrently. Failed pairs are excluded; FailureGateError when
/// the excluded fraction exceeds `max_failure_fraction`.
ScoredDataset score_dataset(const std::vector<QAPair>& pairs, const Backend& backend, const ModelRef& scorer,
                            const ScoringSettings& settings = {});

void write_scores(const fs::path& path, const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> load_scores(const fs::path& path);

}  // namespace selfevo
