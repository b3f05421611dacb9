#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "selfevo/backend.hpp"
#include "selfevo/corpus.hpp"
#include "selfevo/kernels.hpp"

namespace selfevo {

enum class BleuTokenization { whitespace, character };
enum class BleuSmoothing { none, add_one_on_zero_counts };

std::string to_string(BleuTokenization t);
std::string to_string(BleuSmoothing s);
BleuTokenization bleu_tokenization_from_string(const std::string& s);
BleuSmoothing bleu_smoothing_from_string(const std::string& s);

struct BleuConfig {
    int max_ngram = 4;
    BleuTokenization tokenization = BleuTokenization::character;
    BleuSmoothing smoothing = BleuSmoothing::add_one_on_zero_counts;

    bool operator==(const BleuConfig&) const = default;
};

/// Character mode yields one token per non-whitespace code point.
std::vector<std::string> bleu_tokens(std::string_view text, BleuTokenization mode);

/// Combines aggregated n-gram statistics:
///   BP * exp( (1/max_n) * sum_n log p_n ),  BP = exp(min(0, 1 - r/c)).
/// An order with no candidate n-grams at all counts as p_n = 1. With
/// add-one smoothing an order with zero matches uses 1 / (total + 1);
/// unsmoothed it makes the score 0. An empty candidate side scores 0.
double bleu_from_stats(const kernels::NgramStats& stats, const BleuConfig& config);

/// Corpus-level BLEU with one reference per candidate.
double corpus_bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                   const BleuConfig& config = {});

double sentence_bleu(const std::string& candidate, const std::string& reference, const BleuConfig& config = {});

struct QuestionResult {
    std::string id;
    std::string candidate;
    double bleu = 0.0;
    std::string error;  // set when generation failed and the candidate is empty
};

struct EvalReport {
    int iteration = 0;
    std::string model_name;
    double model_bleu = 0.0;
    double baseline_bleu = 0.0;
    double relative_score = 0.0;
    std::vector<QuestionResult> per_question;
};

json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const json& j);

struct EvalSettings {
    GenerationParams params{0.0, 512, std::nullopt, {}};
    BleuConfig bleu;
    double max_failure_fraction = 0.2;
    int max_parallel = 4;
};

/// Answers every eval question with `model` (single user message), scores
/// the answers against the references and divides by `baseline_bleu`.
/// Failed generations become empty candidates; FailureGateError when their
/// fraction exceeds the gate.
EvalReport evaluate_model(const Backend& backend, const ModelRef& model, const std::vector<EvalPair>& eval_set,
                          double baseline_bleu, const EvalSettings& settings = {}, int iteration = 0);

/// BLEU of a designated benchmark model, for use as the baseline.
double compute_baseline_bleu(const Backend& backend, const ModelRef& baseline_model,
                             const std::vector<EvalPair>& eval_set, const EvalSettings& settings = {});

struct ScoreRow {
    int iteration = 0;
    double model_bleu = 0.0;
    double relative_score = 0.0;
};

/// `iteration,model_bleu,relative_score` with a header line.
std::string score_rows_csv(const std::vector<ScoreRow>& rows);

}  // namespace selfevo
