#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "selfevo/backend.hpp"
#include "selfevo/corpus.hpp"

namespace selfevo {

/// A prompt template file plus the content hash recorded in run manifests.
struct PromptTemplate {
    std::string path;
    std::string text;
    std::string sha256;
};

/// Loads a template and checks every required `{Placeholder}` is present.
/// Missing file or placeholder is a ConfigError.
PromptTemplate load_prompt_template(const fs::path& path, const std::vector<std::string>& required_placeholders);

struct PromptTemplates {
    PromptTemplate question;
    PromptTemplate answer;
};

PromptTemplates load_prompt_templates(const fs::path& question_path, const fs::path& answer_path);

struct RenderedPrompt {
    MessageList messages;
    bool truncated = false;  // document text exceeded the character budget
};

RenderedPrompt build_question_prompt(const KnowledgeDocument& doc, const PromptTemplate& tmpl,
                                     std::size_t char_budget = default_document_char_budget);

RenderedPrompt build_answer_prompt(const KnowledgeDocument& doc, const std::string& question,
                                   const PromptTemplate& tmpl,
                                   std::size_t char_budget = default_document_char_budget);

struct Verdict {
    bool accepted = true;
    std::string reason;

    static Verdict accept() { return {}; }
    static Verdict reject(std::string why) { return {false, std::move(why)}; }
    explicit operator bool() const noexcept { return accepted; }
};

inline constexpr std::string_view reason_empty = "empty";
inline constexpr std::string_view reason_multiple_questions = "multiple sub-questions";
inline constexpr std::string_view reason_not_interrogative = "not interrogative";
inline constexpr std::string_view reason_too_long = "too long";
inline constexpr std::string_view reason_too_short = "too short";
inline constexpr std::string_view reason_dangling_reference = "dangling reference";

struct QuestionRules {
    std::size_t max_chars = 300;
};

struct AnswerRules {
    std::size_t min_chars = 10;
    std::vector<std::string> dangling_patterns = {"the document above", "as mentioned in the fragment"};
};

/// Heuristic stand-in for the prompt's rules: exactly one question mark
/// (ASCII or fullwidth) and a length budget.
Verdict validate_question(std::string_view text, const QuestionRules& rules = {});

/// Rejects empty, too-short, and answers that point back at the source
/// document (case-insensitive pattern match).
Verdict validate_answer(std::string_view text, const AnswerRules& rules = {});

struct QAPair {
    std::string id;
    int iteration = 0;
    std::string doc_id;
    std::string question;
    std::string answer;

    bool operator==(const QAPair&) const = default;
};

std::string qa_pair_id(int iteration, const std::string& doc_id);

json to_json(const QAPair& pair);
QAPair qa_pair_from_json(const json& j, std::size_t line = 0);

struct Rejection {
    std::string doc_id;
    std::string reason;
};

struct GenerationStats {
    std::size_t generated = 0;
    std::size_t rejected = 0;
    std::size_t regenerated = 0;
    std::size_t truncated = 0;
    std::vector<Rejection> rejections;
};

json to_json(const GenerationStats& stats);
GenerationStats generation_stats_from_json(const json& j);

struct IterationDataset {
    int iteration = 0;
    std::vector<QAPair> pairs;  // ordered by doc_id
    GenerationStats stats;
};

struct GenerationSettings {
    GenerationParams params{0.7, 512, std::nullopt, {}};
    int regeneration_attempts = 2;
    double max_failure_fraction = 0.2;
    std::size_t max_document_chars = default_document_char_budget;
    QuestionRules question_rules;
    AnswerRules answer_rules;
    int max_parallel = 4;
};

/// One QA pair per document. Each question and answer gets up to
/// `regeneration_attempts` re-samples after a validation failure or empty
/// completion; attempt `a` uses seed `params.seed + a`. Documents that never
/// validate are recorded as rejected. Throws FailureGateError naming the
/// rejected documents when their fraction exceeds `max_failure_fraction`.
IterationDataset generate_iteration_dataset(const std::vector<KnowledgeDocument>& docs, const Backend& backend,
                                            const ModelRef& generator, int iteration,
                                            const GenerationSettings& settings, const PromptTemplates& templates);

void write_dataset(const fs::path& path, const std::vector<QAPair>& pairs);
std::vector<QAPair> load_dataset(const fs::path& path);

}  // namespace selfevo
