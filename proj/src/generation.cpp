#include "selfevo/generation.hpp"

#include <algorithm>
#include <unordered_set>

#include "selfevo/error.hpp"
#include "selfevo/parallel.hpp"

namespace selfevo {

PromptTemplate load_prompt_template(const fs::path& path, const std::vector<std::string>& required_placeholders) {
    if (!fs::exists(path)) throw ConfigError("prompt template not found: " + path.string());
    PromptTemplate t;
    t.path = path.string();
    t.text = read_file(path);
    t.sha256 = sha256_hex(t.text);
    while (!t.text.empty() && (t.text.back() == '\n' || t.text.back() == '\r')) t.text.pop_back();
    for (const auto& name : required_placeholders) {
        if (t.text.find("{" + name + "}") == std::string::npos) {
            throw ConfigError("prompt template " + path.string() + " lacks the {" + name + "} placeholder");
        }
    }
    return t;
}

PromptTemplates load_prompt_templates(const fs::path& question_path, const fs::path& answer_path) {
    return {load_prompt_template(question_path, {"Knowledge"}),
            load_prompt_template(answer_path, {"Question", "Knowledge"})};
}

namespace {

std::string budgeted_text(const KnowledgeDocument& doc, std::size_t budget, bool& truncated) {
    std::string text = doc.text;
    truncated = truncate_utf8(text, budget);
    if (truncated) {
        log_warn("document " + doc.id + " truncated to " + std::to_string(budget) + " characters");
    }
    return text;
}

std::size_t count_question_marks(std::string_view text) {
    std::size_t count = std::count(text.begin(), text.end(), '?');
    constexpr std::string_view fullwidth = "\xEF\xBC\x9F";  // U+FF1F
    for (auto pos = text.find(fullwidth); pos != std::string_view::npos; pos = text.find(fullwidth, pos + 1)) {
        ++count;
    }
    return count;
}

}  // namespace

RenderedPrompt build_question_prompt(const KnowledgeDocument& doc, const PromptTemplate& tmpl,
                                     std::size_t char_budget) {
    RenderedPrompt out;
    auto knowledge = budgeted_text(doc, char_budget, out.truncated);
    out.messages.push_back({"user", render_placeholders(tmpl.text, {{"Knowledge", knowledge}})});
    return out;
}

RenderedPrompt build_answer_prompt(const KnowledgeDocument& doc, const std::string& question,
                                   const PromptTemplate& tmpl, std::size_t char_budget) {
    if (trim(question).empty()) throw PreconditionError("question must be non-empty");
    RenderedPrompt out;
    auto knowledge = budgeted_text(doc, char_budget, out.truncated);
    out.messages.push_back(
        {"user", render_placeholders(tmpl.text, {{"Question", question}, {"Knowledge", knowledge}})});
    return out;
}

Verdict validate_question(std::string_view text, const QuestionRules& rules) {
    auto q = trim(text);
    if (q.empty()) return Verdict::reject(std::string(reason_empty));
    auto marks = count_question_marks(q);
    if (marks > 1) return Verdict::reject(std::string(reason_multiple_questions));
    if (marks == 0) return Verdict::reject(std::string(reason_not_interrogative));
    if (utf8_length(q) > rules.max_chars) return Verdict::reject(std::string(reason_too_long));
    return Verdict::accept();
}

Verdict validate_answer(std::string_view text, const AnswerRules& rules) {
    auto a = trim(text);
    if (a.empty()) return Verdict::reject(std::string(reason_empty));
    if (utf8_length(a) < rules.min_chars) return Verdict::reject(std::string(reason_too_short));
    for (const auto& pattern : rules.dangling_patterns) {
        if (!pattern.empty() && contains_ci(a, pattern)) {
            return Verdict::reject(std::string(reason_dangling_reference) + ": " + pattern);
        }
    }
    return Verdict::accept();
}

std::string qa_pair_id(int iteration, const std::string& doc_id) {
    return "it" + std::to_string(iteration) + ":" + doc_id;
}

json to_json(const QAPair& pair) {
    return json{{"id", pair.id},
                {"iteration", pair.iteration},
                {"doc_id", pair.doc_id},
                {"question", pair.question},
                {"answer", pair.answer}};
}

QAPair qa_pair_from_json(const json& j, std::size_t line) {
    QAPair p;
    p.id = require_string(j, "id", line);
    auto it = j.find("iteration");
    if (it == j.end() || !it->is_number_integer()) throw SchemaError("missing integer field 'iteration'", line);
    p.iteration = it->get<int>();
    p.doc_id = require_string(j, "doc_id", line);
    p.question = require_string(j, "question", line);
    p.answer = require_string(j, "answer", line);
    return p;
}

json to_json(const GenerationStats& stats) {
    json rejections = json::array();
    for (const auto& r : stats.rejections) rejections.push_back({{"doc_id", r.doc_id}, {"reason", r.reason}});
    return json{{"generated", stats.generated},
                {"rejected", stats.rejected},
                {"regenerated", stats.regenerated},
                {"truncated", stats.truncated},
                {"rejections", rejections}};
}

GenerationStats generation_stats_from_json(const json& j) {
    GenerationStats s;
    s.generated = j.value("generated", std::size_t{0});
    s.rejected = j.value("rejected", std::size_t{0});
    s.regenerated = j.value("regenerated", std::size_t{0});
    s.truncated = j.value("truncated", std::size_t{0});
    for (const auto& r : j.value("rejections", json::array())) {
        s.rejections.push_back({r.value("doc_id", ""), r.value("reason", "")});
    }
    return s;
}

namespace {

struct DocOutcome {
    std::optional<QAPair> pair;
    std::string rejection;
    std::size_t regenerated = 0;
    bool truncated = false;
};

GenerationParams attempt_params(const GenerationParams& base, int attempt) {
    GenerationParams p = base;
    p.seed = base.seed.value_or(0) + attempt;
    return p;
}

/// Samples until `validate` accepts or the attempt budget is spent.
std::optional<std::string> sample_valid(const Backend& backend, const ModelRef& generator, const MessageList& messages,
                                        const GenerationSettings& settings,
                                        const std::function<Verdict(std::string_view)>& validate,
                                        std::size_t& regenerated, std::string& last_reason) {
    for (int attempt = 0; attempt <= settings.regeneration_attempts; ++attempt) {
        if (attempt > 0) ++regenerated;
        std::string text;
        try {
            text = backend.generate(generator, messages, attempt_params(settings.params, attempt));
        } catch (const EmptyCompletionError&) {
            last_reason = "empty completion";
            continue;
        }
        auto verdict = validate(text);
        if (verdict) return std::string(trim(text));
        last_reason = verdict.reason;
    }
    return std::nullopt;
}

DocOutcome generate_for_document(const KnowledgeDocument& doc, const Backend& backend, const ModelRef& generator,
                                 int iteration, const GenerationSettings& settings,
                                 const PromptTemplates& templates) {
    DocOutcome out;
    auto q_prompt = build_question_prompt(doc, templates.question, settings.max_document_chars);
    out.truncated = q_prompt.truncated;

    std::string reason;
    auto question = sample_valid(
        backend, generator, q_prompt.messages, settings,
        [&](std::string_view t) { return validate_question(t, settings.question_rules); }, out.regenerated, reason);
    if (!question) {
        out.rejection = "question: " + reason;
        return out;
    }

    auto a_prompt = build_answer_prompt(doc, *question, templates.answer, settings.max_document_chars);
    auto answer = sample_valid(
        backend, generator, a_prompt.messages, settings,
        [&](std::string_view t) { return validate_answer(t, settings.answer_rules); }, out.regenerated, reason);
    if (!answer) {
        out.rejection = "answer: " + reason;
        return out;
    }

    out.pair = QAPair{qa_pair_id(iteration, doc.id), iteration, doc.id, std::move(*question), std::move(*answer)};
    return out;
}

}  // namespace

IterationDataset generate_iteration_dataset(const std::vector<KnowledgeDocument>& docs, const Backend& backend,
                                            const ModelRef& generator, int iteration,
                                            const GenerationSettings& settings, const PromptTemplates& templates) {
    if (iteration < 0) throw PreconditionError("iteration must be >= 0");
    settings.params.validate();

    std::vector<DocOutcome> outcomes(docs.size());
    auto errors = parallel_for_each_index(docs.size(), settings.max_parallel, [&](std::size_t i) {
        outcomes[i] = generate_for_document(docs[i], backend, generator, iteration, settings, templates);
    });

    IterationDataset dataset;
    dataset.iteration = iteration;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto& outcome = outcomes[i];
        if (errors[i]) {
            try {
                std::rethrow_exception(errors[i]);
            } catch (const ValidationError&) {
                throw;
            } catch (const std::exception& e) {
                outcome.rejection = std::string("backend error: ") + e.what();
            }
        }
        dataset.stats.regenerated += outcome.regenerated;
        if (outcome.truncated) ++dataset.stats.truncated;
        if (outcome.pair) {
            dataset.pairs.push_back(std::move(*outcome.pair));
        } else {
            dataset.stats.rejections.push_back({docs[i].id, outcome.rejection});
        }
    }
    dataset.stats.generated = dataset.pairs.size();
    dataset.stats.rejected = dataset.stats.rejections.size();

    std::sort(dataset.pairs.begin(), dataset.pairs.end(),
              [](const QAPair& a, const QAPair& b) { return a.doc_id < b.doc_id; });
    std::sort(dataset.stats.rejections.begin(), dataset.stats.rejections.end(),
              [](const Rejection& a, const Rejection& b) { return a.doc_id < b.doc_id; });

    if (!docs.empty()) {
        double fraction = static_cast<double>(dataset.stats.rejected) / static_cast<double>(docs.size());
        if (fraction > settings.max_failure_fraction) {
            std::string names;
            for (const auto& r : dataset.stats.rejections) {
                if (!names.empty()) names += ", ";
                names += r.doc_id + " (" + r.reason + ")";
            }
            throw FailureGateError("iteration " + std::to_string(iteration) + ": " +
                                   std::to_string(dataset.stats.rejected) + "/" + std::to_string(docs.size()) +
                                   " documents yielded no valid QA pair, above the allowed fraction " +
                                   std::to_string(settings.max_failure_fraction) + ": " + names);
        }
    }
    return dataset;
}

void write_dataset(const fs::path& path, const std::vector<QAPair>& pairs) {
    std::vector<json> records;
    records.reserve(pairs.size());
    for (const auto& p : pairs) records.push_back(to_json(p));
    write_file_atomic(path, to_jsonl(records));
}

std::vector<QAPair> load_dataset(const fs::path& path) {
    std::vector<QAPair> pairs;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](const json& record, std::size_t line) {
        auto pair = qa_pair_from_json(record, line);
        if (!seen.insert(pair.id).second) throw SchemaError("duplicate QA id \"" + pair.id + "\"", line);
        pairs.push_back(std::move(pair));
    });
    return pairs;
}

}  // namespace selfevo
