#include "selfevo/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "selfevo/error.hpp"
#include "selfevo/parallel.hpp"

namespace selfevo {

std::string to_string(BleuTokenization t) { return t == BleuTokenization::whitespace ? "whitespace" : "character"; }

std::string to_string(BleuSmoothing s) { return s == BleuSmoothing::none ? "none" : "add_one_on_zero_counts"; }

BleuTokenization bleu_tokenization_from_string(const std::string& s) {
    if (s == "whitespace") return BleuTokenization::whitespace;
    if (s == "character") return BleuTokenization::character;
    throw ConfigError("unknown BLEU tokenization: " + s);
}

BleuSmoothing bleu_smoothing_from_string(const std::string& s) {
    if (s == "none") return BleuSmoothing::none;
    if (s == "add_one_on_zero_counts") return BleuSmoothing::add_one_on_zero_counts;
    throw ConfigError("unknown BLEU smoothing: " + s);
}

std::vector<std::string> bleu_tokens(std::string_view text, BleuTokenization mode) {
    std::vector<std::string> tokens;
    if (mode == BleuTokenization::whitespace) {
        for (auto t : split_whitespace(text)) tokens.emplace_back(t);
        return tokens;
    }
    for (auto cp : utf8_code_points(text)) {
        if (cp.size() == 1 && std::isspace(static_cast<unsigned char>(cp[0]))) continue;
        tokens.emplace_back(cp);
    }
    return tokens;
}

double bleu_from_stats(const kernels::NgramStats& stats, const BleuConfig& config) {
    if (stats.candidate_length == 0) return 0.0;
    double log_sum = 0.0;
    for (int n = 0; n < config.max_ngram; ++n) {
        const auto total = stats.totals[n];
        if (total == 0) continue;  // p_n = 1
        const auto matched = stats.matches[n];
        double p;
        if (matched == 0) {
            if (config.smoothing == BleuSmoothing::none) return 0.0;
            p = 1.0 / static_cast<double>(total + 1);
        } else {
            p = static_cast<double>(matched) / static_cast<double>(total);
        }
        log_sum += std::log(p);
    }
    const double c = static_cast<double>(stats.candidate_length);
    const double r = static_cast<double>(stats.reference_length);
    const double brevity = std::exp(std::min(0.0, 1.0 - r / c));
    return brevity * std::exp(log_sum / config.max_ngram);
}

double corpus_bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                   const BleuConfig& config) {
    if (candidates.size() != references.size()) {
        throw PreconditionError("corpus_bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                                std::to_string(references.size()) + " references");
    }
    if (candidates.empty()) throw PreconditionError("corpus_bleu: empty corpus");
    if (config.max_ngram < 1) throw PreconditionError("corpus_bleu: max_ngram must be >= 1");

    std::unordered_map<std::string, std::uint32_t> vocab;
    auto intern = [&](std::string_view text) {
        kernels::TokenIds ids;
        for (auto& tok : bleu_tokens(text, config.tokenization)) {
            auto [it, inserted] = vocab.emplace(std::move(tok), static_cast<std::uint32_t>(vocab.size()));
            ids.push_back(it->second);
        }
        return ids;
    };
    std::vector<kernels::TokenIds> cand_ids, ref_ids;
    cand_ids.reserve(candidates.size());
    ref_ids.reserve(references.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cand_ids.push_back(intern(candidates[i]));
        ref_ids.push_back(intern(references[i]));
    }
    return bleu_from_stats(kernels::corpus_ngram_stats(cand_ids, ref_ids, config.max_ngram), config);
}

double sentence_bleu(const std::string& candidate, const std::string& reference, const BleuConfig& config) {
    return corpus_bleu({candidate}, {reference}, config);
}

json to_json(const EvalReport& r) {
    json per = json::array();
    for (const auto& q : r.per_question) {
        json item{{"id", q.id}, {"candidate", q.candidate}, {"bleu", q.bleu}};
        if (!q.error.empty()) item["error"] = q.error;
        per.push_back(std::move(item));
    }
    return json{{"iteration", r.iteration},
                {"model_name", r.model_name},
                {"model_bleu", r.model_bleu},
                {"baseline_bleu", r.baseline_bleu},
                {"relative_score", r.relative_score},
                {"per_question", per}};
}

EvalReport eval_report_from_json(const json& j) {
    EvalReport r;
    try {
        r.iteration = j.at("iteration").get<int>();
        r.model_name = j.value("model_name", "");
        r.model_bleu = j.at("model_bleu").get<double>();
        r.baseline_bleu = j.at("baseline_bleu").get<double>();
        r.relative_score = j.at("relative_score").get<double>();
        for (const auto& q : j.value("per_question", json::array())) {
            r.per_question.push_back({q.at("id").get<std::string>(), q.at("candidate").get<std::string>(),
                                      q.at("bleu").get<double>(), q.value("error", "")});
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid eval report: ") + e.what());
    }
    return r;
}

EvalReport evaluate_model(const Backend& backend, const ModelRef& model, const std::vector<EvalPair>& eval_set,
                          double baseline_bleu, const EvalSettings& settings, int iteration) {
    if (!(baseline_bleu > 0.0) || !std::isfinite(baseline_bleu)) {
        throw PreconditionError("baseline_bleu must be positive");
    }
    if (eval_set.empty()) throw PreconditionError("evaluation set is empty");
    const ModelRef evaluatee = model.with_role(ModelRole::evaluatee);

    std::vector<std::string> candidates(eval_set.size());
    auto errors = parallel_for_each_index(eval_set.size(), settings.max_parallel, [&](std::size_t i) {
        candidates[i] = std::string(trim(backend.generate(evaluatee, {{"user", eval_set[i].question}}, settings.params)));
    });

    EvalReport report;
    report.iteration = iteration;
    report.model_name = model.model_name;
    std::size_t failed = 0;
    std::vector<std::string> references;
    references.reserve(eval_set.size());
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        QuestionResult q{eval_set[i].id, candidates[i], 0.0, {}};
        if (errors[i]) {
            try {
                std::rethrow_exception(errors[i]);
            } catch (const ValidationError&) {
                throw;
            } catch (const std::exception& e) {
                q.error = e.what();
                q.candidate.clear();
                candidates[i].clear();
                ++failed;
            }
        }
        q.bleu = sentence_bleu(q.candidate, eval_set[i].reference_answer, settings.bleu);
        report.per_question.push_back(std::move(q));
        references.push_back(eval_set[i].reference_answer);
    }
    const double fraction = static_cast<double>(failed) / static_cast<double>(eval_set.size());
    if (fraction > settings.max_failure_fraction) {
        throw FailureGateError("evaluation of " + model.model_name + ": " + std::to_string(failed) + "/" +
                               std::to_string(eval_set.size()) + " generations failed");
    }

    report.model_bleu = corpus_bleu(candidates, references, settings.bleu);
    report.baseline_bleu = baseline_bleu;
    report.relative_score = report.model_bleu / baseline_bleu;
    return report;
}

double compute_baseline_bleu(const Backend& backend, const ModelRef& baseline_model,
                             const std::vector<EvalPair>& eval_set, const EvalSettings& settings) {
    auto report = evaluate_model(backend, baseline_model, eval_set, 1.0, settings);
    if (!(report.model_bleu > 0.0)) {
        throw RuntimeFailure("baseline model " + baseline_model.model_name + " scored BLEU 0; cannot normalize");
    }
    return report.model_bleu;
}

std::string score_rows_csv(const std::vector<ScoreRow>& rows) {
    std::ostringstream out;
    out << "iteration,model_bleu,relative_score\n";
    out << std::setprecision(12);
    for (const auto& r : rows) out << r.iteration << ',' << r.model_bleu << ',' << r.relative_score << '\n';
    return out.str();
}

}  // namespace selfevo
