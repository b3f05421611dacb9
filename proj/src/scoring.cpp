#include "selfevo/scoring.hpp"

#include <future>

#include "selfevo/kernels.hpp"
#include "selfevo/parallel.hpp"

namespace selfevo {

json to_json(const ScoreRecord& r) {
    return json{{"qa_id", r.qa_id},
                {"conditioned_score", r.conditioned_score},
                {"direct_score", r.direct_score},
                {"ifd", r.ifd},
                {"token_count", r.token_count}};
}

ScoreRecord score_record_from_json(const json& j, std::size_t line) {
    ScoreRecord r;
    r.qa_id = require_string(j, "qa_id", line);
    try {
        r.conditioned_score = j.at("conditioned_score").get<double>();
        r.direct_score = j.at("direct_score").get<double>();
        r.ifd = j.at("ifd").get<double>();
        r.token_count = j.at("token_count").get<std::size_t>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid score record: ") + e.what(), line);
    }
    return r;
}

double mean_nll(std::span<const TokenScore> scores) {
    if (scores.empty()) throw PreconditionError("mean_nll of an empty token list");
    double sum = 0.0;
    for (const auto& t : scores) sum += t.logprob;
    return -sum / static_cast<double>(scores.size());
}

std::string to_string(ScoreFraming f) { return f == ScoreFraming::chat ? "chat" : "raw"; }

ScoreFraming score_framing_from_string(const std::string& s) {
    if (s == "raw") return ScoreFraming::raw;
    if (s == "chat") return ScoreFraming::chat;
    throw ConfigError("unknown scoring framing: " + s);
}

std::string conditioned_context(const std::string& question, const ScoringSettings& settings) {
    const auto& frame = settings.framing == ScoreFraming::chat ? settings.chat_question_frame : settings.question_frame;
    return render_placeholders(frame, {{"Question", question}});
}

std::string direct_context(const ScoringSettings& settings) {
    return settings.framing == ScoreFraming::chat ? settings.chat_direct_context : std::string();
}

namespace {

struct ScoredRoutes {
    std::vector<double> conditioned;
    std::vector<double> direct;
};

std::vector<double> logprobs_of(const ScoredContinuation& sc, std::size_t skip) {
    std::vector<double> out;
    for (std::size_t i = skip; i < sc.token_scores.size(); ++i) out.push_back(sc.token_scores[i].logprob);
    return out;
}

ScoredRoutes fetch_routes(const QAPair& pair, const Backend& backend, const ModelRef& scorer,
                          const ScoringSettings& settings) {
    const auto q_context = conditioned_context(pair.question, settings);
    const auto d_context = direct_context(settings);
    auto direct_future = std::async(std::launch::async, [&] {
        return backend.score_continuation(scorer, d_context, pair.answer);
    });
    auto conditioned = backend.score_continuation(scorer, q_context, pair.answer);
    auto direct = direct_future.get();

    // A token the direct route could not score is dropped from both routes so
    // numerator and denominator average over the same answer tokens.
    const std::size_t cond_total = conditioned.token_scores.size() + conditioned.unscored_leading_tokens;
    const std::size_t direct_total = direct.token_scores.size() + direct.unscored_leading_tokens;
    if (cond_total != direct_total) {
        throw AlignmentError("token count mismatch for " + pair.id + ": conditioned " + std::to_string(cond_total) +
                             " vs direct " + std::to_string(direct_total));
    }
    const std::size_t skip = std::max(conditioned.unscored_leading_tokens, direct.unscored_leading_tokens);
    ScoredRoutes routes{logprobs_of(conditioned, skip - conditioned.unscored_leading_tokens),
                        logprobs_of(direct, skip - direct.unscored_leading_tokens)};
    if (routes.conditioned.empty()) throw AlignmentError("no scorable answer tokens for " + pair.id);
    return routes;
}

ScoreRecord make_record(const std::string& qa_id, double conditioned, double direct, std::size_t tokens,
                        const ScoringSettings& settings) {
    if (direct < settings.min_direct_score) {
        throw DegenerateScoreError(std::string(reason_degenerate_direct) + " for " + qa_id);
    }
    return ScoreRecord{qa_id, conditioned, direct, conditioned / direct, tokens};
}

}  // namespace

ScoreRecord score_pair(const QAPair& pair, const Backend& backend, const ModelRef& scorer,
                       const ScoringSettings& settings) {
    auto routes = fetch_routes(pair, backend, scorer, settings);
    double mean[2];
    const std::vector<double> rows[2] = {routes.conditioned, routes.direct};
    kernels::serial::mean_nll_batch(rows, mean);
    return make_record(pair.id, mean[0], mean[1], routes.conditioned.size(), settings);
}

ScoredDataset score_dataset(const std::vector<QAPair>& pairs, const Backend& backend, const ModelRef& scorer,
                            const ScoringSettings& settings) {
    if (pairs.empty()) throw PreconditionError("score_dataset requires at least one pair");

    std::vector<ScoredRoutes> routes(pairs.size());
    auto errors = parallel_for_each_index(pairs.size(), settings.max_parallel, [&](std::size_t i) {
        routes[i] = fetch_routes(pairs[i], backend, scorer, settings);
    });

    std::vector<std::string> failure(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception& e) {
            failure[i] = e.what();
        }
    }

    // Batch the mean-NLL arithmetic for every pair that has token scores.
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!failure[i].empty()) continue;
        rows.push_back(std::move(routes[i].conditioned));
        rows.push_back(std::move(routes[i].direct));
    }
    std::vector<double> means(rows.size());
    kernels::mean_nll_batch(rows, means);

    ScoredDataset out;
    std::size_t next = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!failure[i].empty()) {
            log_warn("excluding " + pairs[i].id + " from scoring: " + failure[i]);
            out.excluded.push_back({pairs[i].id, failure[i]});
            continue;
        }
        const std::size_t row = 2 * next++;
        try {
            out.records.push_back(
                make_record(pairs[i].id, means[row], means[row + 1], rows[row].size(), settings));
        } catch (const DegenerateScoreError&) {
            log_warn("excluding " + pairs[i].id + ": " + std::string(reason_degenerate_direct));
            out.excluded.push_back({pairs[i].id, std::string(reason_degenerate_direct)});
        }
    }

    const double fraction = static_cast<double>(out.excluded.size()) / static_cast<double>(pairs.size());
    if (fraction > settings.max_failure_fraction) {
        throw FailureGateError(std::to_string(out.excluded.size()) + "/" + std::to_string(pairs.size()) +
                               " pairs failed scoring, above the allowed fraction " +
                               std::to_string(settings.max_failure_fraction) + " (first: " + out.excluded.front().qa_id +
                               ": " + out.excluded.front().reason + ")");
    }
    return out;
}

void write_scores(const fs::path& path, const std::vector<ScoreRecord>& records) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(to_json(r));
    write_file_atomic(path, to_jsonl(lines));
}

std::vector<ScoreRecord> load_scores(const fs::path& path) {
    std::vector<ScoreRecord> records;
    for_each_jsonl(path, [&](const json& j, std::size_t line) { records.push_back(score_record_from_json(j, line)); });
    return records;
}

}  // namespace selfevo
