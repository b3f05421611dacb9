#include <algorithm>

#include "selfevo/backend.hpp"
#include "selfevo/error.hpp"

namespace selfevo {

MockScript mock_script_from_json(const json& j) {
    MockScript script;
    script.synthesize = j.value("synthesize", true);
    for (const auto& r : j.value("replies", json::array())) {
        MockReplyRule rule;
        rule.match = r.value("match", "");
        rule.model = r.value("model", "");
        rule.reply = r.value("reply", "");
        rule.error = r.value("error", "");
        script.replies.push_back(std::move(rule));
    }
    for (const auto& r : j.value("scores", json::array())) {
        MockScoreRule rule;
        rule.continuation = require_string(r, "continuation");
        if (auto it = r.find("context"); it != r.end() && !it->is_null()) rule.context = it->get<std::string>();
        rule.context_contains = r.value("context_contains", "");
        rule.model = r.value("model", "");
        rule.logprobs = r.value("logprobs", std::vector<double>{});
        rule.error = r.value("error", "");
        script.scores.push_back(std::move(rule));
    }
    return script;
}

namespace {

constexpr std::string_view question_marker = "Reference document:";
constexpr std::string_view answer_marker = "Knowledge fragment:";

std::string joined_contents(const MessageList& messages) {
    std::string all;
    for (const auto& m : messages) {
        if (!all.empty()) all.push_back('\n');
        all += m.content;
    }
    return all;
}

std::string strip_question_marks(std::string_view word) {
    std::string out(word);
    for (std::string_view mark : {std::string_view("?"), std::string_view("\xEF\xBC\x9F")}) {
        std::size_t pos;
        while ((pos = out.find(mark)) != std::string::npos) out.erase(pos, mark.size());
    }
    return out;
}

std::vector<std::string> clean_words(std::string_view text) {
    std::vector<std::string> words;
    for (auto w : split_whitespace(text)) {
        auto cleaned = strip_question_marks(w);
        if (!cleaned.empty()) words.push_back(std::move(cleaned));
    }
    return words;
}

std::string join_range(const std::vector<std::string>& words, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (!out.empty()) out.push_back(' ');
        out += words[i];
    }
    return out;
}

std::uint64_t request_hash(const ModelRef& model, const GenerationParams& params, std::string_view text) {
    std::string key = model.model_name + "|" + std::to_string(params.seed.value_or(0)) + "|";
    return fnv1a64(text, fnv1a64(key));
}

std::string synthesize_question(std::string_view knowledge, std::uint64_t h) {
    auto line_end = knowledge.find('\n');
    auto first_line = knowledge.substr(0, line_end);
    auto words = clean_words(first_line);
    if (words.empty()) return "What does this procedure describe?";
    std::size_t start = h % words.size();
    std::size_t end = std::min(words.size(), start + 4);
    std::string topic = join_range(words, start, end);
    truncate_utf8(topic, 200);
    return "What should operators know about " + topic + "?";
}

std::string synthesize_answer(std::string_view knowledge, std::uint64_t h) {
    auto words = clean_words(knowledge);
    std::size_t take = std::min(words.size(), static_cast<std::size_t>(12 + h % 8));
    std::string body = join_range(words, 0, take);
    if (body.empty()) body = "follow the standard operating procedure";
    return "In short, " + body + ".";
}

std::string synthesize_reply(const std::string& prompt, const ModelRef& model, const GenerationParams& params) {
    auto h = request_hash(model, params, prompt);
    if (auto pos = prompt.rfind(answer_marker); pos != std::string::npos) {
        return synthesize_answer(std::string_view(prompt).substr(pos + answer_marker.size()), h);
    }
    if (auto pos = prompt.find(question_marker); pos != std::string::npos) {
        return synthesize_question(std::string_view(prompt).substr(pos + question_marker.size()), h);
    }
    auto words = clean_words(prompt);
    return "Regarding " + join_range(words, 0, std::min<std::size_t>(words.size(), 24)) +
           ", follow the documented procedure.";
}

double synthesized_logprob(const ModelRef& model, std::string_view token, std::size_t position,
                           const std::string& context_lower) {
    auto h = fnv1a64(token, fnv1a64(model.model_name + "|" + std::to_string(position)));
    if (!context_lower.empty() && context_lower.find(to_lower_ascii(token)) != std::string::npos) {
        return -(0.05 + static_cast<double>(h % 10) * 0.01);
    }
    return -(0.5 + static_cast<double>(h % 250) / 100.0);
}

std::vector<std::string> mock_tokens(const std::string& continuation) {
    std::vector<std::string> tokens;
    for (auto t : split_whitespace(continuation)) tokens.emplace_back(t);
    if (tokens.empty()) tokens.push_back(continuation);
    return tokens;
}

}  // namespace

MockBackend::MockBackend(MockScript script) : script_(std::move(script)) {}

std::string MockBackend::do_generate(const ModelRef& model, const MessageList& messages,
                                     const GenerationParams& params) const {
    const auto prompt = joined_contents(messages);
    for (const auto& rule : script_.replies) {
        if (!rule.model.empty() && rule.model != model.model_name) continue;
        if (!rule.match.empty() && prompt.find(rule.match) == std::string::npos) continue;
        if (rule.error == "transport") throw TransportError("mock transport failure", 0, 1);
        if (rule.error == "http_400") throw HttpStatusError("HTTP 400: mock rejected request", 400);
        if (rule.error == "empty") return "";
        return rule.reply;
    }
    if (!script_.synthesize) throw BackendError("mock backend has no reply rule for this request");
    return synthesize_reply(prompt, model, params);
}

ScoredContinuation MockBackend::do_score(const ModelRef& scorer, const std::string& context,
                                         const std::string& continuation) const {
    ScoredContinuation out{context, continuation, {}, 0};
    const auto tokens = mock_tokens(continuation);

    for (const auto& rule : script_.scores) {
        if (rule.continuation != continuation) continue;
        if (!rule.model.empty() && rule.model != scorer.model_name) continue;
        if (rule.context && *rule.context != context) continue;
        if (!rule.context_contains.empty() && context.find(rule.context_contains) == std::string::npos) continue;
        if (rule.error == "alignment") throw AlignmentError("mock: cannot locate continuation boundary");
        if (rule.error == "capability") throw CapabilityError("mock: logprob echo not supported");
        if (rule.logprobs.size() != tokens.size()) {
            throw ConfigError("mock script scores " + std::to_string(rule.logprobs.size()) +
                              " tokens but the continuation has " + std::to_string(tokens.size()));
        }
        for (std::size_t i = 0; i < tokens.size(); ++i) out.token_scores.push_back({tokens[i], rule.logprobs[i]});
        return out;
    }
    if (!script_.synthesize) throw CapabilityError("mock backend has no score rule for this continuation");

    const auto context_lower = to_lower_ascii(context);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        out.token_scores.push_back({tokens[i], synthesized_logprob(scorer, tokens[i], i, context_lower)});
    }
    return out;
}

}  // namespace selfevo
