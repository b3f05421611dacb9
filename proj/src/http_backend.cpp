#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "selfevo/backend.hpp"
#include "selfevo/error.hpp"

namespace selfevo {

namespace {

struct SplitUrl {
    std::string scheme_host_port;
    std::string path_prefix;
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("backend_url must include a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.scheme_host_port = url;
    } else {
        out.scheme_host_port = url.substr(0, path_start);
        out.path_prefix = url.substr(path_start);
        while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
    }
    return out;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {}

json HttpBackend::post_json(const std::string& base_url, const std::string& endpoint, const json& body) const {
    const auto url = split_url(base_url);
    const auto path = url.path_prefix + endpoint;
    const auto payload = body.dump();

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
    int last_status = 0;
    std::string last_reason;

    for (int attempt = 1; attempt <= config_.retry_attempts; ++attempt) {
        httplib::Client client(url.scheme_host_port);
        client.set_connection_timeout(timeout_us);
        client.set_read_timeout(timeout_us);
        client.set_write_timeout(timeout_us);

        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_status = 0;
            last_reason = httplib::to_string(res.error());
        } else if (res->status >= 200 && res->status < 300) {
            try {
                return json::parse(res->body);
            } catch (const json::parse_error& e) {
                throw BackendError(std::string("invalid JSON from ") + base_url + endpoint + ": " + e.what());
            }
        } else if (retryable_status(res->status)) {
            last_status = res->status;
            last_reason = "HTTP " + std::to_string(res->status);
        } else {
            throw HttpStatusError("HTTP " + std::to_string(res->status) + " from " + base_url + endpoint + ": " +
                                      res->body,
                                  res->status);
        }

        if (attempt < config_.retry_attempts) {
            double delay = config_.retry_backoff_seconds * std::pow(2.0, attempt - 1);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
    }

    std::string message = "request to " + base_url + endpoint + " failed after " +
                          std::to_string(config_.retry_attempts) + " attempts (" + last_reason;
    if (last_status) message += ", status " + std::to_string(last_status);
    message += ")";
    throw TransportError(message, last_status, config_.retry_attempts);
}

std::string HttpBackend::do_generate(const ModelRef& model, const MessageList& messages,
                                     const GenerationParams& params) const {
    json body{{"model", model.model_name},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens}};
    body["messages"] = json::array();
    for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    if (params.seed) body["seed"] = *params.seed;
    if (!params.stop.empty()) body["stop"] = params.stop;

    auto response = post_json(model.backend_url, "/v1/chat/completions", body);
    const auto& choices = response.value("choices", json::array());
    if (choices.empty()) throw EmptyCompletionError("no choices in chat completion response");
    const auto& message = choices.at(0).value("message", json::object());
    auto content = message.find("content");
    if (content == message.end() || !content->is_string()) {
        throw EmptyCompletionError("chat completion has no content");
    }
    return content->get<std::string>();
}

ScoredContinuation parse_echo_logprobs(const json& response, const std::string& context,
                                       const std::string& continuation) {
    const auto& choices = response.value("choices", json::array());
    if (choices.empty()) throw CapabilityError("completion response has no choices");
    const auto& choice = choices.at(0);
    auto lp = choice.find("logprobs");
    if (lp == choice.end() || !lp->is_object()) {
        throw CapabilityError("backend does not support prompt logprob echo (no logprobs object)");
    }
    const auto tokens = lp->value("tokens", json::array());
    const auto token_logprobs = lp->value("token_logprobs", json::array());
    const auto offsets = lp->value("text_offset", json::array());
    if (tokens.empty() || tokens.size() != token_logprobs.size() || tokens.size() != offsets.size()) {
        throw CapabilityError("backend logprobs are missing tokens, token_logprobs or text_offset");
    }

    // Offsets count characters of the prompt, not bytes.
    const auto boundary = static_cast<long long>(utf8_length(context));
    const auto prompt_end = boundary + static_cast<long long>(utf8_length(continuation));

    std::size_t begin = tokens.size();
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        if (offsets[i].get<long long>() >= boundary) {
            begin = i;
            break;
        }
    }
    if (begin == tokens.size() || offsets[begin].get<long long>() != boundary) {
        throw AlignmentError("no echoed token starts at the continuation boundary (offset " +
                             std::to_string(boundary) + ")");
    }

    ScoredContinuation out{context, continuation, {}, 0};
    for (std::size_t i = begin; i < tokens.size(); ++i) {
        if (offsets[i].get<long long>() >= prompt_end) break;  // generated tokens, if any
        const auto& value = token_logprobs[i];
        if (value.is_null()) {
            // The first prompt token has no left context to condition on.
            if (i == 0 && out.token_scores.empty()) {
                ++out.unscored_leading_tokens;
                continue;
            }
            throw CapabilityError("backend returned a null logprob inside the continuation");
        }
        double logprob = value.get<double>();
        if (!std::isfinite(logprob)) throw CapabilityError("backend returned a non-finite logprob");
        out.token_scores.push_back({tokens[i].get<std::string>(), std::min(0.0, logprob)});
    }
    if (out.token_scores.empty() && out.unscored_leading_tokens == 0) {
        throw AlignmentError("no echoed tokens fall inside the continuation");
    }
    return out;
}

ScoredContinuation HttpBackend::do_score(const ModelRef& scorer, const std::string& context,
                                         const std::string& continuation) const {
    json body{{"model", scorer.model_name},
              {"prompt", context + continuation},
              {"echo", true},
              {"logprobs", 1},
              {"max_tokens", 0},
              {"temperature", 0.0}};
    auto response = post_json(scorer.backend_url, "/v1/completions", body);
    return parse_echo_logprobs(response, context, continuation);
}

}  // namespace selfevo
