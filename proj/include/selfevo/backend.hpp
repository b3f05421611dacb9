#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "selfevo/util.hpp"

namespace selfevo {

enum class ModelRole { generator, scorer, evaluatee };

std::string to_string(ModelRole role);
ModelRole model_role_from_string(const std::string& s);

/// Serving handle for one model generation. `backend_url` is an http(s) base
/// URL (without the `/v1` suffix) or a `mock://` tag.
struct ModelRef {
    std::string backend_url;
    std::string model_name;
    ModelRole role = ModelRole::generator;

    bool operator==(const ModelRef&) const = default;

    ModelRef with_role(ModelRole r) const {
        ModelRef copy = *this;
        copy.role = r;
        return copy;
    }
    bool is_mock() const;
};

json to_json(const ModelRef& ref);
/// Role is optional in JSON (result.json omits it); `default_role` fills it.
ModelRef model_ref_from_json(const json& j, ModelRole default_role = ModelRole::generator);

struct GenerationParams {
    double temperature = 0.7;
    int max_tokens = 512;
    std::optional<std::int64_t> seed;
    std::vector<std::string> stop;

    void validate() const;
    bool operator==(const GenerationParams&) const = default;
};

json to_json(const GenerationParams& p);
GenerationParams generation_params_from_json(const json& j);

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

using MessageList = std::vector<ChatMessage>;

/// Natural-log probability of one backend token.
struct TokenScore {
    std::string token_text;
    double logprob = 0.0;
};

struct ScoredContinuation {
    std::string context;
    std::string continuation;
    std::vector<TokenScore> token_scores;
    /// Leading continuation tokens the backend returned without a logprob.
    /// Only possible when the context is empty (first token of the prompt).
    std::size_t unscored_leading_tokens = 0;
};

struct BackendConfig {
    double timeout_seconds = 120.0;
    int max_parallel = 4;
    std::string api_key_env = "SELFEVO_API_KEY";
    int retry_attempts = 3;
    double retry_backoff_seconds = 1.0;
    std::string mock_script;  // optional path to a mock script JSON

    bool operator==(const BackendConfig&) const = default;
};

json to_json(const BackendConfig& c);
BackendConfig backend_config_from_json(const json& j);

/// LLM service contract. Public entry points check preconditions, then forward
/// to the implementation hooks. Implementations are stateless between calls
/// and safe to call concurrently.
class Backend {
public:
    virtual ~Backend() = default;

    /// Assistant completion text. Requires role generator or evaluatee,
    /// non-empty messages and max_tokens >= 1.
    std::string generate(const ModelRef& model, const MessageList& messages,
                         const GenerationParams& params) const;

    /// Per-token logprobs of `continuation` given `context`. An empty context
    /// is the unconditioned (direct) scoring mode. Requires role scorer.
    ScoredContinuation score_continuation(const ModelRef& scorer, const std::string& context,
                                          const std::string& continuation) const;

protected:
    virtual std::string do_generate(const ModelRef& model, const MessageList& messages,
                                    const GenerationParams& params) const = 0;
    virtual ScoredContinuation do_score(const ModelRef& scorer, const std::string& context,
                                        const std::string& continuation) const = 0;
};

// ---- mock -------------------------------------------------------------------

struct MockReplyRule {
    std::string match;  // substring of the concatenated message contents; empty matches all
    std::string model;  // optional model_name filter
    std::string reply;
    std::string error;  // "", "empty", "transport", "http_400"
};

struct MockScoreRule {
    std::string continuation;
    std::optional<std::string> context;  // exact context match
    std::string context_contains;        // substring match, ignored when empty
    std::string model;
    std::vector<double> logprobs;
    std::string error;  // "", "alignment", "capability"
};

struct MockScript {
    std::vector<MockReplyRule> replies;
    std::vector<MockScoreRule> scores;
    /// When no rule matches: synthesize deterministic output (true) or fail.
    bool synthesize = true;
};

MockScript mock_script_from_json(const json& j);

/// Deterministic scripted backend: identical request -> identical response.
/// Tokenizes by whitespace; the number of scored tokens always equals the
/// whitespace token count of the continuation.
class MockBackend final : public Backend {
public:
    explicit MockBackend(MockScript script = {});

    const MockScript& script() const noexcept { return script_; }

protected:
    std::string do_generate(const ModelRef& model, const MessageList& messages,
                            const GenerationParams& params) const override;
    ScoredContinuation do_score(const ModelRef& scorer, const std::string& context,
                                const std::string& continuation) const override;

private:
    MockScript script_;
};

// ---- http -------------------------------------------------------------------

/// OpenAI-compatible client: chat completions for generation, echoed prompt
/// logprobs on /v1/completions for scoring.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(BackendConfig config);

protected:
    std::string do_generate(const ModelRef& model, const MessageList& messages,
                            const GenerationParams& params) const override;
    ScoredContinuation do_score(const ModelRef& scorer, const std::string& context,
                                const std::string& continuation) const override;

private:
    json post_json(const std::string& base_url, const std::string& endpoint, const json& body) const;

    BackendConfig config_;
};

/// Interprets an echoed `/v1/completions` response and cuts out the
/// continuation's tokens. Exposed for tests.
ScoredContinuation parse_echo_logprobs(const json& response, const std::string& context,
                                       const std::string& continuation);

/// Dispatches on ModelRef::backend_url: `mock://...` to one shared MockBackend,
/// anything else to the HTTP client.
class RoutingBackend final : public Backend {
public:
    explicit RoutingBackend(BackendConfig config);
    RoutingBackend(BackendConfig config, MockScript script);

    const BackendConfig& config() const noexcept { return config_; }

protected:
    std::string do_generate(const ModelRef& model, const MessageList& messages,
                            const GenerationParams& params) const override;
    ScoredContinuation do_score(const ModelRef& scorer, const std::string& context,
                                const std::string& continuation) const override;

private:
    const Backend& pick(const ModelRef& model) const;

    BackendConfig config_;
    MockBackend mock_;
    HttpBackend http_;
};

std::unique_ptr<RoutingBackend> make_backend(const BackendConfig& config);

}  // namespace selfevo
