#include "selfevo/backend.hpp"

#include <cmath>

#include "selfevo/error.hpp"

namespace selfevo {

std::string to_string(ModelRole role) {
    switch (role) {
        case ModelRole::generator: return "generator";
        case ModelRole::scorer: return "scorer";
        case ModelRole::evaluatee: return "evaluatee";
    }
    return "generator";
}

ModelRole model_role_from_string(const std::string& s) {
    if (s == "generator") return ModelRole::generator;
    if (s == "scorer") return ModelRole::scorer;
    if (s == "evaluatee") return ModelRole::evaluatee;
    throw ConfigError("unknown model role: " + s);
}

bool ModelRef::is_mock() const { return backend_url.rfind("mock:", 0) == 0; }

json to_json(const ModelRef& ref) {
    return json{{"backend_url", ref.backend_url}, {"model_name", ref.model_name}, {"role", to_string(ref.role)}};
}

ModelRef model_ref_from_json(const json& j, ModelRole default_role) {
    if (!j.is_object()) throw SchemaError("model_ref must be an object");
    ModelRef ref;
    ref.backend_url = require_string(j, "backend_url");
    ref.model_name = require_string(j, "model_name");
    ref.role = default_role;
    if (auto it = j.find("role"); it != j.end() && !it->is_null()) {
        ref.role = model_role_from_string(it->get<std::string>());
    }
    if (ref.backend_url.empty()) throw SchemaError("model_ref.backend_url is empty");
    return ref;
}

void GenerationParams::validate() const {
    if (max_tokens < 1) throw PreconditionError("max_tokens must be >= 1");
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
        throw PreconditionError("temperature must be a finite non-negative number");
    }
}

json to_json(const GenerationParams& p) {
    json j{{"temperature", p.temperature}, {"max_tokens", p.max_tokens}, {"stop", p.stop}};
    j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
    return j;
}

GenerationParams generation_params_from_json(const json& j) {
    GenerationParams p;
    p.temperature = j.value("temperature", p.temperature);
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    if (auto it = j.find("seed"); it != j.end() && !it->is_null()) p.seed = it->get<std::int64_t>();
    if (auto it = j.find("stop"); it != j.end() && !it->is_null()) p.stop = it->get<std::vector<std::string>>();
    return p;
}

json to_json(const BackendConfig& c) {
    return json{{"timeout_seconds", c.timeout_seconds},
                {"max_parallel", c.max_parallel},
                {"api_key_env", c.api_key_env},
                {"retry_attempts", c.retry_attempts},
                {"retry_backoff_seconds", c.retry_backoff_seconds},
                {"mock_script", c.mock_script}};
}

BackendConfig backend_config_from_json(const json& j) {
    BackendConfig c;
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_parallel = j.value("max_parallel", c.max_parallel);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.retry_attempts = j.value("retry_attempts", c.retry_attempts);
    c.retry_backoff_seconds = j.value("retry_backoff_seconds", c.retry_backoff_seconds);
    c.mock_script = j.value("mock_script", c.mock_script);
    if (c.max_parallel < 1) throw ConfigError("backend.max_parallel must be >= 1");
    if (c.retry_attempts < 1) throw ConfigError("backend.retry_attempts must be >= 1");
    if (c.timeout_seconds <= 0) throw ConfigError("backend.timeout_seconds must be > 0");
    return c;
}

std::string Backend::generate(const ModelRef& model, const MessageList& messages,
                              const GenerationParams& params) const {
    if (model.role != ModelRole::generator && model.role != ModelRole::evaluatee) {
        throw PreconditionError("generate requires a generator or evaluatee model, got " +
                                to_string(model.role));
    }
    if (messages.empty()) throw PreconditionError("generate requires at least one message");
    params.validate();
    auto text = do_generate(model, messages, params);
    if (trim(text).empty()) {
        throw EmptyCompletionError("empty completion from " + model.model_name);
    }
    return text;
}

ScoredContinuation Backend::score_continuation(const ModelRef& scorer, const std::string& context,
                                               const std::string& continuation) const {
    if (scorer.role != ModelRole::scorer) {
        throw PreconditionError("score_continuation requires a scorer model, got " + to_string(scorer.role));
    }
    if (continuation.empty()) throw PreconditionError("continuation must be non-empty");
    auto scored = do_score(scorer, context, continuation);
    if (scored.token_scores.empty()) {
        throw AlignmentError("backend returned no scored tokens for the continuation");
    }
    for (const auto& t : scored.token_scores) {
        if (!std::isfinite(t.logprob) || t.logprob > 0.0) {
            throw CapabilityError("backend returned an invalid logprob for token '" + t.token_text + "'");
        }
    }
    return scored;
}

RoutingBackend::RoutingBackend(BackendConfig config) : RoutingBackend(config, MockScript{}) {
    if (!config_.mock_script.empty()) {
        mock_ = MockBackend(mock_script_from_json(json::parse(read_file(config_.mock_script))));
    }
}

RoutingBackend::RoutingBackend(BackendConfig config, MockScript script)
    : config_(std::move(config)), mock_(std::move(script)), http_(config_) {}

const Backend& RoutingBackend::pick(const ModelRef& model) const {
    if (model.is_mock()) return mock_;
    return http_;
}

std::string RoutingBackend::do_generate(const ModelRef& model, const MessageList& messages,
                                        const GenerationParams& params) const {
    return pick(model).generate(model, messages, params);
}

ScoredContinuation RoutingBackend::do_score(const ModelRef& scorer, const std::string& context,
                                            const std::string& continuation) const {
    return pick(scorer).score_continuation(scorer, context, continuation);
}

std::unique_ptr<RoutingBackend> make_backend(const BackendConfig& config) {
    return std::make_unique<RoutingBackend>(config);
}

}  // namespace selfevo
