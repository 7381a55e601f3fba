// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/config.hpp"

#include <fstream>

#include "drug_insights/errors.hpp"

namespace drug_insights {

using nlohmann::json;

namespace {

RetryPolicy retry_from_json(const json& j, RetryPolicy policy) {
    if (j.is_null()) return policy;
    policy.max_attempts = j.value("max_attempts", policy.max_attempts);
    policy.backoff_base_ms = j.value("backoff_base_ms", policy.backoff_base_ms);
    if (policy.max_attempts < 1) throw Error("retry.max_attempts must be >= 1");
    if (policy.backoff_base_ms < 0) throw Error("retry.backoff_base_ms must be >= 0");
    return policy;
}

void reject_secrets(const json& j, const char* section) {
    for (const char* key : {"api_key", "apiKey", "key", "token", "secret"}) {
        if (j.contains(key))
            throw Error(std::string("\"") + section + "." + key +
                        "\": secrets are read from environment variables, not the config file");
    }
}

}  // namespace

EmbedderConfig embedder_config_from_json(const json& j) {
    EmbedderConfig c;
    if (j.is_null()) return c;
    reject_secrets(j, "embedder");
    c.provider = j.value("provider", c.provider);
    c.endpoint_url = j.value("endpoint_url", c.endpoint_url);
    c.model_name = j.value("model_name", c.model_name);
    c.dimension = j.value("dimension", c.dimension);
    c.max_batch = j.value("max_batch", c.max_batch);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.retry = retry_from_json(j.value("retry", json()), c.retry);
    if (c.dimension < 1) throw Error("embedder.dimension must be >= 1");
    if (c.max_batch < 1) throw Error("embedder.max_batch must be >= 1");
    return c;
}

LlmProviderConfig llm_config_from_json(const json& j) {
    LlmProviderConfig c;
    if (j.is_null()) return c;
    reject_secrets(j, "llm");
    c.provider = j.value("provider", c.provider);
    c.endpoint_url = j.value("endpoint_url", c.endpoint_url);
    c.model_name = j.value("model_name", c.model_name);
    c.temperature = j.value("temperature", c.temperature);
    c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.retry = retry_from_json(j.value("retry", json()), c.retry);
    if (c.temperature < 0) throw Error("llm.temperature must be >= 0");
    return c;
}

ServiceConfig ServiceConfig::from_json(const json& j) {
    if (!j.is_object()) throw Error("config must be a JSON object");
    ServiceConfig c;
    try {
        if (auto it = j.find("listen"); it != j.end()) {
            c.host = it->value("host", c.host);
            c.port = it->value("port", c.port);
        }
        if (j.contains("index_path")) c.index_path = j["index_path"].get<std::string>();
        if (j.contains("feedback_log")) c.feedback_log = j["feedback_log"].get<std::string>();
        c.embedder = embedder_config_from_json(j.value("embedder", json()));
        c.llm = llm_config_from_json(j.value("llm", json()));
        if (auto it = j.find("retrieval"); it != j.end()) {
            c.engine.k = it->value("k", c.engine.k);
            c.engine.threshold = it->value("threshold", c.engine.threshold);
        }
        if (auto it = j.find("generation"); it != j.end()) {
            c.engine.single_temperature = it->value("single_temperature", c.engine.single_temperature);
            c.engine.compare_temperature = it->value("compare_temperature", c.engine.compare_temperature);
            c.engine.max_output_tokens = it->value("max_output_tokens", c.engine.max_output_tokens);
        }
        c.engine.abstention_message = j.value("abstention_message", c.engine.abstention_message);
        c.default_variant = j.value("default_variant", c.default_variant);
        c.cors_origin = j.value("cors_origin", c.cors_origin);
        c.recent_queries_capacity = j.value("recent_queries_capacity", c.recent_queries_capacity);
        c.prompts = PromptTexts::from_json(j.value("prompts", json()));
    } catch (const json::exception& e) {
        throw Error(std::string("invalid config: ") + e.what());
    }
    if (c.port < 0 || c.port > 65535) throw Error("listen.port must be within 0..65535");
    if (c.engine.k < 1) throw Error("retrieval.k must be >= 1");
    if (!(c.engine.threshold >= 0.0 && c.engine.threshold <= 1.0)) throw Error("retrieval.threshold must be within [0, 1]");
    if (c.recent_queries_capacity < 1) throw Error("recent_queries_capacity must be >= 1");
    PromptRegistry registry(c.prompts);
    registry.variant(c.default_variant);
    return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UnreadableSource("cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw Error("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    auto c = from_json(j);
    // Relative paths in the config are relative to the config file.
    const auto base = path.parent_path();
    if (c.index_path.is_relative()) c.index_path = base / c.index_path;
    if (c.feedback_log.is_relative()) c.feedback_log = base / c.feedback_log;
    return c;
}

}  // namespace drug_insights
