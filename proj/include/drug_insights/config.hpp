// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "drug_insights/chat_provider.hpp"
#include "drug_insights/embedding.hpp"
#include "drug_insights/prompt_registry.hpp"
#include "drug_insights/rag_engine.hpp"

namespace drug_insights {

/// Settings shared by `serve` and the one-shot CLI commands, read from a JSON
/// file. Secrets never live here; API keys come from the environment.
struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path index_path = "index.divx";
    std::filesystem::path feedback_log = "feedback.jsonl";
    EmbedderConfig embedder;
    LlmProviderConfig llm;
    EngineConfig engine;
    std::string default_variant = "prompt_0a";
    std::string cors_origin;
    std::size_t recent_queries_capacity = 10000;
    PromptTexts prompts = PromptTexts::defaults();

    static ServiceConfig from_json(const nlohmann::json& j);
    static ServiceConfig load(const std::filesystem::path& path);
};

EmbedderConfig embedder_config_from_json(const nlohmann::json& j);
LlmProviderConfig llm_config_from_json(const nlohmann::json& j);

}  // namespace drug_insights
