// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/chat_provider.hpp"

#include "drug_insights/errors.hpp"
#include "drug_insights/http_client.hpp"
#include "text_util.hpp"

namespace drug_insights {

OpenAiChatProvider::OpenAiChatProvider(LlmProviderConfig config) : config_(std::move(config)) {
    if (config_.endpoint_url.empty()) throw Error("llm endpoint_url is not configured");
    if (config_.temperature < 0) throw Error("llm temperature must be >= 0");
    parse_endpoint(config_.endpoint_url);
}

nlohmann::json OpenAiChatProvider::request_body(const ChatRequest& request, const std::string& model) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", model},
            {"messages", messages},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
}

std::string OpenAiChatProvider::complete(const ChatRequest& request) {
    const auto endpoint = parse_endpoint(config_.endpoint_url);
    const auto body = request_body(request, config_.model_name);
    const auto key = env_secret(kLlmApiKeyEnv);
    return with_retry(config_.retry, [&] {
        auto reply = post_json(endpoint, "/chat/completions", body, key, config_.timeout_seconds);
        try {
            const auto& content = reply.at("choices").at(0).at("message").at("content");
            if (!content.is_string()) throw ProviderError(200, "chat completion content is not a string");
            return content.get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw ProviderError(200, "chat completion response has no choices[0].message.content");
        }
    });
}

std::optional<std::string> first_fenced_passage(std::string_view prompt) {
    auto lines = detail::split_lines(prompt);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i] != kPassageOpen) continue;
        std::string passage;
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
            if (lines[j] == kPassageClose) return passage;
            if (j > i + 1) passage += '\n';
            passage += lines[j];
        }
        return std::nullopt;
    }
    return std::nullopt;
}

std::string EchoChatProvider::complete(const ChatRequest& request) {
    ++calls_;
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
        if (it->role != "user") continue;
        if (auto passage = first_fenced_passage(it->content)) return *passage;
        return it->content;
    }
    return {};
}

std::unique_ptr<ChatProvider> make_chat_provider(const LlmProviderConfig& config) {
    if (config.provider == "remote") return std::make_unique<OpenAiChatProvider>(config);
    if (config.provider == "mock-echo") return std::make_unique<EchoChatProvider>();
    throw Error("unknown llm provider '" + config.provider + "' (expected remote or mock-echo)");
}

}  // namespace drug_insights
