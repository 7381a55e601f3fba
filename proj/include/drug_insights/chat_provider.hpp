// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drug_insights/retry.hpp"

namespace drug_insights {

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 512;
};

/// A chat-completions backend. Implementations must be safe to call from
/// several threads at once.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
    virtual std::string id() const = 0;
};

struct LlmProviderConfig {
    std::string provider = "remote";  // remote | mock-echo
    std::string endpoint_url;
    std::string model_name;
    double temperature = 0.0;
    int max_output_tokens = 512;
    RetryPolicy retry;
    double timeout_seconds = 60.0;
};

inline constexpr const char* kLlmApiKeyEnv = "DRUG_INSIGHTS_LLM_API_KEY";

/// OpenAI-compatible POST {endpoint}/chat/completions client.
class OpenAiChatProvider : public ChatProvider {
public:
    explicit OpenAiChatProvider(LlmProviderConfig config);
    std::string complete(const ChatRequest& request) override;
    std::string id() const override { return "remote/" + config_.model_name; }

    static nlohmann::json request_body(const ChatRequest& request, const std::string& model);

private:
    LlmProviderConfig config_;
};

/// Lines that fence verbatim passages (chunk or context text) inside prompts.
inline constexpr std::string_view kPassageOpen = "<<<";
inline constexpr std::string_view kPassageClose = ">>>";

/// Text of the first fenced passage in `prompt`, or nullopt when there is none.
std::optional<std::string> first_fenced_passage(std::string_view prompt);

/// Offline provider that replies with the first fenced passage of the last
/// user message (the whole message when nothing is fenced). Counts calls.
class EchoChatProvider : public ChatProvider {
public:
    std::string complete(const ChatRequest& request) override;
    std::string id() const override { return "mock-echo"; }
    std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::atomic<std::size_t> calls_{0};
};

std::unique_ptr<ChatProvider> make_chat_provider(const LlmProviderConfig& config);

}  // namespace drug_insights
