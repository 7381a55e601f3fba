// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drug_insights/vector_index.hpp"

namespace drug_insights {

enum class SentenceLimit { none, two, three };
enum class Strategy { guardrails_only, compare4_and_guardrails, compare4_only };

std::string_view to_string(SentenceLimit limit);
std::string_view to_string(Strategy strategy);

/// One cell of the 3x3 grid. Id "prompt_<s><l>": s picks the strategy
/// (0 guardrails, 1 compare-4 + guardrails, 2 compare-4), l the sentence
/// limit (a none, b 2, c 3).
struct PromptVariant {
    std::string variant_id;
    SentenceLimit sentence_limit = SentenceLimit::none;
    Strategy strategy = Strategy::guardrails_only;
    int n_candidates = 1;

    bool has_guardrails() const noexcept { return strategy != Strategy::compare4_only; }
    bool compares() const noexcept { return strategy != Strategy::guardrails_only; }
    std::optional<int> max_sentences() const noexcept;
};

struct GuardrailSet {
    std::vector<std::string> clauses;

    static GuardrailSet defaults();
};

/// Overridable prompt text. Variant-specific system text replaces the base
/// text for that variant only.
struct PromptTexts {
    std::string system_text;
    GuardrailSet guardrails;
    std::map<std::string, std::string, std::less<>> variant_system_text;

    static PromptTexts defaults();
    /// Reads the "prompts" config object: system_text, guardrails (array of
    /// strings), variants.<id>.system_text. Missing keys keep the defaults.
    static PromptTexts from_json(const nlohmann::json& prompts);
};

struct RenderedPrompt {
    std::string system;
    std::string user;
};

inline constexpr int kCompareCandidates = 4;

class PromptRegistry {
public:
    PromptRegistry();
    explicit PromptRegistry(PromptTexts texts);

    std::span<const PromptVariant> list_variants() const noexcept { return variants_; }
    const PromptVariant* find(std::string_view variant_id) const;
    /// Throws UnknownVariant.
    const PromptVariant& variant(std::string_view variant_id) const;

    const PromptTexts& texts() const noexcept { return texts_; }

    /// Zero-shot QA prompt: context passages fenced and tagged
    /// [SOURCE i: doc_id p.N] in the user message, sentence limit and
    /// guardrail clauses appended to the system message. Throws EmptyQuery.
    RenderedPrompt render_qa_prompt(const PromptVariant& variant, std::string_view query,
                                    std::span<const RetrievalResult> context) const;

private:
    PromptTexts texts_;
    std::vector<PromptVariant> variants_;
};

/// Counts segments ending in '.', '!' or '?' followed by whitespace or end of
/// text; trailing text without a terminator counts as one more.
int count_sentences(std::string_view text);

}  // namespace drug_insights
