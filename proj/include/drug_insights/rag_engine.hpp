// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drug_insights/chat_provider.hpp"
#include "drug_insights/embedding.hpp"
#include "drug_insights/prompt_registry.hpp"
#include "drug_insights/vector_index.hpp"

namespace drug_insights {

inline constexpr std::string_view kDefaultAbstentionMessage =
    "I could not find this in the provided formulary corpus. Please consult a pharmacist.";

struct Source {
    std::string doc_id;
    int page_start = 1;
    int page_end = 1;
    std::string chunk_id;
    double score = 0.0;
    std::string snippet;
};

struct Answer {
    std::string answer_text;
    bool abstained = false;
    std::vector<Source> sources;
    std::string variant_id;
    /// Requests issued: the variant's n_candidates, or 0 after abstaining.
    int candidates_generated = 0;
    int candidates_succeeded = 0;
    int sentence_count = 0;
    bool limit_violated = false;
    double latency_ms = 0.0;
};

nlohmann::json to_json(const Answer& answer);

struct EngineConfig {
    std::size_t k = 3;
    double threshold = 0.9;
    std::string abstention_message{kDefaultAbstentionMessage};
    double single_temperature = 0.0;
    double compare_temperature = 0.7;
    int max_output_tokens = 512;
    std::size_t snippet_chars = 240;
};

struct QueryOverrides {
    std::optional<std::size_t> k;
    std::optional<double> threshold;
};

struct Selection {
    std::string text;
    std::size_t index = 0;
    /// Empty when there was a single candidate.
    std::vector<double> grounding_scores;
};

/// Anything that can answer a query with a given prompt variant. The eval
/// harness runs against this so engines can be swapped for fixtures.
class AnswerSource {
public:
    virtual ~AnswerSource() = default;
    virtual Answer answer_query(std::string_view query, std::string_view variant_id) = 0;
};

/// Embed -> retrieve -> render -> generate -> select, or abstain when nothing
/// clears the threshold. Holds references only; the caller owns the parts.
class RagEngine : public AnswerSource {
public:
    RagEngine(const Embedder& embedder, const VectorIndex& index, const PromptRegistry& registry,
              ChatProvider& llm, EngineConfig config = {});

    std::vector<RetrievalResult> retrieve_context(std::string_view query,
                                                  const QueryOverrides& overrides = {}) const;

    /// Issues variant.n_candidates requests concurrently. Failed requests are
    /// dropped; throws AllCandidatesFailed when none succeed.
    std::vector<std::string> generate_candidates(std::string_view query,
                                                 std::span<const RetrievalResult> context,
                                                 const PromptVariant& variant) const;

    /// Winner has the highest mean cosine to the context vectors; ties go to
    /// the lowest index. A single candidate is returned without embedding.
    Selection select_best(std::span<const std::string> candidates,
                          std::span<const RetrievalResult> context) const;

    Answer answer_query(std::string_view query, std::string_view variant_id) override {
        return answer_query(query, variant_id, {});
    }
    Answer answer_query(std::string_view query, std::string_view variant_id,
                        const QueryOverrides& overrides) const;

    const EngineConfig& config() const noexcept { return config_; }
    const PromptRegistry& registry() const noexcept { return registry_; }
    const VectorIndex& index() const noexcept { return index_; }

private:
    const Embedder& embedder_;
    const VectorIndex& index_;
    const PromptRegistry& registry_;
    ChatProvider& llm_;
    EngineConfig config_;
};

}  // namespace drug_insights
