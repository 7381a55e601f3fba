// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "drug_insights/embedding.hpp"
#include "drug_insights/rag_engine.hpp"

namespace drug_insights {

enum class Category { drug_effects, dosage, side_effects, special_populations, out_of_corpus };

std::string_view to_string(Category category);
std::optional<Category> parse_category(std::string_view name);

struct EvalItem {
    std::string item_id;
    std::string query;
    std::string reference_answer;  // empty iff out_of_corpus
    Category category = Category::dosage;
};

/// JSONL with item_id, query, reference_answer, category per line.
std::vector<EvalItem> load_eval_dataset(const std::filesystem::path& path);

/// Cosine of the two sentence embeddings; symmetric. Throws EmptyText.
double score_pair(std::string_view system_answer, std::string_view reference_answer,
                  const Embedder& sentence_embedder);

struct ItemScore {
    std::string item_id;
    std::string variant_id;
    Category category = Category::dosage;
    /// Similarity x 100. Abstaining on an answerable item scores 0; an engine
    /// error leaves it empty and keeps the item out of the means.
    std::optional<double> score_pct;
    bool abstained = false;
    bool failed = false;
    std::string failure;
    /// Out-of-corpus items only: abstained as expected.
    std::optional<bool> abstention_correct;
};

struct EvalReport {
    std::string scorer_id;
    std::vector<std::string> variant_ids;
    std::map<std::string, double> per_variant;
    std::map<std::pair<std::string, Category>, double> per_variant_category;
    /// Over every (variant, out_of_corpus item) pair; empty when there are none.
    std::optional<double> abstention_accuracy;
    std::vector<ItemScore> item_scores;

    nlohmann::json to_json() const;
    /// Per-variant means, highest first, two decimals.
    std::string to_table() const;
};

struct EvalOptions {
    std::size_t parallelism = 1;
};

EvalReport run_eval(std::span<const EvalItem> items, std::span<const std::string> variant_ids,
                    AnswerSource& engine, const Embedder& sentence_embedder,
                    const EvalOptions& options = {});

struct SurveyResponse {
    std::string respondent_id;
    int q_relevance = 0;
    int q_accuracy = 0;
    int q_construction = 0;
    int q_sources = 0;
};

struct FeedbackSurvey {
    std::vector<SurveyResponse> responses;
};

/// Per-question means, rounded half-up to two decimals.
struct FeedbackSummary {
    double relevance = 0.0;
    double accuracy = 0.0;
    double construction = 0.0;
    double sources = 0.0;
    std::size_t respondents = 0;

    std::string to_table() const;
    nlohmann::json to_json() const;
};

FeedbackSummary aggregate_feedback(const FeedbackSurvey& survey);

/// Collects survey rows from a feedback log; like/dislike lines are skipped.
FeedbackSurvey read_survey_from_log(const std::filesystem::path& path);

/// Half-up rounding of numerator/denominator to two decimals, exact for integers.
double round_half_up_2(long long numerator, long long denominator);

}  // namespace drug_insights
