// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/rag_engine.hpp"

#include <chrono>
#include <future>
#include <limits>

#include <spdlog/spdlog.h>

#include "drug_insights/errors.hpp"
#include "text_util.hpp"

namespace drug_insights {

nlohmann::json to_json(const Answer& a) {
    nlohmann::json sources = nlohmann::json::array();
    for (const auto& s : a.sources) {
        sources.push_back({{"doc_id", s.doc_id},
                           {"page_start", s.page_start},
                           {"page_end", s.page_end},
                           {"chunk_id", s.chunk_id},
                           {"score", s.score},
                           {"snippet", s.snippet}});
    }
    return {{"answer_text", a.answer_text},
            {"abstained", a.abstained},
            {"sources", sources},
            {"variant_id", a.variant_id},
            {"candidates_generated", a.candidates_generated},
            {"candidates_succeeded", a.candidates_succeeded},
            {"sentence_count", a.sentence_count},
            {"limit_violated", a.limit_violated},
            {"latency_ms", a.latency_ms}};
}

RagEngine::RagEngine(const Embedder& embedder, const VectorIndex& index, const PromptRegistry& registry,
                     ChatProvider& llm, EngineConfig config)
    : embedder_(embedder), index_(index), registry_(registry), llm_(llm), config_(std::move(config)) {
    if (embedder_.dimension() != index_.dimension())
        throw DimensionMismatch(index_.dimension(), embedder_.dimension());
    if (config_.k == 0) throw Error("retrieval k must be >= 1");
    if (!(config_.threshold >= 0.0 && config_.threshold <= 1.0)) throw Error("threshold must be within [0, 1]");
    if (config_.single_temperature < 0 || config_.compare_temperature < 0)
        throw Error("temperature must be >= 0");
}

std::vector<RetrievalResult> RagEngine::retrieve_context(std::string_view query,
                                                         const QueryOverrides& overrides) const {
    if (detail::trim(query).empty()) throw EmptyQuery();
    const auto q = embedder_.embed(query);
    return index_.search(q.values, overrides.k.value_or(config_.k), overrides.threshold.value_or(config_.threshold));
}

std::vector<std::string> RagEngine::generate_candidates(std::string_view query,
                                                        std::span<const RetrievalResult> context,
                                                        const PromptVariant& variant) const {
    if (context.empty()) throw Error("generate_candidates needs at least one context chunk");
    const auto prompt = registry_.render_qa_prompt(variant, query, context);
    ChatRequest request;
    request.messages = {{"system", prompt.system}, {"user", prompt.user}};
    request.temperature = variant.compares() ? config_.compare_temperature : config_.single_temperature;
    request.max_tokens = config_.max_output_tokens;

    std::vector<std::future<std::string>> pending;
    for (int i = 0; i < variant.n_candidates; ++i) {
        pending.push_back(std::async(std::launch::async, [this, &request] { return llm_.complete(request); }));
    }
    std::vector<std::string> candidates;
    std::string last_error;
    for (auto& f : pending) {
        try {
            candidates.push_back(f.get());
        } catch (const std::exception& e) {
            spdlog::warn("candidate generation failed: {}", e.what());
            last_error = e.what();
        }
    }
    if (candidates.empty()) throw AllCandidatesFailed(last_error);
    return candidates;
}

Selection RagEngine::select_best(std::span<const std::string> candidates,
                                 std::span<const RetrievalResult> context) const {
    if (candidates.empty()) throw Error("select_best needs at least one candidate");
    if (candidates.size() == 1) return {candidates.front(), 0, {}};
    if (context.empty()) throw Error("select_best needs context to score against");

    std::vector<std::vector<double>> context_vectors;
    for (const auto& c : context) {
        if (!c.vector.empty()) {
            context_vectors.emplace_back(c.vector.begin(), c.vector.end());
        } else if (auto e = index_.get(c.entry_id)) {
            context_vectors.emplace_back(e->vector.begin(), e->vector.end());
        } else {
            context_vectors.push_back(embedder_.embed(c.payload.value("text", std::string())).values);
        }
    }

    std::vector<std::string> non_blank;
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!is_blank(candidates[i])) {
            non_blank.push_back(candidates[i]);
            positions.push_back(i);
        }
    }
    std::vector<double> scores(candidates.size(), -std::numeric_limits<double>::infinity());
    const auto embedded = embedder_.embed_batch(non_blank);
    for (std::size_t j = 0; j < embedded.size(); ++j) {
        double sum = 0.0;
        for (const auto& cv : context_vectors) sum += cosine(embedded[j].values, cv);
        scores[positions[j]] = sum / static_cast<double>(context_vectors.size());
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return {candidates[best], best, std::move(scores)};
}

namespace {

std::string snippet_of(const std::string& text, std::size_t max_chars) {
    const auto offsets = detail::code_point_offsets(text);
    if (offsets.size() - 1 <= max_chars) return text;
    return text.substr(0, offsets[max_chars]) + "...";
}

}  // namespace

Answer RagEngine::answer_query(std::string_view query, std::string_view variant_id,
                               const QueryOverrides& overrides) const {
    const auto started = std::chrono::steady_clock::now();
    const PromptVariant& variant = registry_.variant(variant_id);
    if (detail::trim(query).empty()) throw EmptyQuery();

    Answer answer;
    answer.variant_id = variant.variant_id;
    const auto context = retrieve_context(query, overrides);
    if (context.empty()) {
        answer.abstained = true;
        answer.answer_text = config_.abstention_message;
        answer.sentence_count = count_sentences(answer.answer_text);
    } else {
        const auto candidates = generate_candidates(query, context, variant);
        const auto selection = select_best(candidates, context);
        answer.answer_text = selection.text;
        answer.candidates_generated = variant.n_candidates;
        answer.candidates_succeeded = static_cast<int>(candidates.size());
        answer.sentence_count = count_sentences(answer.answer_text);
        if (auto limit = variant.max_sentences()) answer.limit_violated = answer.sentence_count > *limit;
        for (const auto& c : context) {
            Source s;
            s.doc_id = c.payload.value("doc_id", std::string());
            s.page_start = c.payload.value("page_start", 1);
            s.page_end = c.payload.value("page_end", s.page_start);
            s.chunk_id = c.payload.value("chunk_id", c.entry_id);
            s.score = c.score;
            s.snippet = snippet_of(c.payload.value("text", std::string()), config_.snippet_chars);
            answer.sources.push_back(std::move(s));
        }
    }
    answer.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return answer;
}

}  // namespace drug_insights
