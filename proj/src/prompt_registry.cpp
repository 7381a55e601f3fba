// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/prompt_registry.hpp"

#include "drug_insights/chat_provider.hpp"
#include "drug_insights/errors.hpp"
#include "text_util.hpp"

namespace drug_insights {

std::string_view to_string(SentenceLimit limit) {
    switch (limit) {
        case SentenceLimit::none: return "none";
        case SentenceLimit::two: return "2";
        case SentenceLimit::three: return "3";
    }
    return "none";
}

std::string_view to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::guardrails_only: return "guardrails_only";
        case Strategy::compare4_and_guardrails: return "compare4_and_guardrails";
        case Strategy::compare4_only: return "compare4_only";
    }
    return "guardrails_only";
}

std::optional<int> PromptVariant::max_sentences() const noexcept {
    switch (sentence_limit) {
        case SentenceLimit::two: return 2;
        case SentenceLimit::three: return 3;
        default: return std::nullopt;
    }
}

GuardrailSet GuardrailSet::defaults() {
    return {{
        "Do not speculate: if the context does not state something, do not guess it.",
        "Do not use or cite unverified sources or any knowledge from outside the provided context.",
        "End the answer with a clear disclaimer that it is informational and does not replace the "
        "judgement of a pharmacist or physician.",
        "Answer only from the provided context; if the context does not contain the answer, say that "
        "the information is not available in the formulary.",
    }};
}

PromptTexts PromptTexts::defaults() {
    PromptTexts t;
    t.system_text =
        "You are a drug information assistant for clinicians and pharmacists. Answer the question "
        "using the formulary excerpts provided as context.";
    t.guardrails = GuardrailSet::defaults();
    return t;
}

PromptTexts PromptTexts::from_json(const nlohmann::json& prompts) {
    PromptTexts t = defaults();
    if (prompts.is_null()) return t;
    if (!prompts.is_object()) throw Error("\"prompts\" config must be an object");
    if (auto it = prompts.find("system_text"); it != prompts.end()) t.system_text = it->get<std::string>();
    if (auto it = prompts.find("guardrails"); it != prompts.end()) {
        t.guardrails.clauses = it->get<std::vector<std::string>>();
        if (t.guardrails.clauses.empty()) throw Error("\"prompts.guardrails\" must not be empty");
    }
    if (auto it = prompts.find("variants"); it != prompts.end()) {
        for (const auto& [id, v] : it->items()) {
            if (v.contains("system_text")) t.variant_system_text[id] = v["system_text"].get<std::string>();
        }
    }
    return t;
}

PromptRegistry::PromptRegistry() : PromptRegistry(PromptTexts::defaults()) {}

PromptRegistry::PromptRegistry(PromptTexts texts) : texts_(std::move(texts)) {
    constexpr Strategy strategies[] = {Strategy::guardrails_only, Strategy::compare4_and_guardrails,
                                       Strategy::compare4_only};
    constexpr SentenceLimit limits[] = {SentenceLimit::none, SentenceLimit::two, SentenceLimit::three};
    for (int s = 0; s < 3; ++s) {
        for (int l = 0; l < 3; ++l) {
            PromptVariant v;
            v.variant_id = "prompt_" + std::to_string(s) + static_cast<char>('a' + l);
            v.strategy = strategies[s];
            v.sentence_limit = limits[l];
            v.n_candidates = v.compares() ? kCompareCandidates : 1;
            variants_.push_back(std::move(v));
        }
    }
    for (const auto& [id, text] : texts_.variant_system_text) {
        if (!find(id)) throw UnknownVariant(id);
    }
}

const PromptVariant* PromptRegistry::find(std::string_view variant_id) const {
    for (const auto& v : variants_) {
        if (v.variant_id == variant_id) return &v;
    }
    return nullptr;
}

const PromptVariant& PromptRegistry::variant(std::string_view variant_id) const {
    if (auto v = find(variant_id)) return *v;
    throw UnknownVariant(std::string(variant_id));
}

RenderedPrompt PromptRegistry::render_qa_prompt(const PromptVariant& variant, std::string_view query,
                                                std::span<const RetrievalResult> context) const {
    if (detail::trim(query).empty()) throw EmptyQuery();
    RenderedPrompt out;

    auto override_it = texts_.variant_system_text.find(variant.variant_id);
    out.system = override_it != texts_.variant_system_text.end() ? override_it->second : texts_.system_text;
    if (auto n = variant.max_sentences()) {
        out.system += "\n\nAnswer in at most " + std::to_string(*n) + " sentences.";
    }
    if (variant.has_guardrails()) {
        out.system += "\n\nGuardrails:";
        for (const auto& clause : texts_.guardrails.clauses) {
            out.system += "\n- ";
            out.system += clause;
        }
    }

    if (context.empty()) {
        out.user = "Context: (none)\n\n";
    } else {
        out.user = "Context:\n\n";
        for (std::size_t i = 0; i < context.size(); ++i) {
            const auto& p = context[i].payload;
            out.user += "[SOURCE " + std::to_string(i + 1) + ": " + p.value("doc_id", std::string("?")) +
                        " p." + std::to_string(p.value("page_start", 1)) + "]\n";
            out.user += kPassageOpen;
            out.user += '\n';
            out.user += p.value("text", std::string());
            out.user += '\n';
            out.user += kPassageClose;
            out.user += "\n\n";
        }
    }
    out.user += "Question: ";
    out.user += query;
    return out;
}

int count_sentences(std::string_view text) {
    int count = 0;
    bool in_segment = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (!detail::is_space(c)) in_segment = true;
        const bool terminal = c == '.' || c == '!' || c == '?';
        if (terminal && in_segment && (i + 1 == text.size() || detail::is_space(text[i + 1]))) {
            ++count;
            in_segment = false;
        }
    }
    if (in_segment) ++count;
    return count;
}

}  // namespace drug_insights
