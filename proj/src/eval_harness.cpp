// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "drug_insights/errors.hpp"
#include "text_util.hpp"

namespace drug_insights {

using nlohmann::json;

std::string_view to_string(Category category) {
    switch (category) {
        case Category::drug_effects: return "drug_effects";
        case Category::dosage: return "dosage";
        case Category::side_effects: return "side_effects";
        case Category::special_populations: return "special_populations";
        case Category::out_of_corpus: return "out_of_corpus";
    }
    return "unknown";
}

std::optional<Category> parse_category(std::string_view name) {
    for (auto c : {Category::drug_effects, Category::dosage, Category::side_effects, Category::special_populations,
                   Category::out_of_corpus}) {
        if (to_string(c) == name) return c;
    }
    return std::nullopt;
}

std::vector<EvalItem> load_eval_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UnreadableSource("cannot open '" + path.string() + "'");
    std::vector<EvalItem> items;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            throw MalformedItem(line_no, "invalid JSON");
        }
        if (!j.is_object()) throw MalformedItem(line_no, "not a JSON object");
        for (const char* key : {"item_id", "query", "reference_answer", "category"}) {
            if (!j.contains(key) || !j[key].is_string())
                throw MalformedItem(line_no, std::string("\"") + key + "\" must be a string");
        }
        EvalItem item;
        item.item_id = j["item_id"].get<std::string>();
        item.query = j["query"].get<std::string>();
        item.reference_answer = j["reference_answer"].get<std::string>();
        const auto category_name = j["category"].get<std::string>();
        auto category = parse_category(category_name);
        if (!category) throw InvalidCategory(line_no, category_name);
        item.category = *category;

        if (detail::trim(item.item_id).empty()) throw MalformedItem(line_no, "empty item_id");
        if (!ids.insert(item.item_id).second) throw MalformedItem(line_no, "duplicate item_id '" + item.item_id + "'");
        if (detail::trim(item.query).empty()) throw MalformedItem(line_no, "empty query");
        const bool no_reference = detail::trim(item.reference_answer).empty();
        if (item.category == Category::out_of_corpus && !no_reference)
            throw MalformedItem(line_no, "out_of_corpus items must not carry a reference answer");
        if (item.category != Category::out_of_corpus && no_reference)
            throw MalformedItem(line_no, "reference_answer is empty for an answerable item");
        items.push_back(std::move(item));
    }
    return items;
}

double score_pair(std::string_view system_answer, std::string_view reference_answer,
                  const Embedder& sentence_embedder) {
    if (is_blank(system_answer)) throw EmptyText(0);
    if (is_blank(reference_answer)) throw EmptyText(1);
    const std::vector<std::string> texts{std::string(system_answer), std::string(reference_answer)};
    const auto v = sentence_embedder.embed_batch(texts);
    return cosine(v[0].values, v[1].values);
}

namespace {

ItemScore evaluate(const EvalItem& item, const std::string& variant, AnswerSource& engine,
                   const Embedder& embedder) {
    ItemScore s;
    s.item_id = item.item_id;
    s.variant_id = variant;
    s.category = item.category;
    Answer answer;
    try {
        answer = engine.answer_query(item.query, variant);
    } catch (const std::exception& e) {
        s.failed = true;
        s.failure = e.what();
        if (item.category == Category::out_of_corpus) s.abstention_correct = false;
        return s;
    }
    s.abstained = answer.abstained;
    if (item.category == Category::out_of_corpus) {
        s.abstention_correct = answer.abstained;
        return s;
    }
    if (answer.abstained) {
        s.failed = true;
        s.failure = "abstained on an answerable item";
        s.score_pct = 0.0;
        return s;
    }
    try {
        s.score_pct = 100.0 * score_pair(answer.answer_text, item.reference_answer, embedder);
    } catch (const std::exception& e) {
        s.failed = true;
        s.failure = e.what();
    }
    return s;
}

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

EvalReport run_eval(std::span<const EvalItem> items, std::span<const std::string> variant_ids,
                    AnswerSource& engine, const Embedder& sentence_embedder, const EvalOptions& options) {
    EvalReport report;
    report.scorer_id = sentence_embedder.id();
    report.variant_ids.assign(variant_ids.begin(), variant_ids.end());

    const std::size_t total = variant_ids.size() * items.size();
    report.item_scores.resize(total);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < total; t = next++) {
            const auto& variant = variant_ids[t / items.size()];
            const auto& item = items[t % items.size()];
            report.item_scores[t] = evaluate(item, variant, engine, sentence_embedder);
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(options.parallelism, 1, std::max<std::size_t>(1, total));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    }

    std::map<std::string, std::pair<double, std::size_t>> by_variant;
    std::map<std::pair<std::string, Category>, std::pair<double, std::size_t>> by_cell;
    std::size_t probes = 0;
    std::size_t correct = 0;
    for (const auto& s : report.item_scores) {
        if (s.abstention_correct) {
            ++probes;
            if (*s.abstention_correct) ++correct;
        }
        if (!s.score_pct) continue;
        auto& v = by_variant[s.variant_id];
        v.first += *s.score_pct;
        ++v.second;
        auto& c = by_cell[{s.variant_id, s.category}];
        c.first += *s.score_pct;
        ++c.second;
    }
    for (const auto& [id, acc] : by_variant) report.per_variant[id] = acc.first / static_cast<double>(acc.second);
    for (const auto& [key, acc] : by_cell) report.per_variant_category[key] = acc.first / static_cast<double>(acc.second);
    if (probes > 0) report.abstention_accuracy = static_cast<double>(correct) / static_cast<double>(probes);
    return report;
}

json EvalReport::to_json() const {
    json per_cat = json::object();
    for (const auto& [key, mean] : per_variant_category) per_cat[key.first][std::string(to_string(key.second))] = mean;
    json rows = json::array();
    for (const auto& s : item_scores) {
        json row = {{"item_id", s.item_id},
                    {"variant_id", s.variant_id},
                    {"category", to_string(s.category)},
                    {"score_pct", s.score_pct ? json(*s.score_pct) : json(nullptr)},
                    {"abstained", s.abstained},
                    {"failed", s.failed}};
        if (!s.failure.empty()) row["failure"] = s.failure;
        if (s.abstention_correct) row["abstention_correct"] = *s.abstention_correct;
        rows.push_back(std::move(row));
    }
    return {{"scorer_id", scorer_id},
            {"variant_ids", variant_ids},
            {"per_variant", per_variant},
            {"per_variant_category", per_cat},
            {"abstention_accuracy", abstention_accuracy ? json(*abstention_accuracy) : json(nullptr)},
            {"item_scores", rows},
            {"notes",
             "Similarity means are cosine x 100 over answerable items only; out_of_corpus items count "
             "toward abstention_accuracy. Abstaining on an answerable item scores 0; engine errors are "
             "excluded from the means."}};
}

std::string EvalReport::to_table() const {
    std::vector<std::pair<std::string, double>> rows(per_variant.begin(), per_variant.end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::ostringstream out;
    out << "Mean similarity to reference answers (%), scorer " << scorer_id << "\n";
    out << "variant     mean\n";
    for (const auto& [id, mean] : rows) {
        out << id << std::string(id.size() < 12 ? 12 - id.size() : 1, ' ') << fixed2(mean) << "\n";
    }
    out << "abstention accuracy: "
        << (abstention_accuracy ? fixed2(*abstention_accuracy * 100.0) + "%" : std::string("n/a")) << "\n";
    return out.str();
}

double round_half_up_2(long long numerator, long long denominator) {
    if (denominator <= 0) throw Error("denominator must be positive");
    if (numerator < 0) throw Error("numerator must be non-negative");
    const long long hundredths = (200 * numerator + denominator) / (2 * denominator);
    return static_cast<double>(hundredths) / 100.0;
}

FeedbackSummary aggregate_feedback(const FeedbackSurvey& survey) {
    if (survey.responses.empty()) throw EmptySurvey();
    long long relevance = 0;
    long long accuracy = 0;
    long long construction = 0;
    long long sources = 0;
    for (const auto& r : survey.responses) {
        auto check = [&](int v, const char* question) {
            if (v < 1 || v > 5) throw OutOfRangeScore(r.respondent_id, question, v);
            return v;
        };
        relevance += check(r.q_relevance, "q_relevance");
        accuracy += check(r.q_accuracy, "q_accuracy");
        construction += check(r.q_construction, "q_construction");
        sources += check(r.q_sources, "q_sources");
    }
    const auto n = static_cast<long long>(survey.responses.size());
    return {round_half_up_2(relevance, n), round_half_up_2(accuracy, n), round_half_up_2(construction, n),
            round_half_up_2(sources, n), survey.responses.size()};
}

std::string FeedbackSummary::to_table() const {
    std::ostringstream out;
    out << "Evaluation question                      Average score (/5)\n";
    out << "Answer is relevant to the question       " << fixed2(relevance) << "\n";
    out << "Answer is accurate                       " << fixed2(accuracy) << "\n";
    out << "Answer is usefully constructed           " << fixed2(construction) << "\n";
    out << "Cited source documents are relevant      " << fixed2(sources) << "\n";
    out << "(" << respondents << " responses)\n";
    return out.str();
}

json FeedbackSummary::to_json() const {
    return {{"q_relevance", relevance},
            {"q_accuracy", accuracy},
            {"q_construction", construction},
            {"q_sources", sources},
            {"respondents", respondents}};
}

FeedbackSurvey read_survey_from_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UnreadableSource("cannot open '" + path.string() + "'");
    FeedbackSurvey survey;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            throw MalformedItem(line_no, "feedback log line is not valid JSON");
        }
        if (!j.contains("survey") || !j["survey"].is_object()) continue;
        const auto& s = j["survey"];
        SurveyResponse r;
        r.respondent_id = s.value("respondent_id", j.value("event_id", std::to_string(line_no)));
        try {
            r.q_relevance = s.at("q_relevance").get<int>();
            r.q_accuracy = s.at("q_accuracy").get<int>();
            r.q_construction = s.at("q_construction").get<int>();
            r.q_sources = s.at("q_sources").get<int>();
        } catch (const json::exception&) {
            throw MalformedItem(line_no, "survey row needs integer q_relevance, q_accuracy, q_construction, q_sources");
        }
        survey.responses.push_back(std::move(r));
    }
    return survey;
}

}  // namespace drug_insights
