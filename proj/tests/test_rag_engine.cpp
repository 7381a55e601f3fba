// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "drug_insights/errors.hpp"
#include "drug_insights/rag_engine.hpp"
#include "support/test_support.hpp"

using namespace drug_insights;
using di_test::FunctionChatProvider;
using di_test::TempDir;

namespace {

const std::vector<std::string> kCandidates{
    "Store the tablets in a cool dry place.",
    "Adults: 500 mg orally every 8 hours for 5 to 7 days.",
    "Adults take 500 mg every 8 hours.",
    "The adult dose of amoxicillin is 500 mg orally every 8 hours.",
};

std::string formulary_text(const std::string& name) {
    auto text = di_test::read_file(di_test::mini_formulary_dir() / (name + ".txt"));
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
    return text;
}

// Context chunk that is not in the index, so select_best embeds its text.
RetrievalResult loose_context(const std::string& name) {
    RetrievalResult r;
    r.entry_id = "loose:" + name;
    r.payload = {{"doc_id", name}, {"page_start", 1}, {"page_end", 1}, {"text", formulary_text(name)}};
    return r;
}

class RagEngineTest : public ::testing::Test {
protected:
    void SetUp() override { index_ = std::make_unique<VectorIndex>(di_test::build_mini_index(dir_.path())); }

    RagEngine engine(ChatProvider& llm, double threshold = 0.2) {
        EngineConfig cfg;
        cfg.threshold = threshold;
        return RagEngine(embedder_, *index_, registry_, llm, cfg);
    }

    TempDir dir_;
    FnvTrigramEmbedder embedder_{1536};
    PromptRegistry registry_;
    std::unique_ptr<VectorIndex> index_;
};

}  // namespace

TEST_F(RagEngineTest, RetrievesAtMostKAboveThreshold) {
    EchoChatProvider echo;
    auto e = engine(echo, 0.0);
    auto r = e.retrieve_context("What is the adult dosage of amoxicillin?");
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0].payload["doc_id"], "amoxicillin");
    EXPECT_NEAR(r[0].score, 0.2661, 1e-4);
    EXPECT_NEAR(r[1].score, 0.1508, 1e-4);  // artemether_lumefantrine
    EXPECT_NEAR(r[2].score, 0.1395, 1e-4);  // metformin
    EXPECT_EQ(e.retrieve_context("What is the adult dosage of amoxicillin?", {1, 0.0}).size(), 1u);
    EXPECT_EQ(e.retrieve_context("What is the adult dosage of amoxicillin?", {std::nullopt, 0.2}).size(), 1u);
}

TEST_F(RagEngineTest, IndexedRecordRetrievesItselfFirst) {
    EchoChatProvider echo;
    auto e = engine(echo, 0.0);
    for (const auto& name : {"amoxicillin", "metformin", "artemether_lumefantrine"}) {
        auto r = e.retrieve_context(formulary_text(name));
        ASSERT_FALSE(r.empty());
        EXPECT_EQ(r[0].payload["doc_id"], name);
        EXPECT_NEAR(r[0].score, 1.0, 1e-6);
    }
}

TEST_F(RagEngineTest, InCorpusQueryIsAnsweredAndCited) {
    EchoChatProvider echo;
    auto e = engine(echo);
    auto a = e.answer_query("What is the adult dosage of amoxicillin?", "prompt_0a");
    EXPECT_FALSE(a.abstained);
    EXPECT_NE(a.answer_text.find("500 mg orally every 8 hours"), std::string::npos);
    ASSERT_EQ(a.sources.size(), 1u);
    EXPECT_EQ(a.sources[0].doc_id, "amoxicillin");
    EXPECT_EQ(a.sources[0].page_start, 1);
    EXPECT_EQ(a.sources[0].chunk_id, "amoxicillin#0");
    EXPECT_EQ(a.candidates_generated, 1);
    EXPECT_EQ(a.variant_id, "prompt_0a");
    EXPECT_EQ(echo.calls(), 1u);
    EXPECT_GE(a.latency_ms, 0.0);
}

TEST_F(RagEngineTest, OutOfCorpusQueryAbstainsWithoutCallingTheModel) {
    EchoChatProvider echo;
    auto e = engine(echo);
    for (const auto& v : registry_.list_variants()) {
        auto a = e.answer_query("How much does a bus ticket from Lagos to Abuja cost?", v.variant_id);
        EXPECT_TRUE(a.abstained);
        EXPECT_TRUE(a.sources.empty());
        EXPECT_EQ(a.answer_text, kDefaultAbstentionMessage);
        EXPECT_EQ(a.candidates_generated, 0);
        EXPECT_FALSE(a.limit_violated);
    }
    EXPECT_EQ(echo.calls(), 0u);
}

TEST_F(RagEngineTest, AbstentionMessageIsConfigurable) {
    EchoChatProvider echo;
    EngineConfig cfg;
    cfg.abstention_message = "Not in the formulary.";
    RagEngine e(embedder_, *index_, registry_, echo, cfg);
    EXPECT_EQ(e.answer_query("bus ticket prices", "prompt_1c").answer_text, "Not in the formulary.");
}

TEST_F(RagEngineTest, RequestCountsAndTemperaturesFollowTheVariant) {
    FunctionChatProvider single([](const ChatRequest&, std::size_t) { return std::string("Take 500 mg."); });
    engine(single).answer_query("What is the adult dosage of amoxicillin?", "prompt_0a");
    ASSERT_EQ(single.calls(), 1u);
    EXPECT_EQ(single.requests()[0].temperature, 0.0);
    ASSERT_EQ(single.requests()[0].messages.size(), 2u);
    EXPECT_EQ(single.requests()[0].messages[0].role, "system");

    FunctionChatProvider multi([](const ChatRequest&, std::size_t) { return std::string("Take 500 mg."); });
    auto a = engine(multi).answer_query("What is the adult dosage of amoxicillin?", "prompt_1a");
    EXPECT_EQ(multi.calls(), 4u);
    EXPECT_EQ(a.candidates_generated, 4);
    EXPECT_EQ(a.candidates_succeeded, 4);
    for (const auto& r : multi.requests()) EXPECT_EQ(r.temperature, 0.7);
}

TEST_F(RagEngineTest, FailedCandidatesAreDropped) {
    FunctionChatProvider flaky([](const ChatRequest&, std::size_t call) -> std::string {
        if (call == 0) throw ProviderError(503, "unavailable");
        return "Adults take 500 mg every 8 hours.";
    });
    auto e = engine(flaky);
    const auto ctx = e.retrieve_context("What is the adult dosage of amoxicillin?");
    EXPECT_EQ(e.generate_candidates("What is the adult dosage of amoxicillin?", ctx, registry_.variant("prompt_2b")).size(),
              3u);
    auto a = e.answer_query("What is the adult dosage of amoxicillin?", "prompt_2b");
    EXPECT_EQ(a.candidates_generated, 4);
    EXPECT_EQ(a.candidates_succeeded, 4);  // only call 0 ever fails

    FunctionChatProvider dead([](const ChatRequest&, std::size_t) -> std::string {
        throw ProviderError(503, "unavailable");
    });
    auto d = engine(dead);
    EXPECT_THROW(d.answer_query("What is the adult dosage of amoxicillin?", "prompt_1a"), AllCandidatesFailed);
    EXPECT_THROW(d.answer_query("What is the adult dosage of amoxicillin?", "prompt_0a"), AllCandidatesFailed);
}

TEST_F(RagEngineTest, SelectBestMatchesFrozenGroundingScores) {
    EchoChatProvider echo;
    auto e = engine(echo);
    const std::vector<RetrievalResult> two{loose_context("amoxicillin"), loose_context("metformin")};
    auto s = e.select_best(kCandidates, two);
    EXPECT_EQ(s.index, 1u);
    EXPECT_EQ(s.text, kCandidates[1]);
    const std::vector<double> expected{0.08790164406191725, 0.3409932737036283, 0.2190984805777974,
                                       0.3385385500549542};
    ASSERT_EQ(s.grounding_scores.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s.grounding_scores[i], expected[i], 1e-12);

    const std::vector<RetrievalResult> one{loose_context("amoxicillin")};
    EXPECT_EQ(e.select_best(kCandidates, one).index, 3u);
}

TEST_F(RagEngineTest, SelectBestTiesGoToLowestIndex) {
    EchoChatProvider echo;
    auto e = engine(echo);
    const std::vector<RetrievalResult> ctx{loose_context("amoxicillin")};
    const std::vector<std::string> same{"Adults take 500 mg.", "Store dry.", "Adults take 500 mg.", "Adults take 500 mg."};
    EXPECT_EQ(e.select_best(same, ctx).index, 0u);
    const std::vector<std::string> later{"Store dry.", "Adults take 500 mg.", "Adults take 500 mg."};
    EXPECT_EQ(e.select_best(later, ctx).index, 1u);
    const std::vector<std::string> blank{"  ", "Store dry."};
    EXPECT_EQ(e.select_best(blank, ctx).index, 1u);
}

TEST_F(RagEngineTest, SingleCandidateIsReturnedUnscored) {
    EchoChatProvider echo;
    auto e = engine(echo);
    const std::vector<std::string> only{"anything"};
    auto s = e.select_best(only, {});
    EXPECT_EQ(s.text, "anything");
    EXPECT_TRUE(s.grounding_scores.empty());
    EXPECT_THROW(e.select_best({}, {}), Error);
}

TEST_F(RagEngineTest, SentenceLimitViolationIsFlaggedNotTruncated) {
    FunctionChatProvider wordy(
        [](const ChatRequest&, std::size_t) { return std::string("One. Two. Three sentences here."); });
    auto e = engine(wordy);
    auto b = e.answer_query("What is the adult dosage of amoxicillin?", "prompt_0b");
    EXPECT_EQ(b.sentence_count, 3);
    EXPECT_TRUE(b.limit_violated);
    EXPECT_EQ(b.answer_text, "One. Two. Three sentences here.");
    EXPECT_FALSE(e.answer_query("What is the adult dosage of amoxicillin?", "prompt_0c").limit_violated);
    EXPECT_FALSE(e.answer_query("What is the adult dosage of amoxicillin?", "prompt_0a").limit_violated);
}

TEST_F(RagEngineTest, InputErrors) {
    EchoChatProvider echo;
    auto e = engine(echo);
    EXPECT_THROW(e.answer_query("dose?", "prompt_9z"), UnknownVariant);
    EXPECT_THROW(e.answer_query("   ", "prompt_0a"), EmptyQuery);
    FnvTrigramEmbedder small(8);
    EXPECT_THROW(RagEngine(small, *index_, registry_, echo), DimensionMismatch);
    EngineConfig bad;
    bad.threshold = 1.5;
    EXPECT_THROW(RagEngine(embedder_, *index_, registry_, echo, bad), Error);
}

TEST_F(RagEngineTest, AnswersAreDeterministicWithTheEchoProvider) {
    EchoChatProvider echo;
    auto e = engine(echo);
    for (const auto& v : registry_.list_variants()) {
        auto a = e.answer_query("What is the adult dosage of amoxicillin?", v.variant_id);
        auto b = e.answer_query("What is the adult dosage of amoxicillin?", v.variant_id);
        auto ja = to_json(a), jb = to_json(b);
        ja.erase("latency_ms");
        jb.erase("latency_ms");
        EXPECT_EQ(ja, jb);
    }
}
