// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <future>
#include <set>

#include "drug_insights/errors.hpp"
#include "drug_insights/eval_harness.hpp"
#include "drug_insights/service.hpp"
#include "support/serve_process.hpp"
#include "support/test_support.hpp"

using namespace drug_insights;
using di_test::TempDir;
using nlohmann::json;

namespace {

constexpr const char* kDosageQuery = "What is the adult dosage of amoxicillin?";
constexpr const char* kOutOfCorpus = "How much does a bus ticket from Lagos to Abuja cost?";

std::vector<std::string> lines_of(const std::filesystem::path& p) {
    std::vector<std::string> out;
    std::istringstream in(di_test::read_file(p));
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) out.push_back(l);
    return out;
}

class ServiceTest : public ::testing::Test {
protected:
    ServiceConfig base_config() {
        ServiceConfig c;
        c.port = 0;
        c.feedback_log = dir_ / "feedback.jsonl";
        c.engine.threshold = 0.2;
        return c;
    }

    void start(std::unique_ptr<ChatProvider> llm = std::make_unique<EchoChatProvider>(),
               std::optional<ServiceConfig> config = std::nullopt) {
        service_ = std::make_unique<Service>(config ? *config : base_config());
        service_->attach(std::make_unique<FnvTrigramEmbedder>(1536), di_test::build_mini_index(dir_.path()),
                         std::move(llm));
        port_ = service_->start();
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(10, 0);
        return c;
    }

    httplib::Result post(const std::string& path, const std::string& body) const {
        return client().Post(path, body, "application/json");
    }

    json query(const std::string& text) const {
        auto r = post("/v1/query", json{{"query", text}}.dump());
        EXPECT_TRUE(r);
        EXPECT_EQ(r->status, 200) << r->body;
        return json::parse(r->body);
    }

    void TearDown() override {
        if (service_) service_->stop();
    }

    TempDir dir_;
    std::unique_ptr<Service> service_;
    int port_ = 0;
};

}  // namespace

TEST_F(ServiceTest, PromptsListsNineVariants) {
    start();
    auto r = client().Get("/v1/prompts");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    auto j = json::parse(r->body);
    ASSERT_EQ(j.size(), 9u);
    std::set<std::string> ids;
    for (const auto& v : j) {
        ids.insert(v["variant_id"].get<std::string>());
        EXPECT_TRUE(v.contains("sentence_limit"));
        EXPECT_TRUE(v.contains("strategy"));
    }
    EXPECT_EQ(ids.size(), 9u);
}

TEST_F(ServiceTest, HealthReflectsAttachedIndex) {
    service_ = std::make_unique<Service>(base_config());
    port_ = service_->start();
    auto before = client().Get("/v1/health");
    ASSERT_TRUE(before);
    EXPECT_EQ(before->status, 503);
    EXPECT_EQ(post("/v1/query", R"({"query": "dose?"})")->status, 503);
    EXPECT_FALSE(service_->ready());

    service_->attach(std::make_unique<FnvTrigramEmbedder>(1536), di_test::build_mini_index(dir_.path()),
                     std::make_unique<EchoChatProvider>());
    auto after = client().Get("/v1/health");
    ASSERT_TRUE(after);
    EXPECT_EQ(after->status, 200);
    auto j = json::parse(after->body);
    EXPECT_EQ(j["status"], "ok");
    EXPECT_EQ(j["index_entries"], 3);
    EXPECT_EQ(j["dimension"], 1536);
}

TEST_F(ServiceTest, QueryDefaultsAndCitations) {
    start();
    auto j = query(kDosageQuery);
    EXPECT_EQ(j["variant_id"], "prompt_0a");
    EXPECT_FALSE(j["abstained"].get<bool>());
    EXPECT_NE(j["answer_text"].get<std::string>().find("500 mg orally every 8 hours"), std::string::npos);
    ASSERT_EQ(j["sources"].size(), 1u);
    EXPECT_EQ(j["sources"][0]["doc_id"], "amoxicillin");
    EXPECT_EQ(j["sources"][0]["page_start"], 1);
    EXPECT_EQ(j["query_id"].get<std::string>().size(), 36u);
    for (const char* key : {"sentence_count", "limit_violated", "latency_ms"}) EXPECT_TRUE(j.contains(key)) << key;

    auto variant = post("/v1/query", json{{"query", kDosageQuery}, {"variant_id", "prompt_2b"}}.dump());
    EXPECT_EQ(json::parse(variant->body)["variant_id"], "prompt_2b");
    EXPECT_EQ(json::parse(variant->body)["candidates_generated"], 4);
}

TEST_F(ServiceTest, OutOfCorpusAbstains) {
    start();
    auto j = query(kOutOfCorpus);
    EXPECT_TRUE(j["abstained"].get<bool>());
    EXPECT_TRUE(j["sources"].empty());
    EXPECT_EQ(j["answer_text"], kDefaultAbstentionMessage);
}

TEST_F(ServiceTest, OverridesAreClamped) {
    start();
    auto r = post("/v1/query", json{{"query", kDosageQuery}, {"k", 0}, {"threshold", -3.0}}.dump());
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body)["sources"].size(), 1u);  // k clamped to 1
    r = post("/v1/query", json{{"query", kDosageQuery}, {"k", 50}, {"threshold", 7}}.dump());
    ASSERT_EQ(r->status, 200);
    EXPECT_TRUE(json::parse(r->body)["abstained"].get<bool>());  // threshold clamped to 1
}

TEST_F(ServiceTest, BadQueriesAre400) {
    start();
    for (const char* body : {R"({"query": ""})", R"({"query": "   "})", "{not json", R"([1,2])", R"({})",
                             R"({"query": 5})", R"({"query": "dose?", "variant_id": "prompt_7x"})",
                             R"({"query": "dose?", "k": "three"})"}) {
        auto r = post("/v1/query", body);
        ASSERT_TRUE(r) << body;
        EXPECT_EQ(r->status, 400) << body;
        EXPECT_TRUE(json::parse(r->body).contains("error")) << body;
    }
}

TEST_F(ServiceTest, ProviderOutageIs503) {
    start(std::make_unique<di_test::FunctionChatProvider>(
        [](const ChatRequest&, std::size_t) -> std::string { throw ProviderError(502, "bad gateway"); }));
    EXPECT_EQ(post("/v1/query", json{{"query", kDosageQuery}}.dump())->status, 503);
    // Abstention never reaches the provider.
    EXPECT_EQ(post("/v1/query", json{{"query", kOutOfCorpus}}.dump())->status, 200);
}

TEST_F(ServiceTest, FeedbackIsAppendedBeforeAck) {
    start();
    const auto id = query(kDosageQuery)["query_id"].get<std::string>();
    auto r = post("/v1/feedback", json{{"query_id", id}, {"signal", "like"}}.dump());
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 204);
    auto lines = lines_of(dir_ / "feedback.jsonl");
    ASSERT_EQ(lines.size(), 1u);
    auto j = json::parse(lines[0]);
    EXPECT_EQ(j["query_id"], id);
    EXPECT_EQ(j["signal"], "like");
    EXPECT_TRUE(j.contains("event_id"));
    EXPECT_TRUE(j.contains("timestamp"));

    r = post("/v1/feedback", json{{"query_id", id},
                                  {"survey", {{"q_relevance", 4}, {"q_accuracy", 3}, {"q_construction", 4}, {"q_sources", 5}}},
                                  {"free_text", "useful"}}
                                 .dump());
    EXPECT_EQ(r->status, 204);
    auto survey = read_survey_from_log(dir_ / "feedback.jsonl");
    ASSERT_EQ(survey.responses.size(), 1u);
    EXPECT_EQ(survey.responses[0].q_sources, 5);
}

TEST_F(ServiceTest, FeedbackErrors) {
    start();
    const auto id = query(kDosageQuery)["query_id"].get<std::string>();
    auto status = [&](const json& body) { return post("/v1/feedback", body.dump())->status; };
    EXPECT_EQ(status({{"query_id", "00000000-0000-4000-8000-000000000000"}, {"signal", "like"}}), 404);
    EXPECT_EQ(status({{"query_id", id}}), 400);
    EXPECT_EQ(status({{"query_id", id},
                      {"signal", "like"},
                      {"survey", {{"q_relevance", 4}, {"q_accuracy", 4}, {"q_construction", 4}, {"q_sources", 4}}}}),
              400);
    EXPECT_EQ(status({{"query_id", id}, {"signal", "love"}}), 400);
    EXPECT_EQ(status({{"query_id", id},
                      {"survey", {{"q_relevance", 6}, {"q_accuracy", 4}, {"q_construction", 4}, {"q_sources", 4}}}}),
              400);
    EXPECT_EQ(status({{"signal", "like"}}), 400);
    EXPECT_EQ(post("/v1/feedback", "nope")->status, 400);
    EXPECT_FALSE(std::filesystem::exists(dir_ / "feedback.jsonl") &&
                 !lines_of(dir_ / "feedback.jsonl").empty());
}

TEST_F(ServiceTest, RecentQueriesAreBounded) {
    auto config = base_config();
    config.recent_queries_capacity = 2;
    start(std::make_unique<EchoChatProvider>(), config);
    const auto first = query(kOutOfCorpus)["query_id"].get<std::string>();
    query(kOutOfCorpus);
    query(kOutOfCorpus);
    EXPECT_EQ(post("/v1/feedback", json{{"query_id", first}, {"signal", "dislike"}}.dump())->status, 404);
}

TEST_F(ServiceTest, SixteenConcurrentQueriesAndFeedback) {
    start();
    std::vector<std::future<std::pair<json, int>>> futures;
    for (int i = 0; i < 16; ++i) {
        futures.push_back(std::async(std::launch::async, [this, i] {
            auto c = client();
            auto r = c.Post("/v1/query", json{{"query", i % 2 ? kDosageQuery : kOutOfCorpus}}.dump(), "application/json");
            if (!r || r->status != 200) return std::pair<json, int>{json(), r ? r->status : -100 - static_cast<int>(r.error())};
            auto j = json::parse(r->body);
            auto f = c.Post("/v1/feedback",
                            json{{"query_id", j["query_id"]}, {"signal", "like"}, {"free_text", std::string(2000, 'x')}}.dump(),
                            "application/json");
            return std::pair<json, int>{j, f ? f->status : -1};
        }));
    }
    std::set<std::string> ids;
    for (auto& f : futures) {
        auto [j, feedback_status] = f.get();
        ASSERT_TRUE(j.is_object()) << "status " << feedback_status;
        EXPECT_EQ(feedback_status, 204);
        EXPECT_EQ(j["abstained"].get<bool>(), j["sources"].empty());
        ids.insert(j["query_id"].get<std::string>());
    }
    EXPECT_EQ(ids.size(), 16u);
    auto lines = lines_of(dir_ / "feedback.jsonl");
    ASSERT_EQ(lines.size(), 16u);
    std::set<std::string> logged;
    for (const auto& l : lines) logged.insert(json::parse(l)["query_id"].get<std::string>());
    EXPECT_EQ(logged, ids);
}

TEST_F(ServiceTest, CorsHeadersWhenConfigured) {
    auto config = base_config();
    config.cors_origin = "http://localhost:5173";
    start(std::make_unique<EchoChatProvider>(), config);
    auto r = client().Get("/v1/prompts");
    EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
    auto pre = client().Options("/v1/query");
    ASSERT_TRUE(pre);
    EXPECT_EQ(pre->status, 204);
}

TEST(FeedbackLog, ConcurrentAppendsStayWhole) {
    TempDir dir;
    {
        FeedbackLog log(dir / "log.jsonl");
        std::vector<std::thread> threads;
        for (int t = 0; t < 8; ++t) {
            threads.emplace_back([&, t] {
                for (int i = 0; i < 25; ++i) log.append({{"t", t}, {"i", i}, {"pad", std::string(5000, 'a' + t)}});
            });
        }
        for (auto& th : threads) th.join();
    }
    auto lines = lines_of(dir / "log.jsonl");
    ASSERT_EQ(lines.size(), 200u);
    for (const auto& l : lines) EXPECT_NO_THROW(json::parse(l));
}

TEST(RecentQueries, EvictsLeastRecentlyUsed) {
    RecentQueries r(2);
    r.insert("a");
    r.insert("b");
    EXPECT_TRUE(r.contains("a"));  // refreshes a
    r.insert("c");
    EXPECT_TRUE(r.contains("a"));
    EXPECT_FALSE(r.contains("b"));
    EXPECT_EQ(r.size(), 2u);
}

TEST(RandomUuid, VersionFourFormat) {
    std::set<std::string> seen;
    for (int i = 0; i < 1000; ++i) {
        auto u = random_uuid();
        ASSERT_EQ(u.size(), 36u);
        EXPECT_EQ(u[14], '4');
        EXPECT_NE(std::string("89ab").find(u[19]), std::string::npos);
        seen.insert(u);
    }
    EXPECT_EQ(seen.size(), 1000u);
}

TEST(ServeProcessTest, FeedbackSurvivesKillAfterAck) {
    TempDir dir;
    di_test::build_mini_index(dir.path()).save(dir / "index.divx");
    di_test::write_file(dir / "config.json", json{{"listen", {{"host", "127.0.0.1"}, {"port", 0}}},
                                                  {"index_path", "index.divx"},
                                                  {"feedback_log", "feedback.jsonl"},
                                                  {"embedder", {{"provider", "test-fnv"}, {"dimension", 1536}}},
                                                  {"llm", {{"provider", "mock-echo"}}},
                                                  {"retrieval", {{"threshold", 0.2}}}}
                                                 .dump());
    di_test::ServeProcess serve(DI_CLI_PATH, dir / "config.json");
    httplib::Client c("127.0.0.1", serve.port());
    auto health = c.Get("/v1/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    auto q = c.Post("/v1/query", json{{"query", kDosageQuery}}.dump(), "application/json");
    ASSERT_TRUE(q);
    ASSERT_EQ(q->status, 200);
    const auto id = json::parse(q->body)["query_id"].get<std::string>();
    auto f = c.Post("/v1/feedback", json{{"query_id", id}, {"signal", "dislike"}}.dump(), "application/json");
    ASSERT_TRUE(f);
    ASSERT_EQ(f->status, 204);
    serve.kill();
    auto lines = lines_of(dir / "feedback.jsonl");
    ASSERT_EQ(lines.size(), 1u);
    EXPECT_EQ(json::parse(lines[0])["query_id"], id);
    EXPECT_EQ(json::parse(lines[0])["signal"], "dislike");
}
