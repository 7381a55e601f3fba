// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <random>
#include <thread>

#include <spdlog/spdlog.h>

#include "httplib.h"

#include "drug_insights/errors.hpp"
#include "drug_insights/ingest.hpp"
#include "text_util.hpp"

namespace drug_insights {

using nlohmann::json;

FeedbackLog::FeedbackLog(const std::filesystem::path& path) : path_(path) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open feedback log '" + path_.string() + "': " + std::strerror(errno));
}

FeedbackLog::~FeedbackLog() {
    if (fd_ >= 0) ::close(fd_);
}

void FeedbackLog::append(const json& event) {
    const std::string line = event.dump() + "\n";
    std::lock_guard lock(mutex_);
    std::size_t written = 0;
    while (written < line.size()) {
        ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error("feedback log write failed: " + std::string(std::strerror(errno)));
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fdatasync(fd_) != 0) throw Error("feedback log sync failed: " + std::string(std::strerror(errno)));
}

RecentQueries::RecentQueries(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

void RecentQueries::insert(const std::string& id) {
    std::lock_guard lock(mutex_);
    if (auto it = where_.find(id); it != where_.end()) {
        order_.splice(order_.begin(), order_, it->second);
        return;
    }
    order_.push_front(id);
    where_[id] = order_.begin();
    if (order_.size() > capacity_) {
        where_.erase(order_.back());
        order_.pop_back();
    }
}

bool RecentQueries::contains(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto it = where_.find(id);
    if (it == where_.end()) return false;
    order_.splice(order_.begin(), order_, it->second);
    return true;
}

std::size_t RecentQueries::size() const {
    std::lock_guard lock(mutex_);
    return order_.size();
}

std::string random_uuid() {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uint64_t hi = rng();
    std::uint64_t lo = rng();
    hi = (hi & 0xFFFFFFFFFFFF0FFFULL) | 0x0000000000004000ULL;  // version 4
    lo = (lo & 0x3FFFFFFFFFFFFFFFULL) | 0x8000000000000000ULL;  // RFC 4122 variant
    char buf[37];
    std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                  static_cast<unsigned>((hi >> 16) & 0xFFFF), static_cast<unsigned>(hi & 0xFFFF),
                  static_cast<unsigned>(lo >> 48), static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
    return buf;
}

namespace {

struct ServingState {
    std::unique_ptr<Embedder> embedder;
    VectorIndex index;
    std::unique_ptr<ChatProvider> llm;
    std::unique_ptr<RagEngine> engine;
};

void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply_json(res, status, {{"error", message}});
}

std::optional<int> survey_score(const json& survey, const char* key) {
    auto it = survey.find(key);
    if (it == survey.end() || !it->is_number_integer()) return std::nullopt;
    int v = it->get<int>();
    if (v < 1 || v > 5) return std::nullopt;
    return v;
}

}  // namespace

struct Service::Impl {
    ServiceConfig config;
    PromptRegistry registry;
    RecentQueries recent;
    FeedbackLog feedback;
    httplib::Server server;
    std::thread listener;

    mutable std::mutex state_mutex;
    std::shared_ptr<const ServingState> state;

    explicit Impl(ServiceConfig c)
        : config(std::move(c)),
          registry(config.prompts),
          recent(config.recent_queries_capacity),
          feedback(config.feedback_log) {
        registry.variant(config.default_variant);
        server.new_task_queue = [] { return new httplib::ThreadPool(32); };
        routes();
    }

    std::shared_ptr<const ServingState> current() const {
        std::lock_guard lock(state_mutex);
        return state;
    }

    void routes() {
        if (!config.cors_origin.empty()) {
            server.set_post_routing_handler([origin = config.cors_origin](const auto&, httplib::Response& res) {
                res.set_header("Access-Control-Allow-Origin", origin);
                res.set_header("Access-Control-Allow-Headers", "Content-Type");
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            });
            server.Options(R"(/v1/.*)", [](const auto&, httplib::Response& res) { res.status = 204; });
        }
        server.Get("/v1/health", [this](const auto&, auto& res) { health(res); });
        server.Get("/v1/prompts", [this](const auto&, auto& res) { prompts(res); });
        server.Post("/v1/query", [this](const auto& req, auto& res) { query(req, res); });
        server.Post("/v1/feedback", [this](const auto& req, auto& res) { feedback_event(req, res); });
    }

    void health(httplib::Response& res) const {
        auto s = current();
        if (!s) {
            reply_json(res, 503, {{"status", "loading"}});
            return;
        }
        reply_json(res, 200, {{"status", "ok"}, {"index_entries", s->index.size()}, {"dimension", s->index.dimension()}});
    }

    void prompts(httplib::Response& res) const {
        json out = json::array();
        for (const auto& v : registry.list_variants()) {
            out.push_back({{"variant_id", v.variant_id},
                           {"sentence_limit", to_string(v.sentence_limit)},
                           {"strategy", to_string(v.strategy)},
                           {"n_candidates", v.n_candidates}});
        }
        reply_json(res, 200, out);
    }

    void query(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error&) {
            return reply_error(res, 400, "request body is not valid JSON");
        }
        if (!body.is_object()) return reply_error(res, 400, "request body must be a JSON object");
        if (!body.contains("query") || !body["query"].is_string() || detail::trim(body["query"].get<std::string>()).empty())
            return reply_error(res, 400, "\"query\" must be a non-empty string");
        const auto text = body["query"].get<std::string>();

        std::string variant_id = config.default_variant;
        if (body.contains("variant_id") && !body["variant_id"].is_null()) {
            if (!body["variant_id"].is_string()) return reply_error(res, 400, "\"variant_id\" must be a string");
            variant_id = body["variant_id"].get<std::string>();
        }
        if (!registry.find(variant_id)) return reply_error(res, 400, "unknown variant_id '" + variant_id + "'");

        QueryOverrides overrides;
        if (body.contains("k") && !body["k"].is_null()) {
            if (!body["k"].is_number()) return reply_error(res, 400, "\"k\" must be a number");
            overrides.k = static_cast<std::size_t>(std::max<long long>(1, body["k"].get<long long>()));
        }
        if (body.contains("threshold") && !body["threshold"].is_null()) {
            if (!body["threshold"].is_number()) return reply_error(res, 400, "\"threshold\" must be a number");
            overrides.threshold = std::clamp(body["threshold"].get<double>(), 0.0, 1.0);
        }

        auto s = current();
        if (!s) return reply_error(res, 503, "index is still loading");
        try {
            const auto answer = s->engine->answer_query(text, variant_id, overrides);
            const auto query_id = random_uuid();
            recent.insert(query_id);
            json out = to_json(answer);
            out["query_id"] = query_id;
            reply_json(res, 200, out);
        } catch (const UnknownVariant& e) {
            reply_error(res, 400, e.what());
        } catch (const EmptyQuery& e) {
            reply_error(res, 400, e.what());
        } catch (const ProviderError& e) {
            spdlog::warn("query failed, provider unavailable: {}", e.what());
            reply_error(res, 503, "model provider unavailable");
        } catch (const AllCandidatesFailed& e) {
            spdlog::warn("query failed, provider unavailable: {}", e.what());
            reply_error(res, 503, "model provider unavailable");
        } catch (const std::exception& e) {
            const auto error_id = random_uuid();
            spdlog::error("internal error {}: {}", error_id, e.what());
            reply_json(res, 500, {{"error", "internal error"}, {"error_id", error_id}});
        }
    }

    void feedback_event(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error&) {
            return reply_error(res, 400, "request body is not valid JSON");
        }
        if (!body.is_object()) return reply_error(res, 400, "request body must be a JSON object");
        if (!body.contains("query_id") || !body["query_id"].is_string())
            return reply_error(res, 400, "\"query_id\" must be a string");
        const bool has_signal = body.contains("signal") && !body["signal"].is_null();
        const bool has_survey = body.contains("survey") && !body["survey"].is_null();
        if (has_signal == has_survey) return reply_error(res, 400, "exactly one of \"signal\" or \"survey\" is required");

        json event = {{"event_id", random_uuid()},
                      {"query_id", body["query_id"]},
                      {"timestamp", format_utc(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()))}};
        if (has_signal) {
            const auto& sig = body["signal"];
            if (!sig.is_string() || (sig != "like" && sig != "dislike"))
                return reply_error(res, 400, "\"signal\" must be \"like\" or \"dislike\"");
            event["signal"] = sig;
        } else {
            const auto& survey = body["survey"];
            if (!survey.is_object()) return reply_error(res, 400, "\"survey\" must be an object");
            json row = json::object();
            for (const char* key : {"q_relevance", "q_accuracy", "q_construction", "q_sources"}) {
                auto v = survey_score(survey, key);
                if (!v) return reply_error(res, 400, std::string("survey.") + key + " must be an integer 1..5");
                row[key] = *v;
            }
            if (survey.contains("respondent_id") && survey["respondent_id"].is_string())
                row["respondent_id"] = survey["respondent_id"];
            event["survey"] = row;
        }
        if (body.contains("free_text") && !body["free_text"].is_null()) {
            if (!body["free_text"].is_string()) return reply_error(res, 400, "\"free_text\" must be a string");
            event["free_text"] = body["free_text"];
        }
        if (!recent.contains(body["query_id"].get<std::string>()))
            return reply_error(res, 404, "unknown query_id");
        try {
            feedback.append(event);
        } catch (const std::exception& e) {
            const auto error_id = random_uuid();
            spdlog::error("internal error {}: {}", error_id, e.what());
            return reply_json(res, 500, {{"error", "internal error"}, {"error_id", error_id}});
        }
        res.status = 204;
    }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() { stop(); }

void Service::attach(std::unique_ptr<Embedder> embedder, VectorIndex index, std::unique_ptr<ChatProvider> llm) {
    auto s = std::make_shared<ServingState>(ServingState{std::move(embedder), std::move(index), std::move(llm), nullptr});
    s->engine = std::make_unique<RagEngine>(*s->embedder, s->index, impl_->registry, *s->llm, impl_->config.engine);
    std::lock_guard lock(impl_->state_mutex);
    impl_->state = std::move(s);
}

void Service::load_from_config() {
    const auto& c = impl_->config;
    auto embedder = make_embedder(c.embedder);
    auto llm = make_chat_provider(c.llm);
    IndexConfig defaults;
    defaults.default_k = c.engine.k;
    defaults.default_threshold = c.engine.threshold;
    auto index = VectorIndex::load(c.index_path, defaults);
    spdlog::info("loaded index {} ({} entries, dimension {})", c.index_path.string(), index.size(), index.dimension());
    attach(std::move(embedder), std::move(index), std::move(llm));
}

int Service::start() {
    auto& server = impl_->server;
    int port = impl_->config.port;
    if (port == 0) {
        port = server.bind_to_any_port(impl_->config.host);
        if (port < 0) throw Error("cannot bind to " + impl_->config.host);
    } else if (!server.bind_to_port(impl_->config.host, port)) {
        throw Error("cannot bind to " + impl_->config.host + ":" + std::to_string(port));
    }
    impl_->listener = std::thread([&server] { server.listen_after_bind(); });
    return port;
}

void Service::wait() {
    if (impl_ && impl_->listener.joinable()) impl_->listener.join();
}

void Service::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->listener.joinable()) impl_->listener.join();
}

bool Service::ready() const { return impl_->current() != nullptr; }

const ServiceConfig& Service::config() const noexcept { return impl_->config; }

}  // namespace drug_insights
