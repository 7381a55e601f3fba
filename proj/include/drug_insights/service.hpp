// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "drug_insights/config.hpp"

namespace drug_insights {

/// Append-only JSONL log. Each append is a single write(2) on an O_APPEND
/// descriptor followed by fdatasync, all under one mutex.
class FeedbackLog {
public:
    explicit FeedbackLog(const std::filesystem::path& path);
    ~FeedbackLog();
    FeedbackLog(const FeedbackLog&) = delete;
    FeedbackLog& operator=(const FeedbackLog&) = delete;

    void append(const nlohmann::json& event);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::mutex mutex_;
};

/// Bounded LRU set of served query ids.
class RecentQueries {
public:
    explicit RecentQueries(std::size_t capacity);
    void insert(const std::string& id);
    bool contains(const std::string& id);
    std::size_t size() const;

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::list<std::string> order_;
    std::unordered_map<std::string, std::list<std::string>::iterator> where_;
};

std::string random_uuid();

/// HTTP front end over a RagEngine:
///
///   POST /v1/query     {query, variant_id?, k?, threshold?}
///   POST /v1/feedback  {query_id, signal | survey, free_text?}
///   GET  /v1/prompts
///   GET  /v1/health
///
/// The server can listen before its index is attached; until then /v1/health
/// and /v1/query answer 503.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Takes ownership of the serving components and marks the service ready.
    void attach(std::unique_ptr<Embedder> embedder, VectorIndex index,
                std::unique_ptr<ChatProvider> llm);

    /// Builds providers from the config and loads the index file, then attaches.
    void load_from_config();

    /// Binds (port 0 picks a free port), starts the listener thread and
    /// returns the bound port. Throws Error when binding fails.
    int start();
    /// Blocks until stop() is called or the listener exits.
    void wait();
    void stop();

    bool ready() const;
    const ServiceConfig& config() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace drug_insights
