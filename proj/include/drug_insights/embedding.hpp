// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drug_insights/retry.hpp"

namespace drug_insights {

/// Unit-length embedding. Values are double so that similarity scores are
/// reproducible to ~1e-15; the vector index narrows them to float32.
struct EmbeddingVector {
    std::vector<double> values;
    std::string provider_id;
};

struct EmbedderConfig {
    std::string provider = "test-fnv";  // remote | test-fnv
    std::string endpoint_url;
    std::string model_name;
    std::size_t dimension = 1536;
    std::size_t max_batch = 64;
    RetryPolicy retry;
    double timeout_seconds = 30.0;
};

inline constexpr const char* kEmbedApiKeyEnv = "DRUG_INSIGHTS_EMBED_API_KEY";

/// Common embed_batch contract: rejects blank texts, splits into max_batch
/// sized requests, checks dimensions and L2-normalizes every vector.
class Embedder {
public:
    virtual ~Embedder() = default;

    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;
    EmbeddingVector embed(std::string_view text) const;

    virtual std::size_t dimension() const = 0;
    virtual std::size_t max_batch() const = 0;
    virtual std::string id() const = 0;

protected:
    /// Raw (not yet normalized) vectors for at most max_batch() texts, in order.
    virtual std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) const = 0;
};

/// Deterministic offline embedder: FNV-1a over lowercased byte trigrams.
class FnvTrigramEmbedder : public Embedder {
public:
    explicit FnvTrigramEmbedder(std::size_t dimension = 1536, std::size_t max_batch = 64);

    std::size_t dimension() const override { return dimension_; }
    std::size_t max_batch() const override { return max_batch_; }
    std::string id() const override;

protected:
    std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) const override;

private:
    std::size_t dimension_;
    std::size_t max_batch_;
};

/// OpenAI-compatible POST {endpoint}/embeddings client.
class RemoteEmbedder : public Embedder {
public:
    explicit RemoteEmbedder(EmbedderConfig config);

    std::size_t dimension() const override { return config_.dimension; }
    std::size_t max_batch() const override { return config_.max_batch; }
    std::string id() const override { return "remote/" + config_.model_name; }

protected:
    std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) const override;

private:
    EmbedderConfig config_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config);

std::uint64_t fnv1a64(std::string_view bytes);

/// Unnormalized trigram counts; see FnvTrigramEmbedder.
std::vector<double> trigram_counts(std::string_view text, std::size_t dimension);

EmbeddingVector test_embed(std::string_view text, std::size_t dimension = 1536);

/// Scales `v` to unit L2 norm. Throws Error for a zero or non-finite vector.
void normalize_l2(std::vector<double>& v);

double dot(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const double> a, std::span<const double> b);

bool is_blank(std::string_view text);

}  // namespace drug_insights
