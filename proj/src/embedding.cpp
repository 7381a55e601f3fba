// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "drug_insights/errors.hpp"
#include "drug_insights/http_client.hpp"
#include "text_util.hpp"

namespace drug_insights {

bool is_blank(std::string_view text) { return detail::trim(text).empty(); }

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<double> trigram_counts(std::string_view text, std::size_t dimension) {
    if (dimension == 0) throw Error("embedding dimension must be >= 1");
    std::string lowered(text);
    for (char& c : lowered) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    std::vector<double> acc(dimension, 0.0);
    std::string_view s(lowered);
    if (s.size() < 3) {
        acc[fnv1a64(s) % dimension] += 1.0;
    } else {
        for (std::size_t i = 0; i + 3 <= s.size(); ++i) acc[fnv1a64(s.substr(i, 3)) % dimension] += 1.0;
    }
    return acc;
}

void normalize_l2(std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    const double norm = std::sqrt(sum);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw Error("cannot normalize a zero or non-finite vector");
    for (double& x : v) x /= norm;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (!(na > 0.0) || !(nb > 0.0)) throw Error("cosine of a zero vector");
    return dot(a, b) / (na * nb);
}

EmbeddingVector test_embed(std::string_view text, std::size_t dimension) {
    if (is_blank(text)) throw EmptyText(0);
    EmbeddingVector v{trigram_counts(text, dimension), "test-fnv/" + std::to_string(dimension)};
    normalize_l2(v.values);
    return v;
}

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts) const {
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (is_blank(texts[i])) throw EmptyText(i);
    }
    const std::size_t step = std::max<std::size_t>(1, max_batch());
    const std::string provider = id();
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t begin = 0; begin < texts.size(); begin += step) {
        auto part = texts.subspan(begin, std::min(step, texts.size() - begin));
        auto raw = embed_raw(part);
        if (raw.size() != part.size())
            throw ProviderError(200, "provider returned " + std::to_string(raw.size()) + " embeddings for " +
                                         std::to_string(part.size()) + " inputs");
        for (auto& values : raw) {
            if (values.size() != dimension()) throw DimensionMismatch(dimension(), values.size());
            try {
                normalize_l2(values);
            } catch (const Error&) {
                throw ProviderError(200, "provider returned a zero or non-finite embedding");
            }
            out.push_back({std::move(values), provider});
        }
    }
    return out;
}

EmbeddingVector Embedder::embed(std::string_view text) const {
    std::string owned(text);
    auto v = embed_batch(std::span<const std::string>(&owned, 1));
    return std::move(v.front());
}

FnvTrigramEmbedder::FnvTrigramEmbedder(std::size_t dimension, std::size_t max_batch)
    : dimension_(dimension), max_batch_(max_batch) {
    if (dimension_ == 0) throw Error("embedding dimension must be >= 1");
    if (max_batch_ == 0) throw Error("max_batch must be >= 1");
}

std::string FnvTrigramEmbedder::id() const { return "test-fnv/" + std::to_string(dimension_); }

std::vector<std::vector<double>> FnvTrigramEmbedder::embed_raw(std::span<const std::string> texts) const {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(trigram_counts(t, dimension_));
    return out;
}

RemoteEmbedder::RemoteEmbedder(EmbedderConfig config) : config_(std::move(config)) {
    if (config_.endpoint_url.empty()) throw Error("embedder endpoint_url is not configured");
    if (config_.dimension == 0) throw Error("embedding dimension must be >= 1");
    if (config_.max_batch == 0) throw Error("max_batch must be >= 1");
    parse_endpoint(config_.endpoint_url);
}

std::vector<std::vector<double>> RemoteEmbedder::embed_raw(std::span<const std::string> texts) const {
    const auto endpoint = parse_endpoint(config_.endpoint_url);
    const nlohmann::json body = {{"model", config_.model_name},
                                 {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    const auto key = env_secret(kEmbedApiKeyEnv);
    auto reply = with_retry(config_.retry, [&] {
        return post_json(endpoint, "/embeddings", body, key, config_.timeout_seconds);
    });

    std::vector<std::vector<double>> out(texts.size());
    std::vector<bool> filled(texts.size(), false);
    try {
        const auto& data = reply.at("data");
        if (!data.is_array() || data.size() != texts.size())
            throw ProviderError(200, "embeddings response has " + std::to_string(data.size()) +
                                         " items for " + std::to_string(texts.size()) + " inputs");
        for (std::size_t pos = 0; pos < data.size(); ++pos) {
            const auto& item = data[pos];
            std::size_t index = item.contains("index") ? item.at("index").get<std::size_t>() : pos;
            if (index >= texts.size() || filled[index])
                throw ProviderError(200, "embeddings response has a bad or repeated index");
            out[index] = item.at("embedding").get<std::vector<double>>();
            filled[index] = true;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(200, std::string("malformed embeddings response: ") + e.what());
    }
    return out;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
    if (config.provider == "test-fnv") return std::make_unique<FnvTrigramEmbedder>(config.dimension, config.max_batch);
    if (config.provider == "remote") return std::make_unique<RemoteEmbedder>(config);
    throw Error("unknown embedding provider '" + config.provider + "' (expected remote or test-fnv)");
}

}  // namespace drug_insights
