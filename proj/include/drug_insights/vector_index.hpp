// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace drug_insights {

struct VectorEntry {
    std::string entry_id;
    std::vector<float> vector;
    /// Must hold doc_id (string), page_start, page_end (integers) and text (string).
    nlohmann::json payload;
};

struct RetrievalResult {
    std::string entry_id;
    double score = 0.0;
    nlohmann::json payload;
    std::vector<float> vector;
};

struct IndexConfig {
    std::size_t dimension = 1536;
    double default_threshold = 0.9;
    std::size_t default_k = 3;
};

struct UpsertStats {
    std::size_t inserted = 0;
    std::size_t replaced = 0;

    friend bool operator==(const UpsertStats&, const UpsertStats&) = default;
};

/// Exact-scan cosine index over unit vectors stored as float32.
///
/// Scores are dot products accumulated in double. Results are ordered by
/// score descending, then entry_id ascending. Any number of concurrent
/// searches may run; upsert takes the writer lock for the whole batch.
class VectorIndex {
public:
    explicit VectorIndex(IndexConfig config = {});
    VectorIndex(VectorIndex&& other) noexcept;
    VectorIndex& operator=(VectorIndex&& other) noexcept;

    UpsertStats upsert(std::vector<VectorEntry> entries);

    std::vector<RetrievalResult> search(std::span<const double> query, std::size_t k,
                                        double threshold) const;
    std::vector<RetrievalResult> search(std::span<const double> query) const {
        return search(query, config_.default_k, config_.default_threshold);
    }

    std::optional<VectorEntry> get(const std::string& entry_id) const;
    std::size_t size() const;
    std::size_t dimension() const noexcept { return config_.dimension; }
    const IndexConfig& config() const noexcept { return config_; }

    /// Writes the DRGIDX01 format through a temporary file and rename.
    void save(const std::filesystem::path& path) const;

    /// Dimension comes from the file; thresholds and k from `defaults`.
    static VectorIndex load(const std::filesystem::path& path, IndexConfig defaults = {});
    static VectorIndex decode(std::span<const unsigned char> bytes, IndexConfig defaults = {});
    std::vector<unsigned char> encode() const;

private:
    IndexConfig config_;
    mutable std::shared_mutex mutex_;
    std::vector<std::string> ids_;
    std::vector<nlohmann::json> payloads_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> slots_;
};

inline constexpr char kIndexMagic[8] = {'D', 'R', 'G', 'I', 'D', 'X', '0', '1'};
inline constexpr std::uint32_t kIndexFormatVersion = 1;

std::vector<float> to_float32(std::span<const double> v);

}  // namespace drug_insights
