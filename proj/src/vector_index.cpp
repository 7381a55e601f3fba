// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <mutex>
#include <unordered_set>

#include "drug_insights/errors.hpp"

namespace drug_insights {

std::vector<float> to_float32(std::span<const double> v) {
    std::vector<float> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [](double x) { return static_cast<float>(x); });
    return out;
}

VectorIndex::VectorIndex(IndexConfig config) : config_(config) {
    if (config_.dimension == 0) throw Error("index dimension must be >= 1");
    if (!(config_.default_threshold >= 0.0 && config_.default_threshold <= 1.0))
        throw Error("default_threshold must be within [0, 1]");
    if (config_.default_k == 0) throw Error("default_k must be >= 1");
}

VectorIndex::VectorIndex(VectorIndex&& other) noexcept
    : config_(other.config_),
      ids_(std::move(other.ids_)),
      payloads_(std::move(other.payloads_)),
      data_(std::move(other.data_)),
      slots_(std::move(other.slots_)) {}

VectorIndex& VectorIndex::operator=(VectorIndex&& other) noexcept {
    if (this != &other) {
        std::unique_lock lock(mutex_);
        config_ = other.config_;
        ids_ = std::move(other.ids_);
        payloads_ = std::move(other.payloads_);
        data_ = std::move(other.data_);
        slots_ = std::move(other.slots_);
    }
    return *this;
}

namespace {

void validate_entry(const VectorEntry& e, std::size_t dimension) {
    if (e.entry_id.empty()) throw InvalidEntry("entry_id must not be empty");
    if (e.vector.size() != dimension) throw DimensionMismatch(dimension, e.vector.size());
    double sum = 0.0;
    for (float x : e.vector) {
        if (!std::isfinite(x)) throw InvalidEntry("entry '" + e.entry_id + "' has a non-finite component");
        sum += static_cast<double>(x) * x;
    }
    if (std::abs(std::sqrt(sum) - 1.0) > 1e-3)
        throw InvalidEntry("entry '" + e.entry_id + "' is not unit-normalized");
    const auto& p = e.payload;
    if (!p.is_object()) throw InvalidEntry("entry '" + e.entry_id + "' payload must be a JSON object");
    auto require = [&](const char* key, bool ok) {
        if (!ok) throw InvalidEntry("entry '" + e.entry_id + "' payload needs a valid \"" + key + "\"");
    };
    require("doc_id", p.contains("doc_id") && p["doc_id"].is_string());
    require("page_start", p.contains("page_start") && p["page_start"].is_number_integer());
    require("page_end", p.contains("page_end") && p["page_end"].is_number_integer());
    require("text", p.contains("text") && p["text"].is_string());
}

}  // namespace

UpsertStats VectorIndex::upsert(std::vector<VectorEntry> entries) {
    std::unordered_set<std::string> batch_ids;
    for (const auto& e : entries) {
        validate_entry(e, config_.dimension);
        if (!batch_ids.insert(e.entry_id).second) throw DuplicateInBatch(e.entry_id);
    }

    std::unique_lock lock(mutex_);
    UpsertStats stats;
    const std::size_t dim = config_.dimension;
    for (auto& e : entries) {
        auto it = slots_.find(e.entry_id);
        if (it != slots_.end()) {
            std::copy(e.vector.begin(), e.vector.end(), data_.begin() + static_cast<std::ptrdiff_t>(it->second * dim));
            payloads_[it->second] = std::move(e.payload);
            ++stats.replaced;
        } else {
            slots_.emplace(e.entry_id, ids_.size());
            ids_.push_back(std::move(e.entry_id));
            payloads_.push_back(std::move(e.payload));
            data_.insert(data_.end(), e.vector.begin(), e.vector.end());
            ++stats.inserted;
        }
    }
    return stats;
}

std::vector<RetrievalResult> VectorIndex::search(std::span<const double> query, std::size_t k,
                                                 double threshold) const {
    if (query.size() != config_.dimension) throw DimensionMismatch(config_.dimension, query.size());
    if (k == 0) throw Error("k must be >= 1");

    std::shared_lock lock(mutex_);
    const std::size_t dim = config_.dimension;
    std::vector<std::pair<double, std::size_t>> hits;
    for (std::size_t slot = 0; slot < ids_.size(); ++slot) {
        const float* row = data_.data() + slot * dim;
        double score = 0.0;
        for (std::size_t i = 0; i < dim; ++i) score += static_cast<double>(row[i]) * query[i];
        if (score >= threshold) hits.emplace_back(score, slot);
    }
    auto better = [this](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return ids_[a.second] < ids_[b.second];
    };
    const std::size_t n = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), better);

    std::vector<RetrievalResult> results;
    results.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        auto [score, slot] = hits[r];
        const float* row = data_.data() + slot * dim;
        results.push_back({ids_[slot], score, payloads_[slot], std::vector<float>(row, row + dim)});
    }
    return results;
}

std::optional<VectorEntry> VectorIndex::get(const std::string& entry_id) const {
    std::shared_lock lock(mutex_);
    auto it = slots_.find(entry_id);
    if (it == slots_.end()) return std::nullopt;
    const float* row = data_.data() + it->second * config_.dimension;
    return VectorEntry{entry_id, std::vector<float>(row, row + config_.dimension), payloads_[it->second]};
}

std::size_t VectorIndex::size() const {
    std::shared_lock lock(mutex_);
    return ids_.size();
}

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    std::uint64_t offset() const { return pos_; }
    std::uint64_t remaining() const { return bytes_.size() - pos_; }

    std::span<const unsigned char> take(std::uint64_t n, const char* what) {
        if (n > remaining()) throw CorruptIndex(pos_, std::string("truncated ") + what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::uint32_t u32(const char* what) {
        auto s = take(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | s[i];
        return v;
    }

    std::uint64_t u64(const char* what) {
        auto s = take(8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | s[i];
        return v;
    }

private:
    std::span<const unsigned char> bytes_;
    std::uint64_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> VectorIndex::encode() const {
    std::shared_lock lock(mutex_);
    std::vector<unsigned char> out;
    out.insert(out.end(), std::begin(kIndexMagic), std::end(kIndexMagic));
    put_u32(out, kIndexFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(config_.dimension));
    put_u64(out, ids_.size());
    for (std::size_t slot = 0; slot < ids_.size(); ++slot) {
        const auto& id = ids_[slot];
        put_u32(out, static_cast<std::uint32_t>(id.size()));
        out.insert(out.end(), id.begin(), id.end());
        const auto payload = payloads_[slot].dump();
        put_u32(out, static_cast<std::uint32_t>(payload.size()));
        out.insert(out.end(), payload.begin(), payload.end());
        const float* row = data_.data() + slot * config_.dimension;
        for (std::size_t i = 0; i < config_.dimension; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, &row[i], sizeof bits);
            put_u32(out, bits);
        }
    }
    return out;
}

VectorIndex VectorIndex::decode(std::span<const unsigned char> bytes, IndexConfig defaults) {
    if (bytes.size() < sizeof kIndexMagic || std::memcmp(bytes.data(), kIndexMagic, sizeof kIndexMagic) != 0)
        throw CorruptIndex(0, "bad magic");
    Reader r(bytes);
    r.take(sizeof kIndexMagic, "magic");
    const auto version = r.u32("format version");
    if (version != kIndexFormatVersion) throw VersionMismatch(version);
    const auto dim_offset = r.offset();
    const auto dimension = r.u32("dimension");
    if (dimension == 0) throw CorruptIndex(dim_offset, "dimension is zero");
    const auto count_offset = r.offset();
    const auto count = r.u64("entry count");
    // Smallest possible entry: two length fields, "{}" payload, the vector.
    const std::uint64_t min_entry = 8 + 2 + 4ULL * dimension;
    if (count > r.remaining() / min_entry) throw CorruptIndex(count_offset, "entry count exceeds file size");

    defaults.dimension = dimension;
    VectorIndex index(defaults);
    index.ids_.reserve(count);
    index.payloads_.reserve(count);
    index.data_.reserve(count * dimension);
    for (std::uint64_t n = 0; n < count; ++n) {
        const auto id_len = r.u32("id length");
        const auto id_offset = r.offset();
        auto id_bytes = r.take(id_len, "entry id");
        std::string id(id_bytes.begin(), id_bytes.end());
        if (id.empty()) throw CorruptIndex(id_offset, "empty entry id");
        if (index.slots_.count(id)) throw CorruptIndex(id_offset, "duplicate entry id '" + id + "'");

        const auto payload_len = r.u32("payload length");
        const auto payload_offset = r.offset();
        auto payload_bytes = r.take(payload_len, "payload");
        nlohmann::json payload;
        try {
            payload = nlohmann::json::parse(payload_bytes.begin(), payload_bytes.end());
        } catch (const nlohmann::json::parse_error&) {
            throw CorruptIndex(payload_offset, "payload is not valid JSON");
        }
        if (!payload.is_object()) throw CorruptIndex(payload_offset, "payload is not a JSON object");

        auto vec = r.take(4ULL * dimension, "vector");
        for (std::uint32_t i = 0; i < dimension; ++i) {
            std::uint32_t bits = 0;
            for (int b = 3; b >= 0; --b) bits = (bits << 8) | vec[4 * i + b];
            float x;
            std::memcpy(&x, &bits, sizeof x);
            index.data_.push_back(x);
        }
        index.slots_.emplace(id, index.ids_.size());
        index.ids_.push_back(std::move(id));
        index.payloads_.push_back(std::move(payload));
    }
    if (r.remaining() != 0) throw CorruptIndex(r.offset(), "trailing bytes after last entry");
    return index;
}

void VectorIndex::save(const std::filesystem::path& path) const {
    const auto bytes = encode();
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write index to '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("cannot move index into place at '" + path.string() + "': " + ec.message());
}

VectorIndex VectorIndex::load(const std::filesystem::path& path, IndexConfig defaults) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UnreadableSource("cannot open index '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes, defaults);
}

}  // namespace drug_insights
