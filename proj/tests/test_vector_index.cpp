// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <random>
#include <thread>

#include "drug_insights/errors.hpp"
#include "drug_insights/vector_index.hpp"
#include "support/test_support.hpp"

using namespace drug_insights;
using di_test::make_entry;
using di_test::random_unit;

namespace {

std::vector<std::string> ids_of(const std::vector<RetrievalResult>& r) {
    std::vector<std::string> ids;
    for (const auto& x : r) ids.push_back(x.entry_id);
    return ids;
}

std::vector<double> as_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

VectorIndex random_index(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    VectorIndex index(IndexConfig{dim, 0.9, 3});
    std::vector<VectorEntry> entries;
    for (std::size_t i = 0; i < n; ++i) entries.push_back(make_entry("e" + std::to_string(i), random_unit(rng, dim)));
    index.upsert(std::move(entries));
    return index;
}

}  // namespace

TEST(VectorIndex, DefaultsMatchRetrievalConstants) {
    IndexConfig c;
    EXPECT_EQ(c.dimension, 1536u);
    EXPECT_DOUBLE_EQ(c.default_threshold, 0.9);
    EXPECT_EQ(c.default_k, 3u);
}

TEST(VectorIndex, UpsertInsertsThenReplaces) {
    VectorIndex index(IndexConfig{2, 0.5, 3});
    EXPECT_EQ(index.upsert({make_entry("a", {1, 0}), make_entry("b", {0, 1}), make_entry("c", {0.6f, 0.8f})}),
              (UpsertStats{3, 0}));
    EXPECT_EQ(index.upsert({make_entry("b", {1, 0}, "other")}), (UpsertStats{0, 1}));
    EXPECT_EQ(index.size(), 3u);
    auto b = index.get("b");
    ASSERT_TRUE(b);
    EXPECT_EQ(b->vector, (std::vector<float>{1, 0}));
    EXPECT_EQ(b->payload["doc_id"], "other");
}

TEST(VectorIndex, UpsertErrorsLeaveIndexUnchanged) {
    VectorIndex index(IndexConfig{1536, 0.9, 3});
    std::mt19937_64 rng(3);
    EXPECT_THROW(index.upsert({make_entry("x", random_unit(rng, 1535))}), DimensionMismatch);
    auto v = random_unit(rng, 1536);
    EXPECT_THROW(index.upsert({make_entry("a", v), make_entry("a", v)}), DuplicateInBatch);
    EXPECT_EQ(index.size(), 0u);
}

TEST(VectorIndex, UpsertValidatesEntries) {
    VectorIndex index(IndexConfig{2, 0.5, 3});
    EXPECT_THROW(index.upsert({make_entry("", {1, 0})}), InvalidEntry);
    EXPECT_THROW(index.upsert({make_entry("a", {2, 0})}), InvalidEntry);
    VectorEntry no_text{"a", {1, 0}, {{"doc_id", "d"}, {"page_start", 1}, {"page_end", 1}}};
    EXPECT_THROW(index.upsert({no_text}), InvalidEntry);
    VectorEntry bad_page{"a", {1, 0}, {{"doc_id", "d"}, {"page_start", "1"}, {"page_end", 1}, {"text", ""}}};
    EXPECT_THROW(index.upsert({bad_page}), InvalidEntry);
}

TEST(VectorIndex, HandComputedTwoDimensionalExample) {
    VectorIndex index(IndexConfig{2, 0.9, 3});
    index.upsert({make_entry("e1", {1, 0}), make_entry("e2", {0.8f, 0.6f}), make_entry("e3", {0, 1})});
    const std::vector<double> q{1, 0};
    auto r = index.search(q, 3, 0.5);
    ASSERT_EQ(ids_of(r), (std::vector<std::string>{"e1", "e2"}));
    EXPECT_NEAR(r[0].score, 1.0, 1e-6);
    EXPECT_NEAR(r[1].score, 0.8, 1e-6);
    EXPECT_EQ(r[0].payload["doc_id"], "doc");
}

TEST(VectorIndex, SelfQueryRanksFirst) {
    std::mt19937_64 rng(11);
    auto index = random_index(rng, 200, 64);
    auto e = index.get("e42");
    auto r = index.search(as_double(e->vector), 3, 0.0);
    ASSERT_FALSE(r.empty());
    EXPECT_EQ(r[0].entry_id, "e42");
    EXPECT_NEAR(r[0].score, 1.0, 1e-6);
}

TEST(VectorIndex, TiesBreakByEntryIdAscending) {
    VectorIndex index(IndexConfig{2, 0.0, 5});
    index.upsert({make_entry("zeta", {1, 0}), make_entry("alpha", {1, 0}), make_entry("mid", {1, 0})});
    auto r = index.search(std::vector<double>{1, 0}, 2, 0.0);
    EXPECT_EQ(ids_of(r), (std::vector<std::string>{"alpha", "mid"}));
}

TEST(VectorIndex, SearchArgumentErrors) {
    VectorIndex index(IndexConfig{2, 0.9, 3});
    EXPECT_THROW(index.search(std::vector<double>{1, 0, 0}, 3, 0.5), DimensionMismatch);
    EXPECT_THROW(index.search(std::vector<double>{1, 0}, 0, 0.5), Error);
    EXPECT_TRUE(index.search(std::vector<double>{1, 0}).empty());
}

TEST(VectorIndex, MatchesLinearScanOracle) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t dim = std::vector<std::size_t>{2, 8, 64}[trial % 3];
        const std::size_t n = 1 + rng() % 300;
        std::vector<VectorEntry> entries;
        for (std::size_t i = 0; i < n; ++i) {
            // Duplicate some vectors to exercise tie ordering.
            auto v = (i > 0 && rng() % 5 == 0) ? entries[rng() % entries.size()].vector : random_unit(rng, dim);
            entries.push_back(make_entry("id" + std::to_string(rng() % 100000) + "_" + std::to_string(i), v));
        }
        VectorIndex index(IndexConfig{dim, 0.9, 3});
        index.upsert(entries);
        const auto q = random_unit(rng, dim);
        const std::vector<double> qd(q.begin(), q.end());
        const std::size_t k = 1 + rng() % 20;
        const double t = std::uniform_real_distribution<double>(-0.5, 0.9)(rng);

        std::vector<std::pair<double, std::string>> oracle;
        for (const auto& e : entries) {
            double s = 0;
            for (std::size_t i = 0; i < dim; ++i) s += static_cast<double>(e.vector[i]) * qd[i];
            if (s >= t) oracle.emplace_back(-s, e.entry_id);
        }
        std::sort(oracle.begin(), oracle.end());
        oracle.resize(std::min(oracle.size(), k));

        const auto got = index.search(qd, k, t);
        ASSERT_EQ(got.size(), oracle.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            ASSERT_EQ(got[i].entry_id, oracle[i].second);
            ASSERT_NEAR(got[i].score, -oracle[i].first, 1e-6);
        }
    }
}

TEST(VectorIndex, MonotoneInThresholdAndPrefixInK) {
    std::mt19937_64 rng(5);
    auto index = random_index(rng, 300, 8);
    for (int trial = 0; trial < 50; ++trial) {
        const auto q = random_unit(rng, 8);
        const std::vector<double> qd(q.begin(), q.end());
        const double t = std::uniform_real_distribution<double>(-1, 1)(rng);
        const std::size_t k = 1 + rng() % 10;
        auto base = ids_of(index.search(qd, k, t));
        auto stricter = ids_of(index.search(qd, k, t + 0.1));
        EXPECT_LE(stricter.size(), base.size());
        for (const auto& id : stricter) EXPECT_NE(std::find(base.begin(), base.end(), id), base.end());
        auto more = ids_of(index.search(qd, k + 1, t));
        ASSERT_GE(more.size(), base.size());
        EXPECT_TRUE(std::equal(base.begin(), base.end(), more.begin()));
        EXPECT_EQ(ids_of(index.search(qd, k, t)), base);
    }
}

TEST(VectorIndex, DefaultSearchHonoursConstants) {
    std::mt19937_64 rng(8);
    VectorIndex index(IndexConfig{8, 0.9, 3});
    std::vector<VectorEntry> entries;
    const auto anchor = random_unit(rng, 8);
    for (int i = 0; i < 50; ++i) {
        // Small perturbations of one anchor so many entries clear 0.9.
        std::vector<double> v(anchor.begin(), anchor.end());
        for (auto& x : v) x += std::normal_distribution<double>(0, 0.1)(rng);
        normalize_l2(v);
        entries.push_back(make_entry("p" + std::to_string(i), to_float32(v)));
    }
    index.upsert(entries);
    const std::vector<double> q(anchor.begin(), anchor.end());
    auto r = index.search(q);
    EXPECT_EQ(r.size(), 3u);
    for (const auto& x : r) EXPECT_GE(x.score, 0.9);
}

TEST(IndexCodec, RoundTripIsBitExact) {
    std::mt19937_64 rng(17);
    auto index = random_index(rng, 100, 64);
    di_test::TempDir dir;
    index.save(dir / "i.divx");
    auto loaded = VectorIndex::load(dir / "i.divx");
    EXPECT_EQ(loaded.size(), 100u);
    EXPECT_EQ(loaded.dimension(), 64u);
    EXPECT_EQ(loaded.encode(), index.encode());
    for (int i = 0; i < 20; ++i) {
        const auto q = random_unit(rng, 64);
        const std::vector<double> qd(q.begin(), q.end());
        auto a = index.search(qd, 10, -1.0);
        auto b = loaded.search(qd, 10, -1.0);
        ASSERT_EQ(ids_of(a), ids_of(b));
        for (std::size_t j = 0; j < a.size(); ++j) {
            EXPECT_EQ(std::memcmp(&a[j].score, &b[j].score, sizeof(double)), 0);
            EXPECT_EQ(a[j].payload, b[j].payload);
        }
    }
    EXPECT_FALSE(std::filesystem::exists(dir / "i.divx.tmp"));
}

TEST(IndexCodec, LayoutIsLittleEndian) {
    VectorIndex index(IndexConfig{2, 0.9, 3});
    index.upsert({make_entry("ab", {1, 0})});
    const auto bytes = index.encode();
    const std::string payload = R"({"doc_id":"doc","page_end":1,"page_start":1,"text":"text"})";
    std::vector<unsigned char> expected{'D', 'R', 'G', 'I', 'D', 'X', '0', '1', 1, 0, 0, 0, 2, 0, 0, 0,
                                        1,   0,   0,   0,   0,   0,   0,   0,   2, 0, 0, 0, 'a', 'b'};
    expected.push_back(static_cast<unsigned char>(payload.size()));
    expected.insert(expected.end(), {0, 0, 0});
    expected.insert(expected.end(), payload.begin(), payload.end());
    expected.insert(expected.end(), {0x00, 0x00, 0x80, 0x3f, 0, 0, 0, 0});
    EXPECT_EQ(bytes, expected);
}

TEST(IndexCodec, EmptyIndexRoundTrip) {
    VectorIndex index(IndexConfig{16, 0.9, 3});
    auto back = VectorIndex::decode(index.encode());
    EXPECT_EQ(back.size(), 0u);
    EXPECT_EQ(back.dimension(), 16u);
}

TEST(IndexCodec, CorruptionIsReportedWithOffsets) {
    VectorIndex index(IndexConfig{2, 0.9, 3});
    index.upsert({make_entry("ab", {1, 0})});
    const auto good = index.encode();

    auto zeroed = good;
    std::fill(zeroed.begin(), zeroed.begin() + 8, 0);
    try {
        VectorIndex::decode(zeroed);
        FAIL();
    } catch (const CorruptIndex& e) {
        EXPECT_EQ(e.offset(), 0u);
    }

    auto version = good;
    version[8] = 2;
    try {
        VectorIndex::decode(version);
        FAIL();
    } catch (const VersionMismatch& e) {
        EXPECT_EQ(e.found(), 2u);
    }

    // Every strict prefix past the magic is a truncation.
    for (std::size_t len = 8; len < good.size(); ++len) {
        std::vector<unsigned char> cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(len));
        EXPECT_THROW(VectorIndex::decode(cut), CorruptIndex) << len;
    }
    std::vector<unsigned char> cut(good.begin(), good.end() - 3);
    try {
        VectorIndex::decode(cut);
        FAIL();
    } catch (const CorruptIndex& e) {
        EXPECT_EQ(e.offset(), good.size() - 8);  // start of the vector
    }

    auto trailing = good;
    trailing.push_back(0);
    EXPECT_THROW(VectorIndex::decode(trailing), CorruptIndex);

    auto huge_count = good;
    huge_count[16] = 0xff;
    EXPECT_THROW(VectorIndex::decode(huge_count), CorruptIndex);
}

TEST(IndexCodec, LoadMissingFile) {
    EXPECT_THROW(VectorIndex::load("/nonexistent/index.divx"), UnreadableSource);
}

TEST(VectorIndex, ConcurrentReadersNeverSeePartialBatches) {
    VectorIndex index(IndexConfig{2, 0.0, 100});
    std::atomic<bool> stop{false};
    std::atomic<int> bad{0};
    std::vector<std::thread> readers;
    for (int r = 0; r < 4; ++r) {
        readers.emplace_back([&] {
            while (!stop) {
                // Batches always add entries in pairs.
                if (index.search(std::vector<double>{1, 0}, 100, -1.0).size() % 2 != 0) ++bad;
            }
        });
    }
    for (int b = 0; b < 40; ++b) {
        index.upsert({make_entry("x" + std::to_string(b), {1, 0}), make_entry("y" + std::to_string(b), {0, 1})});
    }
    stop = true;
    for (auto& t : readers) t.join();
    EXPECT_EQ(bad.load(), 0);
    EXPECT_EQ(index.size(), 80u);
}
