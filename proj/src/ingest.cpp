// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/ingest.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "drug_insights/errors.hpp"
#include "drug_insights/pdf_text.hpp"
#include "text_util.hpp"

namespace drug_insights {

using nlohmann::json;

SourceFormat parse_source_format(std::string_view name) {
    if (name == "plaintext") return SourceFormat::plaintext;
    if (name == "jsonl-blocks") return SourceFormat::jsonl_blocks;
    if (name == "pdf") return SourceFormat::pdf;
    throw Error("unknown source format '" + std::string(name) + "'");
}

std::string_view to_string(SourceFormat format) {
    switch (format) {
        case SourceFormat::plaintext: return "plaintext";
        case SourceFormat::jsonl_blocks: return "jsonl-blocks";
        case SourceFormat::pdf: return "pdf";
    }
    return "unknown";
}

std::string format_utc(std::chrono::sys_seconds t) {
    std::time_t tt = t.time_since_epoch().count();
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<TextBlock> split_paragraphs(std::string_view text, const std::string& doc_id, int page,
                                        int first_order) {
    std::vector<TextBlock> blocks;
    std::string current;
    int order = first_order;
    auto flush = [&] {
        auto t = detail::trim(current);
        if (!t.empty()) blocks.push_back({doc_id, page, order++, std::string(t)});
        current.clear();
    };
    for (auto line : detail::split_lines(text)) {
        if (detail::trim(line).empty()) {
            flush();
        } else {
            if (!current.empty()) current.push_back('\n');
            current.append(line);
        }
    }
    flush();
    return blocks;
}

namespace {

std::chrono::sys_seconds now_utc() {
    return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UnreadableSource("cannot open '" + path.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw UnreadableSource("read error on '" + path.string() + "'");
    return bytes;
}

std::optional<std::string> optional_string(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) return std::nullopt;
    auto s = detail::sanitize_utf8(it->get<std::string>());
    if (detail::trim(s).empty()) return std::nullopt;
    return s;
}

void parse_jsonl_blocks(std::istream& in, Extraction& out) {
    std::string line;
    std::size_t line_no = 0;
    bool seen_record = false;
    std::map<std::pair<int, int>, std::size_t> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error&) {
            throw MalformedBlockRecord(line_no, "invalid JSON");
        }
        if (!rec.is_object()) throw MalformedBlockRecord(line_no, "not a JSON object");
        if (!seen_record && rec.contains("meta")) {
            const auto& meta = rec["meta"];
            if (!meta.is_object()) throw MalformedBlockRecord(line_no, "\"meta\" is not an object");
            out.meta.title = optional_string(meta, "title");
            out.meta.author = optional_string(meta, "author");
            seen_record = true;
            continue;
        }
        seen_record = true;
        for (const char* key : {"page", "order", "text"}) {
            if (!rec.contains(key)) throw MalformedBlockRecord(line_no, std::string("missing \"") + key + "\"");
        }
        if (!rec["page"].is_number_integer() || rec["page"].get<long long>() < 1)
            throw MalformedBlockRecord(line_no, "\"page\" must be an integer >= 1");
        if (!rec["order"].is_number_integer() || rec["order"].get<long long>() < 0)
            throw MalformedBlockRecord(line_no, "\"order\" must be an integer >= 0");
        if (!rec["text"].is_string()) throw MalformedBlockRecord(line_no, "\"text\" must be a string");
        int page = rec["page"].get<int>();
        int order = rec["order"].get<int>();
        if (!seen.emplace(std::pair{page, order}, line_no).second)
            throw MalformedBlockRecord(line_no, "duplicate (page, order)");
        auto text = detail::sanitize_utf8(rec["text"].get<std::string>());
        if (detail::trim(text).empty()) continue;
        out.blocks.push_back({out.meta.doc_id, page, order, std::move(text)});
    }
    if (in.bad()) throw UnreadableSource("read error on '" + out.meta.source_path + "'");
}

void add_pdf_pages(std::string_view bytes, const PdfTextExtractor& extractor, Extraction& out) {
    PdfContent content;
    try {
        content = extractor.extract(bytes);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw UnreadableSource("'" + out.meta.source_path + "': " + e.what());
    }
    out.meta.title = content.title;
    out.meta.author = content.author;
    out.meta.page_count = static_cast<int>(std::max<std::size_t>(1, content.pages.size()));
    for (std::size_t p = 0; p < content.pages.size(); ++p) {
        auto blocks = split_paragraphs(detail::sanitize_utf8(content.pages[p]), out.meta.doc_id,
                                       static_cast<int>(p + 1));
        std::move(blocks.begin(), blocks.end(), std::back_inserter(out.blocks));
    }
}

void finish(Extraction& out) {
    if (out.blocks.empty()) throw EmptyDocument("'" + out.meta.source_path + "' has no text blocks");
    std::stable_sort(out.blocks.begin(), out.blocks.end(), [](const TextBlock& a, const TextBlock& b) {
        return std::tie(a.page, a.order) < std::tie(b.page, b.order);
    });
    int max_page = 1;
    for (const auto& b : out.blocks) max_page = std::max(max_page, b.page);
    out.meta.page_count = std::max(out.meta.page_count, max_page);
}

}  // namespace

Extraction extract_blocks(std::istream& in, SourceFormat format, std::string doc_id,
                          std::string source_path) {
    if (doc_id.empty()) throw Error("doc_id must not be empty");
    Extraction out;
    out.meta.doc_id = std::move(doc_id);
    out.meta.source_path = std::move(source_path);
    out.meta.ingested_at = now_utc();
    switch (format) {
        case SourceFormat::plaintext: {
            std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            if (in.bad()) throw UnreadableSource("read error on '" + out.meta.source_path + "'");
            out.blocks = split_paragraphs(detail::sanitize_utf8(text), out.meta.doc_id);
            break;
        }
        case SourceFormat::jsonl_blocks:
            parse_jsonl_blocks(in, out);
            break;
        case SourceFormat::pdf: {
            std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            add_pdf_pages(bytes, BasicPdfTextExtractor{}, out);
            break;
        }
    }
    finish(out);
    return out;
}

Extraction extract_blocks(const std::filesystem::path& source, SourceFormat format,
                          const ExtractOptions& options) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(source, ec))
        throw UnreadableSource("'" + source.string() + "' is not a readable file");
    std::string doc_id = options.doc_id.empty() ? source.stem().string() : options.doc_id;

    if (format == SourceFormat::pdf) {
        Extraction out;
        out.meta.doc_id = doc_id;
        out.meta.source_path = source.string();
        out.meta.ingested_at = now_utc();
        BasicPdfTextExtractor fallback;
        add_pdf_pages(read_bytes(source), options.pdf ? *options.pdf : fallback, out);
        finish(out);
        return out;
    }

    std::ifstream in(source, std::ios::binary);
    if (!in) throw UnreadableSource("cannot open '" + source.string() + "'");
    return extract_blocks(in, format, std::move(doc_id), source.string());
}

std::vector<Chunk> chunk_document(std::span<const TextBlock> blocks, const ChunkParams& params) {
    if (params.chunk_size == 0) throw InvalidChunkParams("chunk_size must be positive");
    if (params.overlap >= params.chunk_size)
        throw InvalidChunkParams("overlap (" + std::to_string(params.overlap) +
                                 ") must be smaller than chunk_size (" +
                                 std::to_string(params.chunk_size) + ")");
    if (blocks.empty()) throw EmptyDocument("no blocks to chunk");

    std::vector<std::string> doc_order;
    std::map<std::string, std::vector<TextBlock>> by_doc;
    for (const auto& b : blocks) {
        auto [it, fresh] = by_doc.try_emplace(b.doc_id);
        if (fresh) doc_order.push_back(b.doc_id);
        it->second.push_back(b);
    }

    const std::size_t step = params.chunk_size - params.overlap;
    std::vector<Chunk> chunks;
    for (const auto& doc_id : doc_order) {
        auto& doc_blocks = by_doc[doc_id];
        std::stable_sort(doc_blocks.begin(), doc_blocks.end(), [](const TextBlock& a, const TextBlock& b) {
            return std::tie(a.page, a.order) < std::tie(b.page, b.order);
        });

        std::string joined;
        // [start, end) of each block in code points
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        std::size_t cp = 0;
        for (std::size_t i = 0; i < doc_blocks.size(); ++i) {
            if (i > 0) {
                joined.push_back('\n');
                ++cp;
            }
            joined += doc_blocks[i].text;
            std::size_t n = detail::code_point_offsets(doc_blocks[i].text).size() - 1;
            spans.emplace_back(cp, cp + n);
            cp += n;
        }
        const auto offsets = detail::code_point_offsets(joined);
        const std::size_t length = offsets.size() - 1;

        for (std::size_t i = 0, start = 0; start < length; ++i, start += step) {
            std::size_t end = std::min(start + params.chunk_size, length);
            // First block ending after `start`; blocks intersecting the window follow it.
            auto first = std::partition_point(spans.begin(), spans.end(),
                                              [&](const auto& s) { return s.second <= start; });
            std::size_t lo = static_cast<std::size_t>(first - spans.begin());
            int page_start = 0;
            int page_end = 0;
            for (std::size_t b = lo; b < spans.size() && spans[b].first < end; ++b) {
                if (page_start == 0) page_start = doc_blocks[b].page;
                page_end = doc_blocks[b].page;
            }
            if (page_start == 0) {
                // Window covers only a separator; attribute it to the preceding block.
                std::size_t b = lo == 0 ? 0 : lo - 1;
                page_start = page_end = doc_blocks[b].page;
            }
            Chunk c;
            c.chunk_id = doc_id + "#" + std::to_string(i);
            c.doc_id = doc_id;
            c.page_start = page_start;
            c.page_end = page_end;
            c.char_start = start;
            c.char_end = end;
            c.text = joined.substr(offsets[start], offsets[end] - offsets[start]);
            chunks.push_back(std::move(c));
        }
    }
    return chunks;
}

void write_chunks_jsonl(std::ostream& out, std::span<const Chunk> chunks) {
    for (const auto& c : chunks) {
        json j = {{"chunk_id", c.chunk_id},     {"doc_id", c.doc_id},       {"page_start", c.page_start},
                  {"page_end", c.page_end},     {"char_start", c.char_start}, {"char_end", c.char_end},
                  {"text", c.text}};
        out << j.dump() << '\n';
    }
}

std::vector<Chunk> read_chunks_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UnreadableSource("cannot open '" + path.string() + "'");
    std::vector<Chunk> chunks;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            Chunk c;
            c.chunk_id = j.at("chunk_id").get<std::string>();
            c.doc_id = j.at("doc_id").get<std::string>();
            c.page_start = j.at("page_start").get<int>();
            c.page_end = j.at("page_end").get<int>();
            c.char_start = j.at("char_start").get<std::size_t>();
            c.char_end = j.at("char_end").get<std::size_t>();
            c.text = j.at("text").get<std::string>();
            chunks.push_back(std::move(c));
        } catch (const json::exception& e) {
            throw MalformedBlockRecord(line_no, std::string("bad chunk record: ") + e.what());
        }
    }
    return chunks;
}

}  // namespace drug_insights
