// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace drug_insights {

class PdfTextExtractor;

struct DocumentMeta {
    std::string doc_id;
    std::optional<std::string> title;
    std::optional<std::string> author;
    std::string source_path;
    int page_count = 1;
    std::chrono::sys_seconds ingested_at{};
};

/// One paragraph-level block of text. Sorting by (page, order) gives reading order.
struct TextBlock {
    std::string doc_id;
    int page = 1;
    int order = 0;
    std::string text;

    friend bool operator==(const TextBlock&, const TextBlock&) = default;
};

/// A window over a document's joined block text. Offsets count Unicode code
/// points, and `text` holds exactly char_end - char_start of them.
struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    int page_start = 1;
    int page_end = 1;
    std::size_t char_start = 0;
    std::size_t char_end = 0;
    std::string text;

    friend bool operator==(const Chunk&, const Chunk&) = default;
};

enum class SourceFormat { plaintext, jsonl_blocks, pdf };

SourceFormat parse_source_format(std::string_view name);
std::string_view to_string(SourceFormat format);

struct Extraction {
    DocumentMeta meta;
    std::vector<TextBlock> blocks;
};

struct ExtractOptions {
    /// Defaults to the file stem when empty.
    std::string doc_id;
    /// PDF backend; the bundled single-column extractor is used when null.
    const PdfTextExtractor* pdf = nullptr;
};

/// Reads a source document into ordered blocks.
///
/// Plaintext becomes a single page whose blocks are separated by blank lines.
/// jsonl-blocks carries one {"page","order","text"} object per line, with an
/// optional leading {"meta": {...}} line. Title and author are only set when
/// the source provides them.
Extraction extract_blocks(const std::filesystem::path& source, SourceFormat format,
                          const ExtractOptions& options = {});

/// Same as extract_blocks but for an already open stream of plaintext or
/// jsonl-blocks content. `source_path` is recorded verbatim in the metadata.
Extraction extract_blocks(std::istream& in, SourceFormat format, std::string doc_id,
                          std::string source_path);

/// Splits plain text into paragraph blocks on blank lines (page 1).
std::vector<TextBlock> split_paragraphs(std::string_view text, const std::string& doc_id,
                                        int page = 1, int first_order = 0);

struct ChunkParams {
    std::size_t chunk_size = 1000;
    std::size_t overlap = 150;
};

/// Joins each document's blocks with '\n' and cuts windows of `chunk_size`
/// code points advancing by chunk_size - overlap. Chunk ids are "<doc_id>#<i>".
std::vector<Chunk> chunk_document(std::span<const TextBlock> blocks, const ChunkParams& params = {});

void write_chunks_jsonl(std::ostream& out, std::span<const Chunk> chunks);
std::vector<Chunk> read_chunks_jsonl(const std::filesystem::path& path);

std::string format_utc(std::chrono::sys_seconds t);

}  // namespace drug_insights
