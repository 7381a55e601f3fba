// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drug_insights/ingest.hpp"

namespace drug_insights {

class ChatProvider;

/// One drug monograph in structured form.
struct DrugRecord {
    std::string name;
    std::vector<std::string> indications;
    std::vector<std::string> contraindications;
    std::vector<std::string> dosages;
    std::vector<std::string> side_effects;
    std::vector<std::string> source_chunk_ids;

    bool has_items() const {
        return !indications.empty() || !contraindications.empty() || !dosages.empty() ||
               !side_effects.empty();
    }

    friend bool operator==(const DrugRecord&, const DrugRecord&) = default;
};

struct StructuringPrompt {
    std::string template_id;
    std::string system_text;
    std::string schema_description;
};

const StructuringPrompt& default_structuring_prompt();

/// Prompt asking the model to rewrite `chunk.text` in the labeled-section
/// format. The chunk text is embedded verbatim between fence lines.
std::string render_structuring_prompt(const Chunk& chunk,
                                      const StructuringPrompt& prompt = default_structuring_prompt());

/// Parses the labeled-section format:
///
///     NAME: <one line>
///     INDICATIONS:
///     - item
///     DOSAGES:
///     - item
///
/// Unknown labels and stray lines are skipped; a description of each skip is
/// appended to `warnings` when given. Throws MissingName or EmptyRecord.
DrugRecord parse_structured_output(std::string_view model_text,
                                   std::vector<std::string> source_chunk_ids,
                                   std::vector<std::string>* warnings = nullptr);

/// Labeled-section text for a record, without provenance. This is also the
/// text that gets embedded when records are indexed.
std::string serialize_record(const DrugRecord& record);

/// Reads a structured record file: records separated by "---" lines, each one
/// starting with "SOURCE: <chunk_id>" lines followed by the labeled sections.
std::vector<DrugRecord> read_structured_file(const std::filesystem::path& path);
void append_structured_record(std::ostream& out, const DrugRecord& record);

struct SkippedChunk {
    std::string chunk_id;
    std::string reason;
};

struct StructureResult {
    std::vector<DrugRecord> records;
    std::vector<SkippedChunk> skipped;
};

struct StructureOptions {
    std::size_t batch_size = 8;
    double temperature = 0.0;
    int max_output_tokens = 1024;
};

/// Sends every chunk through the provider and appends each parsed record to
/// `out_path`. Unparseable replies are skipped and reported; a ProviderError
/// aborts the run after the records of completed batches have been written.
StructureResult structure_corpus(std::span<const Chunk> chunks, ChatProvider& provider,
                                 const std::filesystem::path& out_path,
                                 const StructureOptions& options = {});

}  // namespace drug_insights
