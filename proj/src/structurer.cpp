// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/structurer.hpp"

#include <fstream>
#include <future>
#include <sstream>

#include <spdlog/spdlog.h>

#include "drug_insights/chat_provider.hpp"
#include "drug_insights/errors.hpp"
#include "text_util.hpp"

namespace drug_insights {

const StructuringPrompt& default_structuring_prompt() {
    static const StructuringPrompt prompt{
        "monograph-v1",
        "You reorganize drug formulary text into one structured drug monograph record. "
        "Only use information present in the source text; leave a section empty when the "
        "text does not mention it.",
        "Use exactly these section labels, each at the start of its own line:\n"
        "NAME: <drug name on the same line>\n"
        "INDICATIONS:\n"
        "CONTRAINDICATIONS:\n"
        "DOSAGES:\n"
        "SIDE_EFFECTS:\n"
        "Under each section label, write one item per line, starting with \"- \".\n"
        "Answer ONLY in this format, with no other text.",
    };
    return prompt;
}

std::string render_structuring_prompt(const Chunk& chunk, const StructuringPrompt& prompt) {
    if (detail::trim(chunk.text).empty()) throw Error("chunk '" + chunk.chunk_id + "' has no text");
    std::string out;
    out.reserve(chunk.text.size() + 1024);
    out += prompt.system_text;
    out += "\n\n";
    out += prompt.schema_description;
    out += "\n\nSource text:\n";
    out += kPassageOpen;
    out += '\n';
    out += chunk.text;
    out += '\n';
    out += kPassageClose;
    out += '\n';
    return out;
}

namespace {

enum class Section { none, indications, contraindications, dosages, side_effects, unknown };

std::vector<std::string>* section_list(DrugRecord& r, Section s) {
    switch (s) {
        case Section::indications: return &r.indications;
        case Section::contraindications: return &r.contraindications;
        case Section::dosages: return &r.dosages;
        case Section::side_effects: return &r.side_effects;
        default: return nullptr;
    }
}

// "LABEL: rest" where LABEL is upper-case letters, '_' or spaces.
std::optional<std::pair<std::string, std::string_view>> split_label(std::string_view line) {
    auto colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) return std::nullopt;
    std::string label;
    for (char c : line.substr(0, colon)) {
        if (c >= 'A' && c <= 'Z') {
            label.push_back(c);
        } else if (c == '_' || c == ' ') {
            label.push_back('_');
        } else {
            return std::nullopt;
        }
    }
    if (!(line[0] >= 'A' && line[0] <= 'Z')) return std::nullopt;
    return std::pair{label, detail::trim(line.substr(colon + 1))};
}

Section section_for(std::string_view label) {
    if (label == "INDICATIONS") return Section::indications;
    if (label == "CONTRAINDICATIONS") return Section::contraindications;
    if (label == "DOSAGES" || label == "DOSAGE") return Section::dosages;
    if (label == "SIDE_EFFECTS") return Section::side_effects;
    return Section::unknown;
}

void warn(std::vector<std::string>* warnings, std::string message) {
    spdlog::warn("structured output: {}", message);
    if (warnings) warnings->push_back(std::move(message));
}

}  // namespace

DrugRecord parse_structured_output(std::string_view model_text, std::vector<std::string> source_chunk_ids,
                                   std::vector<std::string>* warnings) {
    DrugRecord record;
    record.source_chunk_ids = std::move(source_chunk_ids);
    bool have_name = false;
    Section current = Section::none;
    std::size_t line_no = 0;
    for (auto raw : detail::split_lines(model_text)) {
        ++line_no;
        auto line = detail::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '-') {
            auto item = detail::trim(line.substr(1));
            if (item.empty()) continue;
            if (auto list = section_list(record, current)) {
                list->emplace_back(item);
            } else if (current == Section::none) {
                warn(warnings, "line " + std::to_string(line_no) + ": item outside any section ignored");
            }
            continue;
        }
        auto labeled = split_label(line);
        if (!labeled) {
            warn(warnings, "line " + std::to_string(line_no) + ": unlabeled text ignored");
            continue;
        }
        auto& [label, rest] = *labeled;
        if (label == "NAME") {
            if (have_name) {
                warn(warnings, "line " + std::to_string(line_no) + ": second NAME; rest of output ignored");
                break;
            }
            if (!rest.empty()) {
                record.name = std::string(rest);
                have_name = true;
            }
            current = Section::none;
            continue;
        }
        current = section_for(label);
        if (current == Section::unknown) {
            warn(warnings, "line " + std::to_string(line_no) + ": unknown label " + label + " ignored");
        } else if (!rest.empty()) {
            section_list(record, current)->emplace_back(rest);
        }
    }
    if (!have_name) throw MissingName();
    if (!record.has_items()) throw EmptyRecord(record.name);
    return record;
}

std::string serialize_record(const DrugRecord& record) {
    std::string out = "NAME: " + record.name;
    auto section = [&](const char* label, const std::vector<std::string>& items) {
        if (items.empty()) return;
        out += '\n';
        out += label;
        out += ':';
        for (const auto& item : items) {
            out += "\n- ";
            out += item;
        }
    };
    section("INDICATIONS", record.indications);
    section("CONTRAINDICATIONS", record.contraindications);
    section("DOSAGES", record.dosages);
    section("SIDE_EFFECTS", record.side_effects);
    return out;
}

void append_structured_record(std::ostream& out, const DrugRecord& record) {
    for (const auto& id : record.source_chunk_ids) out << "SOURCE: " << id << '\n';
    out << serialize_record(record) << "\n---\n";
}

std::vector<DrugRecord> read_structured_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UnreadableSource("cannot open '" + path.string() + "'");
    std::vector<DrugRecord> records;
    std::vector<std::string> sources;
    std::string body;
    std::size_t line_no = 0;
    std::size_t record_line = 1;
    auto flush = [&] {
        if (detail::trim(body).empty() && sources.empty()) return;
        if (sources.empty())
            throw Error(path.string() + ":" + std::to_string(record_line) + ": record has no SOURCE line");
        try {
            records.push_back(parse_structured_output(body, std::move(sources)));
        } catch (const Error& e) {
            throw Error(path.string() + ":" + std::to_string(record_line) + ": " + e.what());
        }
        sources.clear();
        body.clear();
    };
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = detail::trim(line);
        if (t == "---") {
            flush();
            record_line = line_no + 1;
        } else if (t.starts_with("SOURCE:")) {
            sources.emplace_back(detail::trim(t.substr(7)));
        } else {
            body += line;
            body += '\n';
        }
    }
    flush();
    return records;
}

StructureResult structure_corpus(std::span<const Chunk> chunks, ChatProvider& provider,
                                 const std::filesystem::path& out_path, const StructureOptions& options) {
    std::ofstream out(out_path, std::ios::app);
    if (!out) throw UnreadableSource("cannot open '" + out_path.string() + "' for appending");

    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    StructureResult result;
    for (std::size_t begin = 0; begin < chunks.size(); begin += batch) {
        const std::size_t end = std::min(chunks.size(), begin + batch);
        std::vector<std::future<std::string>> replies;
        for (std::size_t i = begin; i < end; ++i) {
            ChatRequest request;
            request.messages.push_back({"user", render_structuring_prompt(chunks[i])});
            request.temperature = options.temperature;
            request.max_tokens = options.max_output_tokens;
            replies.push_back(std::async(std::launch::async, [&provider, request = std::move(request)] {
                return provider.complete(request);
            }));
        }

        std::exception_ptr provider_failure;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& chunk = chunks[i];
            std::string reply;
            try {
                reply = replies[i - begin].get();
            } catch (const ProviderError&) {
                if (!provider_failure) provider_failure = std::current_exception();
                continue;
            }
            try {
                auto record = parse_structured_output(reply, {chunk.chunk_id});
                append_structured_record(out, record);
                result.records.push_back(std::move(record));
            } catch (const Error& e) {
                spdlog::warn("chunk {} skipped: {}", chunk.chunk_id, e.what());
                result.skipped.push_back({chunk.chunk_id, e.what()});
            }
        }
        out.flush();
        if (provider_failure) std::rethrow_exception(provider_failure);
    }
    return result;
}

}  // namespace drug_insights
