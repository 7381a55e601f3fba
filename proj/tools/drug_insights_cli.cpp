// SPDX-License-Identifier: Apache-2.0
// drug-insights: command line front end for ingest, structuring, indexing,
// querying, evaluation and the HTTP service.
#include <signal.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "drug_insights/config.hpp"
#include "drug_insights/errors.hpp"
#include "drug_insights/eval_harness.hpp"
#include "drug_insights/ingest.hpp"
#include "drug_insights/rag_engine.hpp"
#include "drug_insights/service.hpp"
#include "drug_insights/structurer.hpp"
#include "drug_insights/vector_index.hpp"

namespace di = drug_insights;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags shared by every command that needs an engine. Anything set here wins
// over the --config file.
struct EngineFlags {
    std::string config_path;
    std::string index_path;
    std::string embedder;
    std::size_t dimension = 0;
    std::string llm;
    std::string llm_endpoint;
    std::string llm_model;
    std::optional<std::size_t> k;
    std::optional<double> threshold;

    void add_to(CLI::App* cmd, bool with_index = true) {
        cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        if (with_index) cmd->add_option("--index", index_path, "index file (DRGIDX01)");
        cmd->add_option("--embedder", embedder, "embedding provider")->check(CLI::IsMember({"test-fnv", "remote"}));
        cmd->add_option("--dim", dimension, "embedding dimension (test-fnv follows the index when unset)");
        cmd->add_option("--llm", llm, "chat provider")->check(CLI::IsMember({"remote", "mock-echo"}));
        cmd->add_option("--llm-endpoint", llm_endpoint, "OpenAI-compatible base URL");
        cmd->add_option("--llm-model", llm_model, "chat model name");
        cmd->add_option("--k", k, "retrieval depth")->check(CLI::PositiveNumber);
        cmd->add_option("--threshold", threshold, "similarity threshold")->check(CLI::Range(0.0, 1.0));
    }

    di::ServiceConfig config() const {
        di::ServiceConfig c = config_path.empty() ? di::ServiceConfig{} : di::ServiceConfig::load(config_path);
        if (!index_path.empty()) c.index_path = index_path;
        if (!embedder.empty()) c.embedder.provider = embedder;
        if (dimension > 0) c.embedder.dimension = dimension;
        if (!llm.empty()) c.llm.provider = llm;
        if (!llm_endpoint.empty()) c.llm.endpoint_url = llm_endpoint;
        if (!llm_model.empty()) c.llm.model_name = llm_model;
        if (k) c.engine.k = *k;
        if (threshold) c.engine.threshold = *threshold;
        return c;
    }
};

struct Runtime {
    di::ServiceConfig config;
    std::unique_ptr<di::Embedder> embedder;
    di::VectorIndex index;
    di::PromptRegistry registry;
    std::unique_ptr<di::ChatProvider> llm;
    std::unique_ptr<di::RagEngine> engine;
};

std::unique_ptr<Runtime> open_runtime(const EngineFlags& flags) {
    auto rt = std::make_unique<Runtime>();
    rt->config = flags.config();
    di::IndexConfig defaults;
    defaults.default_k = rt->config.engine.k;
    defaults.default_threshold = rt->config.engine.threshold;
    rt->index = di::VectorIndex::load(rt->config.index_path, defaults);
    if (rt->config.embedder.provider == "test-fnv" && flags.dimension == 0)
        rt->config.embedder.dimension = rt->index.dimension();
    rt->embedder = di::make_embedder(rt->config.embedder);
    rt->registry = di::PromptRegistry(rt->config.prompts);
    rt->llm = di::make_chat_provider(rt->config.llm);
    rt->engine = std::make_unique<di::RagEngine>(*rt->embedder, rt->index, rt->registry, *rt->llm, rt->config.engine);
    return rt;
}

std::vector<fs::path> input_files(const fs::path& input) {
    if (!fs::is_directory(input)) return {input};
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(input)) {
        if (e.is_regular_file() && e.path().filename().string().front() != '.') files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

void print_answer(const di::Answer& a) {
    std::cout << a.answer_text << "\n";
    if (!a.sources.empty()) {
        std::cout << "\nSources:\n";
        for (std::size_t i = 0; i < a.sources.size(); ++i) {
            const auto& s = a.sources[i];
            std::cout << "  [" << i + 1 << "] " << s.doc_id << " p." << s.page_start;
            if (s.page_end != s.page_start) std::cout << "-" << s.page_end;
            std::cout << "  (score " << s.score << ")\n";
        }
    }
    if (a.limit_violated) std::cout << "\n(note: answer exceeds the variant's sentence limit)\n";
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
    std::string input;
    std::string format = "plaintext";
    std::size_t chunk_size = 1000;
    std::size_t overlap = 150;
    std::string out = "chunks.jsonl";
};

int run_ingest(const IngestArgs& a) {
    const auto format = di::parse_source_format(a.format);
    const di::ChunkParams params{a.chunk_size, a.overlap};
    std::vector<di::Chunk> all;
    for (const auto& file : input_files(a.input)) {
        auto extraction = di::extract_blocks(file, format);
        auto chunks = di::chunk_document(extraction.blocks, params);
        spdlog::info("{}: {} page(s), {} block(s), {} chunk(s)", file.string(), extraction.meta.page_count,
                     extraction.blocks.size(), chunks.size());
        all.insert(all.end(), std::make_move_iterator(chunks.begin()), std::make_move_iterator(chunks.end()));
    }
    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw di::Error("cannot write '" + a.out + "'");
    di::write_chunks_jsonl(out, all);
    std::cout << "wrote " << all.size() << " chunks to " << a.out << "\n";
    return 0;
}

// ---- structure ------------------------------------------------------------

struct StructureArgs {
    std::string chunks;
    std::string out = "structured.txt";
    std::string provider = "remote";
    std::string endpoint;
    std::string model;
    std::size_t batch = 8;
    bool append = false;
};

int run_structure(const StructureArgs& a) {
    const auto chunks = di::read_chunks_jsonl(a.chunks);
    di::LlmProviderConfig llm;
    llm.provider = a.provider;
    llm.endpoint_url = a.endpoint;
    llm.model_name = a.model;
    auto provider = di::make_chat_provider(llm);
    if (!a.append) fs::remove(a.out);
    di::StructureOptions options;
    options.batch_size = a.batch;
    const auto result = di::structure_corpus(chunks, *provider, a.out, options);
    for (const auto& s : result.skipped) std::cerr << "skipped " << s.chunk_id << ": " << s.reason << "\n";
    std::cout << "wrote " << result.records.size() << " records to " << a.out << " (" << result.skipped.size()
              << " chunks skipped)\n";
    return 0;
}

// ---- index ----------------------------------------------------------------

struct IndexArgs {
    std::string structured;
    std::string chunks;
    std::string out = "index.divx";
    std::string embedder = "test-fnv";
    std::string endpoint;
    std::string model;
    std::size_t dimension = 1536;
};

int run_index(const IndexArgs& a) {
    if (a.chunks.empty()) throw di::Error("--chunks is required (it supplies document and page provenance)");
    const auto chunks = di::read_chunks_jsonl(a.chunks);
    std::map<std::string, const di::Chunk*> by_id;
    for (const auto& c : chunks) by_id[c.chunk_id] = &c;

    struct Pending {
        std::string id;
        json payload;
    };
    std::vector<Pending> pending;
    if (!a.structured.empty()) {
        for (const auto& record : di::read_structured_file(a.structured)) {
            const di::Chunk* first = nullptr;
            int page_start = 0;
            int page_end = 0;
            for (const auto& id : record.source_chunk_ids) {
                auto it = by_id.find(id);
                if (it == by_id.end()) throw di::Error("record '" + record.name + "' cites unknown chunk '" + id + "'");
                if (!first) {
                    first = it->second;
                    page_start = first->page_start;
                    page_end = first->page_end;
                }
                page_start = std::min(page_start, it->second->page_start);
                page_end = std::max(page_end, it->second->page_end);
            }
            if (!first) throw di::Error("record '" + record.name + "' has no SOURCE line");
            pending.push_back({first->chunk_id,
                               {{"doc_id", first->doc_id},
                                {"page_start", page_start},
                                {"page_end", page_end},
                                {"chunk_id", first->chunk_id},
                                {"drug_name", record.name},
                                {"text", di::serialize_record(record)}}});
        }
    } else {
        for (const auto& c : chunks) {
            if (di::is_blank(c.text)) continue;
            pending.push_back({c.chunk_id,
                               {{"doc_id", c.doc_id},
                                {"page_start", c.page_start},
                                {"page_end", c.page_end},
                                {"chunk_id", c.chunk_id},
                                {"text", c.text}}});
        }
    }

    di::EmbedderConfig ec;
    ec.provider = a.embedder;
    ec.endpoint_url = a.endpoint;
    ec.model_name = a.model;
    ec.dimension = a.dimension;
    auto embedder = di::make_embedder(ec);
    std::vector<std::string> texts;
    texts.reserve(pending.size());
    for (const auto& p : pending) texts.push_back(p.payload["text"].get<std::string>());
    const auto vectors = embedder->embed_batch(texts);

    di::VectorIndex index(di::IndexConfig{embedder->dimension(), 0.9, 3});
    if (fs::exists(a.out)) index = di::VectorIndex::load(a.out);
    std::vector<di::VectorEntry> entries;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        entries.push_back({pending[i].id, di::to_float32(vectors[i].values), std::move(pending[i].payload)});
    }
    const auto stats = index.upsert(std::move(entries));
    index.save(a.out);
    std::cout << "indexed " << stats.inserted << " new and " << stats.replaced << " replaced entries into " << a.out
              << " (" << index.size() << " total, dimension " << index.dimension() << ")\n";
    return 0;
}

// ---- query / chat ---------------------------------------------------------

int run_query(const EngineFlags& flags, const std::string& text, const std::string& variant, bool as_json) {
    auto rt = open_runtime(flags);
    const auto answer = rt->engine->answer_query(text, variant.empty() ? rt->config.default_variant : variant, {});
    if (as_json) {
        std::cout << di::to_json(answer).dump(2) << "\n";
    } else {
        print_answer(answer);
    }
    return 0;
}

int run_chat(const EngineFlags& flags, std::string variant) {
    auto rt = open_runtime(flags);
    if (variant.empty()) variant = rt->config.default_variant;
    rt->registry.variant(variant);
    std::cout << "drug-insights chat (" << rt->index.size() << " indexed entries, variant " << variant
              << "). Type :variant <id> to switch, :quit to leave.\n";
    std::string line;
    while (std::cout << "\n> " << std::flush, std::getline(std::cin, line)) {
        const auto trimmed = line.substr(0, line.find_last_not_of(" \t\r") + 1);
        if (trimmed.empty()) continue;
        if (trimmed == ":quit" || trimmed == ":q") break;
        if (trimmed.rfind(":variant ", 0) == 0) {
            const auto id = trimmed.substr(9);
            if (rt->registry.find(id)) {
                variant = id;
                std::cout << "variant set to " << variant << "\n";
            } else {
                std::cout << "unknown variant '" << id << "'\n";
            }
            continue;
        }
        try {
            print_answer(rt->engine->answer_query(trimmed, variant, {}));
        } catch (const di::Error& e) {
            std::cout << "error: " << e.what() << "\n";
        }
    }
    return 0;
}

// ---- eval -----------------------------------------------------------------

int run_eval_cmd(const EngineFlags& flags, const std::string& dataset, const std::string& variants,
                 const std::string& out, std::size_t parallelism) {
    auto rt = open_runtime(flags);
    const auto items = di::load_eval_dataset(dataset);
    std::vector<std::string> ids;
    if (variants == "all") {
        for (const auto& v : rt->registry.list_variants()) ids.push_back(v.variant_id);
    } else {
        std::stringstream ss(variants);
        for (std::string id; std::getline(ss, id, ',');) {
            rt->registry.variant(id);
            ids.push_back(id);
        }
    }
    const auto report = di::run_eval(items, ids, *rt->engine, *rt->embedder, {parallelism});
    std::ofstream o(out, std::ios::trunc);
    if (!o) throw di::Error("cannot write '" + out + "'");
    o << report.to_json().dump(2) << "\n";
    std::cout << report.to_table();
    return 0;
}

// ---- feedback summary -----------------------------------------------------

int run_feedback(const std::string& log, bool as_json) {
    const auto summary = di::aggregate_feedback(di::read_survey_from_log(log));
    std::cout << (as_json ? summary.to_json().dump(2) + "\n" : summary.to_table());
    return 0;
}

// ---- embed ----------------------------------------------------------------

int run_embed(const std::string& text, std::size_t dimension) {
    const auto v = di::test_embed(text, dimension);
    for (double x : v.values) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        std::printf("%016llx\n", static_cast<unsigned long long>(bits));
    }
    return 0;
}

// ---- serve ----------------------------------------------------------------

int run_serve(const std::string& config_path, std::optional<int> port) {
    auto config = di::ServiceConfig::load(config_path);
    if (port) config.port = *port;

    // Route SIGINT/SIGTERM to this thread only, before any worker exists.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    di::Service service(config);
    const int bound = service.start();
    std::cout << "listening on http://" << config.host << ":" << bound << std::endl;
    service.load_from_config();
    std::cout << "ready" << std::endl;

    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("received signal {}, shutting down", sig);
    service.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("drug-insights"));
    if (const char* level = std::getenv("DRUG_INSIGHTS_LOG")) spdlog::set_level(spdlog::level::from_str(level));

    CLI::App app{"Retrieval-augmented question answering over drug formularies"};
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Extract and chunk source documents");
    c_ingest->add_option("--input", ingest.input, "file or directory")->required()->check(CLI::ExistingPath);
    c_ingest->add_option("--format", ingest.format)->check(CLI::IsMember({"plaintext", "jsonl-blocks", "pdf"}));
    c_ingest->add_option("--chunk-size", ingest.chunk_size)->check(CLI::PositiveNumber);
    c_ingest->add_option("--overlap", ingest.overlap);
    c_ingest->add_option("--out", ingest.out);

    StructureArgs structure;
    auto* c_structure = app.add_subcommand("structure", "Rewrite chunks as structured drug records");
    c_structure->add_option("--chunks", structure.chunks)->required()->check(CLI::ExistingFile);
    c_structure->add_option("--out", structure.out);
    c_structure->add_option("--provider", structure.provider)->check(CLI::IsMember({"remote", "mock-echo"}));
    c_structure->add_option("--llm-endpoint", structure.endpoint);
    c_structure->add_option("--llm-model", structure.model);
    c_structure->add_option("--batch", structure.batch)->check(CLI::PositiveNumber);
    c_structure->add_flag("--append", structure.append, "append to an existing output file");

    IndexArgs index;
    auto* c_index = app.add_subcommand("index", "Embed structured records (or raw chunks) and upsert them");
    c_index->add_option("--structured", index.structured, "structured record file")->check(CLI::ExistingFile);
    c_index->add_option("--chunks", index.chunks, "chunks.jsonl from ingest")->required()->check(CLI::ExistingFile);
    c_index->add_option("--out", index.out);
    c_index->add_option("--embedder", index.embedder)->check(CLI::IsMember({"test-fnv", "remote"}));
    c_index->add_option("--embed-endpoint", index.endpoint);
    c_index->add_option("--embed-model", index.model);
    c_index->add_option("--dim", index.dimension)->check(CLI::PositiveNumber);

    EngineFlags query_flags;
    std::string query_text;
    std::string query_variant;
    bool query_json = false;
    auto* c_query = app.add_subcommand("query", "Answer one question");
    query_flags.add_to(c_query);
    c_query->add_option("question", query_text)->required();
    c_query->add_option("--variant", query_variant);
    c_query->add_flag("--json", query_json);

    EngineFlags chat_flags;
    std::string chat_variant;
    auto* c_chat = app.add_subcommand("chat", "Interactive question answering");
    chat_flags.add_to(c_chat);
    c_chat->add_option("--variant", chat_variant);

    EngineFlags eval_flags;
    std::string dataset;
    std::string variants = "all";
    std::string report_out = "report.json";
    std::size_t parallelism = 1;
    auto* c_eval = app.add_subcommand("eval", "Score prompt variants against reference answers");
    eval_flags.add_to(c_eval);
    c_eval->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    c_eval->add_option("--variants", variants, "\"all\" or a comma separated list");
    c_eval->add_option("--out", report_out);
    c_eval->add_option("--parallel", parallelism)->check(CLI::PositiveNumber);

    std::string serve_config;
    std::optional<int> serve_port;
    auto* c_serve = app.add_subcommand("serve", "Run the HTTP service");
    c_serve->add_option("--config", serve_config)->required()->check(CLI::ExistingFile);
    c_serve->add_option("--port", serve_port, "override listen.port (0 picks a free port)");

    std::string feedback_log;
    bool feedback_json = false;
    auto* c_feedback = app.add_subcommand("feedback", "Summarize survey responses from a feedback log");
    c_feedback->add_option("--log", feedback_log)->required()->check(CLI::ExistingFile);
    c_feedback->add_flag("--json", feedback_json);

    std::string embed_text;
    std::size_t embed_dim = 1536;
    auto* c_embed = app.add_subcommand("embed", "Print the test-fnv embedding of a text as float64 bit patterns");
    c_embed->add_option("text", embed_text)->required();
    c_embed->add_option("--dim", embed_dim)->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c_ingest) return run_ingest(ingest);
        if (*c_structure) return run_structure(structure);
        if (*c_index) return run_index(index);
        if (*c_query) return run_query(query_flags, query_text, query_variant, query_json);
        if (*c_chat) return run_chat(chat_flags, chat_variant);
        if (*c_eval) return run_eval_cmd(eval_flags, dataset, variants, report_out, parallelism);
        if (*c_serve) return run_serve(serve_config, serve_port);
        if (*c_feedback) return run_feedback(feedback_log, feedback_json);
        if (*c_embed) return run_embed(embed_text, embed_dim);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
