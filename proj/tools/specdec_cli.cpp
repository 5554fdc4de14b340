// Benchmark harness for the schema-aware speculative decoding engine:
//   run             decode a corpus under vanilla/full/ablation configs
//   gen-corpus      synthesize a repeated-tool-call workload
//   check-adherence per-line strict format adherence over an output file
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "specdec/specdec.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw specdec::FileError("cannot read " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw specdec::FileError("cannot write " + path);
    f << content;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

std::string stem_of(const std::string& path) {
    auto dot = path.rfind('.');
    return dot == std::string::npos ? path : path.substr(0, dot);
}

int cmd_run(const std::string& schema_path, const std::string& corpus_path,
            const std::string& model_spec, const std::string& mode, std::uint64_t seed,
            const std::string& ablate, int k, const std::string& suffix_lens,
            const std::string& cont_lens, int budget, long capacity, bool dump_trees,
            bool prewarm, bool prefer_sad, bool recycle_shared, int max_tokens,
            const std::string& out_path, const std::string& store_in,
            const std::string& store_out) {
    using namespace specdec;

    Tokenizer tok;
    ToolSchema schema = parse_tool_docs(read_file(schema_path), schema_path);
    auto records = load_corpus(corpus_path);

    // intern everything up front so model vocab snapshots are complete
    for (const auto& r : records) {
        tok.encode(render_prompt(schema, r.query));
        if (r.gold) tok.encode(*r.gold);
    }

    std::unique_ptr<TargetModel> model;
    if (model_spec == "scripted") {
        auto scripted = std::make_unique<ScriptedModel>(tok.vocab_size(), tok.eos());
        for (const auto& r : records) {
            if (!r.gold) throw Error("scripted model requires gold on every record: " +
                                     r.session_id);
            scripted->add_script(tok.encode(render_prompt(schema, r.query)),
                                 tok.encode(*r.gold));
        }
        model = std::move(scripted);
    } else if (model_spec.rfind("ngram:", 0) == 0) {
        std::string text_path = model_spec.substr(6);
        std::ifstream f(text_path);
        if (!f) throw FileError("cannot read " + text_path);
        std::vector<std::vector<TokenId>> lines;
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) lines.push_back(tok.encode(line));
        auto ngram = std::make_unique<NgramModel>(tok.vocab_size());
        for (auto& l : lines) {
            l.push_back(tok.eos());
            ngram->add_sequence(l);
        }
        model = std::move(ngram);
    } else {
        throw Error("unknown model spec '" + model_spec + "' (scripted | ngram:PATH)");
    }

    HashedBagEmbedding embedder(tok);

    BenchOptions opts;
    opts.engine.retrieval.k = k;
    opts.engine.retrieval.suffix_lengths = parse_int_list(suffix_lens);
    opts.engine.retrieval.continuation_lengths = parse_int_list(cont_lens);
    opts.engine.drafting_budget = static_cast<std::size_t>(budget);
    opts.engine.max_tokens = max_tokens;
    opts.engine.mode = mode == "sample" ? DecodeMode::Sampled : DecodeMode::Greedy;
    opts.engine.recycling_prewarm = prewarm;
    opts.engine.prefer_sad_in_structural = prefer_sad;
    opts.seed = seed;
    opts.capacity = capacity > 0 ? std::optional<std::size_t>(capacity) : std::nullopt;
    opts.dump_trees = dump_trees;
    opts.share_recycling = recycle_shared;

    if (ablate == "none") opts.ablations = {Ablation::None};
    else if (ablate == "no-sad") opts.ablations = {Ablation::NoSad};
    else if (ablate == "no-ras") opts.ablations = {Ablation::NoRas};
    else if (ablate == "no-both") opts.ablations = {Ablation::NoBoth};
    else if (ablate == "all")
        opts.ablations = {Ablation::None, Ablation::NoSad, Ablation::NoRas, Ablation::NoBoth};
    else throw Error("unknown --ablate value '" + ablate + "'");

    if (!store_in.empty()) {
        Datastore loaded;
        load_datastore(loaded, store_in, embedder.dim());
        opts.preload_entries = loaded.snapshot();
    }

    BenchInputs in;
    in.tokenizer = &tok;
    in.model = model.get();
    in.embedder = &embedder;
    in.schema = &schema;
    in.records = &records;

    std::vector<StepLogEntry> step_log;
    std::vector<std::string> dumps;
    RunReport report = run_bench(in, opts, &step_log, dump_trees ? &dumps : nullptr);

    write_file(out_path, report_to_json(report));
    std::string table = report_to_table(report);
    write_file(stem_of(out_path) + ".txt", table);
    {
        std::ofstream log(stem_of(out_path) + "_steps.jsonl");
        for (const auto& e : step_log) {
            nlohmann::ordered_json j;
            j["config"] = e.config;
            j["record"] = e.record;
            j["step"] = e.step;
            j["emitted"] = e.emitted;
            log << j.dump() << "\n";
        }
    }
    if (dump_trees) {
        std::string all;
        for (std::size_t i = 0; i < dumps.size(); ++i)
            all += "=== step tree " + std::to_string(i) + " ===\n" + dumps[i];
        write_file(stem_of(out_path) + "_trees.txt", all);
    }
    if (!store_out.empty()) {
        // replay the full config once more to persist its datastore
        Engine engine(tok, schema, opts.engine);
        Datastore store(opts.capacity);
        std::mt19937_64 seeder(opts.seed);
        for (const auto& r : records)
            engine.generate(*model, embedder, r.query, &store, seeder());
        save_datastore(store, store_out);
    }

    std::cout << table;
    long failures = 0;
    for (const auto& [name, cr] : report.configs)
        if (cr.lossless_checked) failures += cr.lossless_failures;
    if (failures > 0) {
        std::cerr << "losslessness FAILED on " << failures << " record(s)\n";
        return 1;
    }
    return 0;
}

int cmd_gen_corpus(int tools, int reps, std::uint64_t seed, double identical,
                   const std::string& out_path, const std::string& schema_out,
                   const std::string& text_out) {
    using namespace specdec;
    CorpusSpec spec;
    spec.tools = tools;
    spec.repetitions = reps;
    spec.seed = seed;
    spec.identical_repeat_prob = identical;
    auto corpus = gen_corpus(spec);
    save_corpus(corpus.records, out_path);
    if (!schema_out.empty()) write_file(schema_out, corpus.schema_doc);
    if (!text_out.empty()) write_file(text_out, corpus_to_text(corpus));
    std::cout << "wrote " << corpus.records.size() << " records (" << tools << " tools x "
              << reps << " reps)\n";
    return 0;
}

int cmd_check_adherence(const std::string& in_path) {
    using namespace specdec;
    std::ifstream f(in_path);
    if (!f) throw FileError("cannot read " + in_path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    auto summary = check_adherence_lines(lines);
    for (std::size_t i = 0; i < summary.reports.size(); ++i) {
        const auto& r = summary.reports[i];
        std::cout << "line " << (i + 1) << ": "
                  << (r.adherent ? "adherent" : to_string(*r.violation));
        if (r.location) std::cout << " @" << *r.location;
        std::cout << "\n";
    }
    std::printf("adherence rate: %.4f (%ld/%ld)\n", summary.rate(), summary.adherent,
                summary.total);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"schema-aware speculative decoding benchmark harness"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "decode a corpus and report stats");
    std::string schema_path, corpus_path, model_spec = "scripted", mode = "greedy";
    std::string ablate = "all", out_path = "report.json", store_in, store_out;
    std::string suffix_lens = "7,6,5", cont_lens = "32,16,8,8";
    std::uint64_t seed = 0;
    int k = 10, budget = 64, max_tokens = 256;
    long capacity = 1000;
    bool dump_trees = false, prewarm = false, prefer_sad = false, recycle_shared = false;
    run->add_option("--schema", schema_path, "tool documentation JSON")->required();
    run->add_option("--corpus", corpus_path, "corpus JSONL")->required();
    run->add_option("--model", model_spec, "scripted | ngram:PATH");
    run->add_option("--mode", mode, "greedy | sample");
    run->add_option("--seed", seed, "master seed");
    run->add_option("--ablate", ablate, "none | no-sad | no-ras | no-both | all");
    run->add_option("--k", k, "retrieval top-k");
    run->add_option("--suffix-lens", suffix_lens, "suffix lengths, descending");
    run->add_option("--cont-lens", cont_lens, "continuation length schedule");
    run->add_option("--budget", budget, "drafting budget (flattened tree tokens)");
    run->add_option("--capacity", capacity, "datastore capacity (0 = unbounded)");
    run->add_option("--max-tokens", max_tokens, "generation cap per record");
    run->add_flag("--dump-trees", dump_trees, "write per-step draft-tree dumps");
    run->add_flag("--prewarm", prewarm, "teacher-force the recycling matrix on the prompt");
    run->add_flag("--prefer-sad", prefer_sad,
                  "measurement only: schema drafts before retrieval in structural states");
    run->add_flag("--recycle-shared", recycle_shared,
                  "share the recycling matrix across records instead of per-session");
    run->add_option("--store-in", store_in, "load a datastore JSONL before decoding");
    run->add_option("--store-out", store_out, "persist the full-config datastore");
    run->add_option("--out", out_path, "report JSON path");

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "synthesize a tool-call workload");
    int tools = 5, reps = 10;
    double identical = 0.45;
    std::uint64_t gen_seed = 0;
    std::string gen_out = "corpus.jsonl", schema_out, text_out;
    gen->add_option("--tools", tools, "number of tools");
    gen->add_option("--reps", reps, "invocations per tool");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--identical-frac", identical, "probability a repeat reuses a value tuple");
    gen->add_option("--out", gen_out, "corpus JSONL path")->required();
    gen->add_option("--schema-out", schema_out, "tool documentation JSON path");
    gen->add_option("--text-out", text_out, "n-gram training text path");

    // check-adherence
    auto* chk = app.add_subcommand("check-adherence", "strict format adherence per line");
    std::string adherence_in;
    chk->add_option("--in", adherence_in, "text file, one output per line")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(schema_path, corpus_path, model_spec, mode, seed, ablate, k,
                           suffix_lens, cont_lens, budget, capacity, dump_trees, prewarm,
                           prefer_sad, recycle_shared, max_tokens, out_path, store_in,
                           store_out);
        if (gen->parsed())
            return cmd_gen_corpus(tools, reps, gen_seed, identical, gen_out, schema_out,
                                  text_out);
        if (chk->parsed()) return cmd_check_adherence(adherence_in);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
