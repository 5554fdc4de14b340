#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "specdec/bench.hpp"

using namespace specdec;

namespace {

ScriptedModel build_scripted(Tokenizer& tok, const ToolSchema& schema,
                             const std::vector<CorpusRecord>& records) {
    std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> enc;
    for (const auto& r : records)
        enc.emplace_back(tok.encode(render_prompt(schema, r.query)), tok.encode(*r.gold));
    ScriptedModel m(tok.vocab_size(), tok.eos());
    for (auto& [p, g] : enc) m.add_script(p, g);
    return m;
}

}  // namespace

TEST_CASE("gen_corpus is deterministic and shaped as requested") {
    CorpusSpec spec;
    spec.tools = 5;
    spec.repetitions = 10;
    spec.seed = 3;
    auto a = gen_corpus(spec);
    auto b = gen_corpus(spec);
    CHECK(a.schema_doc == b.schema_doc);
    REQUIRE(a.records.size() == 50);
    REQUIRE(b.records.size() == 50);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].query == b.records[i].query);
        CHECK(a.records[i].gold == b.records[i].gold);
    }
    // every gold is adherent once the close marker is stripped
    for (const auto& r : a.records) {
        REQUIRE(r.gold.has_value());
        auto body = r.gold->substr(0, r.gold->find("</tool_call>"));
        CHECK(check_format_adherence(body).adherent);
    }
    // average tool repetition = reps
    auto schema = parse_tool_docs(a.schema_doc);
    CHECK(schema.tools.size() == 5);
}

TEST_CASE("reps = 1 means no repeated calls") {
    CorpusSpec spec;
    spec.tools = 3;
    spec.repetitions = 1;
    auto c = gen_corpus(spec);
    CHECK(c.records.size() == 3);
}

TEST_CASE("corpus files round-trip") {
    namespace fs = std::filesystem;
    CorpusSpec spec;
    spec.tools = 2;
    spec.repetitions = 2;
    auto c = gen_corpus(spec);
    auto path = (fs::temp_directory_path() / "specdec_corpus_test.jsonl").string();
    save_corpus(c.records, path);
    auto back = load_corpus(path);
    REQUIRE(back.size() == c.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].session_id == c.records[i].session_id);
        CHECK(back[i].query == c.records[i].query);
        CHECK(back[i].gold == c.records[i].gold);
    }
    fs::remove(path);
}

TEST_CASE("run_bench produces a lossless full config that beats vanilla") {
    CorpusSpec spec;
    spec.tools = 3;
    spec.repetitions = 4;
    spec.seed = 9;
    auto corpus = gen_corpus(spec);

    Tokenizer tok;
    auto schema = parse_tool_docs(corpus.schema_doc);
    auto model = build_scripted(tok, schema, corpus.records);
    HashedBagEmbedding embedder(tok);

    BenchInputs in;
    in.tokenizer = &tok;
    in.model = &model;
    in.embedder = &embedder;
    in.schema = &schema;
    in.records = &corpus.records;

    BenchOptions opts;
    opts.ablations = {Ablation::None, Ablation::NoBoth};

    std::vector<StepLogEntry> steps;
    auto report = run_bench(in, opts, &steps);

    REQUIRE(report.configs.count("vanilla") == 1);
    REQUIRE(report.configs.count("full") == 1);
    REQUIRE(report.configs.count("w/o both") == 1);

    const auto& vanilla = report.configs.at("vanilla");
    const auto& full = report.configs.at("full");
    CHECK(vanilla.stats.mat() == 1.0);
    CHECK(full.lossless_checked);
    CHECK(full.lossless_failures == 0);
    CHECK(full.stats.mat() > 1.0);
    CHECK(full.speedup_proxy > 1.0);

    // the report's mat is recomputable from the raw per-step log
    std::map<std::string, std::pair<long, long>> acc;  // config -> (emitted, steps)
    for (const auto& e : steps) {
        acc[e.config].first += e.emitted;
        acc[e.config].second += 1;
    }
    CHECK(acc.count("full") == 1);
    CHECK(acc["full"].first == full.stats.emitted_tokens);
    CHECK(acc["full"].second == full.stats.decode_steps);
}

TEST_CASE("report json is reproducible and carries the required fields") {
    CorpusSpec spec;
    spec.tools = 2;
    spec.repetitions = 2;
    auto corpus = gen_corpus(spec);

    auto run_once = [&]() {
        Tokenizer tok;
        auto schema = parse_tool_docs(corpus.schema_doc);
        auto model = build_scripted(tok, schema, corpus.records);
        HashedBagEmbedding embedder(tok);
        BenchInputs in{&tok, &model, &embedder, &schema, &corpus.records};
        BenchOptions opts;
        return report_to_json(run_bench(in, opts));
    };
    auto a = run_once();
    auto b = run_once();
    CHECK(a == b);

    auto j = nlohmann::json::parse(a);
    CHECK(j["format_version"] == 1);
    REQUIRE(j["configs"].contains("full"));
    const auto& full = j["configs"]["full"];
    for (const char* key :
         {"mat", "forward_passes", "emitted", "histogram", "per_state", "per_source",
          "speedup_proxy"})
        CHECK(full.contains(key));
    // histogram totals match emitted
    long total = 0;
    for (auto it = full["histogram"].begin(); it != full["histogram"].end(); ++it)
        total += std::stol(it.key()) * it.value().get<long>();
    CHECK(total == full["emitted"].get<long>());
}

TEST_CASE("adherence summary over mixed lines") {
    std::vector<std::string> lines = {
        R"({"name": "A", "parameters": {}})",
        R"(```json {"name": "A", "parameters": {}} ```)",
        R"({"name": "B", "parameters": {"x": 1}})",
    };
    auto s = check_adherence_lines(lines);
    CHECK(s.total == 3);
    CHECK(s.adherent == 2);
    CHECK(s.rate() == Catch::Approx(2.0 / 3.0));
    CHECK(s.violations.at("markdown_fence") == 1);
}

TEST_CASE("table rendering lists configs in fixed order") {
    CorpusSpec spec;
    spec.tools = 2;
    spec.repetitions = 2;
    auto corpus = gen_corpus(spec);
    Tokenizer tok;
    auto schema = parse_tool_docs(corpus.schema_doc);
    auto model = build_scripted(tok, schema, corpus.records);
    HashedBagEmbedding embedder(tok);
    BenchInputs in{&tok, &model, &embedder, &schema, &corpus.records};
    BenchOptions opts;
    opts.ablations = {Ablation::None, Ablation::NoSad};
    auto table = report_to_table(run_bench(in, opts));
    auto v = table.find("vanilla");
    auto f = table.find("full");
    auto ws = table.find("w/o SAD");
    REQUIRE(v != std::string::npos);
    REQUIRE(f != std::string::npos);
    REQUIRE(ws != std::string::npos);
    CHECK(v < f);
    CHECK(f < ws);
}
