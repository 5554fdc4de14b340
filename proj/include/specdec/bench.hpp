#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "specdec/engine.hpp"
#include "specdec/errors.hpp"
#include "specdec/model.hpp"
#include "specdec/retrieval.hpp"
#include "specdec/schema.hpp"
#include "specdec/tokenizer.hpp"

namespace specdec {

struct CorpusRecord {
    std::string session_id;
    int turn = 0;
    std::string query;
    std::optional<std::string> gold;
};

// Corpus file: JSON Lines {"session_id": str, "turn": int, "query": str, "gold": str?}
inline std::vector<CorpusRecord> load_corpus(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FileError("cannot read " + path);
    std::vector<CorpusRecord> out;
    std::string line;
    long line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("session_id") || !j.contains("turn") ||
            !j.contains("query"))
            throw ParseError(path + ": bad corpus line", line_no);
        CorpusRecord r;
        r.session_id = j["session_id"].get<std::string>();
        r.turn = j["turn"].get<int>();
        r.query = j["query"].get<std::string>();
        if (j.contains("gold") && j["gold"].is_string()) r.gold = j["gold"].get<std::string>();
        out.push_back(std::move(r));
    }
    return out;
}

inline void save_corpus(const std::vector<CorpusRecord>& records, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FileError("cannot write " + path);
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["session_id"] = r.session_id;
        j["turn"] = r.turn;
        j["query"] = r.query;
        if (r.gold) j["gold"] = *r.gold;
        f << j.dump() << "\n";
    }
}

struct CorpusSpec {
    int tools = 5;
    int repetitions = 10;
    std::uint64_t seed = 0;
    double identical_repeat_prob = 0.45;  // chance a repeat reuses a prior value tuple
};

struct GeneratedCorpus {
    std::string schema_doc;  // tool-documentation JSON
    std::vector<CorpusRecord> records;
    ToolSchema schema;
};

namespace detail {

struct ValuePools {
    std::vector<std::string> users = {"alice", "bob", "carol"};
    std::vector<std::string> cities = {"Berlin", "Paris", "Tokyo", "New York", "Oslo"};
    std::vector<std::string> dates = {"today", "tomorrow", "next monday", "friday evening"};
    std::vector<std::string> subjects = {"team sync", "water the plants", "pay rent",
                                         "quarterly report"};
};

inline std::string json_escape(const std::string& s) {
    return nlohmann::json(s).dump();  // includes surrounding quotes
}

}  // namespace detail

// Synthesizes a repeated-call workload: `tools` synthetic tools, each invoked
// `repetitions` times with paraphrased queries; a slice of the repeats reuses
// an earlier value tuple verbatim so retrieval sees exact recurrences.
// Deterministic per seed. Every tool leads with a shared "user" parameter,
// the common-prefix pattern real APIs show.
inline GeneratedCorpus gen_corpus(const CorpusSpec& spec) {
    if (spec.tools < 1 || spec.repetitions < 1)
        throw Error("gen_corpus: tools and repetitions must be >= 1");
    std::mt19937_64 rng(spec.seed);
    detail::ValuePools pools;

    static const char* kVerbs[] = {"Check", "Book", "Cancel", "Send", "Find",
                                   "Update", "Play", "Plan", "Track", "Rate"};
    static const char* kNouns[] = {"Weather", "Flight", "Reminder", "Message", "Route",
                                   "Playlist", "Hotel", "Meeting", "Package", "Recipe"};

    auto pick = [&rng](const auto& pool) -> std::string {
        return std::string(pool[rng() % std::size(pool)]);
    };

    GeneratedCorpus out;
    nlohmann::ordered_json doc;
    doc["tools"] = nlohmann::ordered_json::array();

    struct ParamSpec {
        std::string name;
        std::string type;
        bool required;
        std::vector<std::string> enum_values;
    };
    std::vector<std::vector<ParamSpec>> tool_params;
    std::vector<std::string> tool_names;

    for (int t = 0; t < spec.tools; ++t) {
        std::string name = std::string(kVerbs[t % 10]) + kNouns[(t / 10 + t) % 10];
        if (std::find(tool_names.begin(), tool_names.end(), name) != tool_names.end())
            name += std::to_string(t);
        tool_names.push_back(name);

        std::vector<ParamSpec> params;
        params.push_back({"user", "string", true, {}});
        params.push_back({"target", "string", true, {}});
        if (rng() % 2 == 0) params.push_back({"when", "string", false, {}});
        if (rng() % 2 == 0)
            params.push_back({"priority", "enum", false, {"low", "normal", "high"}});
        tool_params.push_back(params);

        nlohmann::ordered_json jt;
        jt["name"] = name;
        jt["description"] = "synthetic " + name + " tool";
        nlohmann::ordered_json jp = nlohmann::ordered_json::object();
        for (const auto& p : params) {
            nlohmann::ordered_json jd;
            jd["type"] = p.type;
            jd["required"] = p.required;
            if (!p.enum_values.empty()) jd["enum"] = p.enum_values;
            jp[p.name] = jd;
        }
        jt["parameters"] = jp;
        doc["tools"].push_back(jt);
    }
    out.schema_doc = doc.dump(2);
    out.schema = parse_tool_docs(out.schema_doc);

    static const char* kQueryForms[] = {
        "please run %T for %V",
        "can you use %T with %V",
        "I need %T, %V",
        "use %T now: %V",
        "run %T (%V)",
    };

    struct Tuple {
        std::vector<std::pair<std::string, std::string>> kv;  // name -> JSON-rendered value
        std::string values_text;                              // for the query
    };
    std::vector<std::vector<Tuple>> history(static_cast<std::size_t>(spec.tools));

    auto make_tuple = [&](int t) {
        Tuple tup;
        for (const auto& p : tool_params[static_cast<std::size_t>(t)]) {
            if (!p.required && rng() % 10 < 3) continue;
            std::string raw;
            if (p.name == "user") raw = pick(pools.users);
            else if (p.name == "when") raw = pick(pools.dates);
            else if (!p.enum_values.empty()) raw = p.enum_values[rng() % p.enum_values.size()];
            else raw = (rng() % 2 == 0) ? pick(pools.cities) : pick(pools.subjects);
            tup.kv.emplace_back(p.name, detail::json_escape(raw));
            if (!tup.values_text.empty()) tup.values_text += ", ";
            tup.values_text += p.name + " " + raw;
        }
        return tup;
    };

    // interleave tools so first occurrences spread across the corpus
    for (int rep = 0; rep < spec.repetitions; ++rep) {
        for (int t = 0; t < spec.tools; ++t) {
            auto& past = history[static_cast<std::size_t>(t)];
            Tuple tup;
            const double roll =
                static_cast<double>(rng() >> 11) * 0x1.0p-53;  // uniform [0,1)
            if (!past.empty() && roll < spec.identical_repeat_prob)
                tup = past[rng() % past.size()];
            else
                tup = make_tuple(t);
            past.push_back(tup);

            std::string call = "{\"name\": \"" + tool_names[static_cast<std::size_t>(t)] +
                               "\", \"parameters\": {";
            for (std::size_t i = 0; i < tup.kv.size(); ++i) {
                if (i) call += ", ";
                call += "\"" + tup.kv[i].first + "\": " + tup.kv[i].second;
            }
            call += "}}";

            std::string form = kQueryForms[rng() % 5];
            std::string query = form;
            query.replace(query.find("%T"), 2, tool_names[static_cast<std::size_t>(t)]);
            query.replace(query.find("%V"), 2, tup.values_text);

            CorpusRecord rec;
            rec.session_id = "s" + std::to_string(rep * spec.tools + t);
            rec.turn = 0;
            rec.query = query;
            rec.gold = call + "</tool_call>";
            out.records.push_back(std::move(rec));
        }
    }
    return out;
}

// Training text for the n-gram model: queries and gold calls, one per line.
inline std::string corpus_to_text(const GeneratedCorpus& corpus) {
    std::string out;
    for (const auto& r : corpus.records) {
        out += r.query + "\n";
        if (r.gold) out += "<tool_call>" + *r.gold + "\n";
    }
    return out;
}

struct ConfigReport {
    DecodeStats stats;
    double speedup_proxy = 0.0;  // vanilla forward passes / this config's passes
    DecodeStats repeated;        // subset: records after a tool's first occurrence
    std::vector<DecodeStats> per_record;
    bool lossless_checked = false;
    long lossless_failures = 0;
};

struct RunReport {
    std::map<std::string, ConfigReport> configs;  // keyed by config name
    long records = 0;
};

struct StepLogEntry {
    std::string config;
    std::size_t record = 0;
    std::int64_t step = 0;
    int emitted = 0;
};

enum class Ablation { None, NoSad, NoRas, NoBoth };

inline const char* config_name(Ablation a) {
    switch (a) {
        case Ablation::None: return "full";
        case Ablation::NoSad: return "w/o SAD";
        case Ablation::NoRas: return "w/o RAS";
        case Ablation::NoBoth: return "w/o both";
    }
    return "?";
}

inline void apply_ablation(EngineConfig& cfg, Ablation a) {
    switch (a) {
        case Ablation::None: break;
        case Ablation::NoSad: cfg.disable_sad = true; break;
        case Ablation::NoRas: cfg.disable_ras = true; break;
        case Ablation::NoBoth: cfg.disable_both(); break;
    }
}

struct BenchOptions {
    EngineConfig engine;
    std::vector<Ablation> ablations = {Ablation::None};
    std::uint64_t seed = 0;
    std::optional<std::size_t> capacity = 1000;  // datastore bound
    bool dump_trees = false;
    bool share_recycling = false;  // one adjacency matrix across a config's records
    std::vector<DatastoreEntry> preload_entries;  // seeds each config's store
};

struct BenchInputs {
    Tokenizer* tokenizer = nullptr;
    const TargetModel* model = nullptr;
    const EmbeddingProvider* embedder = nullptr;
    const ToolSchema* schema = nullptr;
    const std::vector<CorpusRecord>* records = nullptr;
};

// Runs vanilla plus each requested configuration over the corpus, with a
// fresh datastore per configuration. Greedy runs cross-check every record
// against the vanilla output; a mismatch is a losslessness failure.
inline RunReport run_bench(const BenchInputs& in, const BenchOptions& opts,
                           std::vector<StepLogEntry>* step_log = nullptr,
                           std::vector<std::string>* tree_dumps = nullptr) {
    if (!in.tokenizer || !in.model || !in.embedder || !in.schema || !in.records)
        throw Error("run_bench: missing inputs");
    const auto& records = *in.records;

    RunReport report;
    report.records = static_cast<long>(records.size());

    // which records are repeats of an earlier tool invocation
    std::vector<char> is_repeat(records.size(), 0);
    {
        std::map<std::string, int> seen;
        for (std::size_t i = 0; i < records.size(); ++i) {
            std::string tool = "?";
            if (records[i].gold) {
                auto j = nlohmann::json::parse(*records[i].gold, nullptr, false);
                if (!j.is_discarded() && j.is_object() && j.contains("name"))
                    tool = j["name"].get<std::string>();
            }
            is_repeat[i] = seen[tool]++ > 0 ? 1 : 0;
        }
    }

    // vanilla baseline
    ConfigReport vanilla;
    std::vector<std::vector<TokenId>> vanilla_tokens;
    {
        EngineConfig cfg = opts.engine;
        Engine engine(*in.tokenizer, *in.schema, cfg);
        std::mt19937_64 seeder(opts.seed);
        for (std::size_t i = 0; i < records.size(); ++i) {
            auto res = engine.generate_vanilla(*in.model, records[i].query, seeder());
            if (step_log)
                step_log->push_back({"vanilla", i, res.stats.decode_steps,
                                     static_cast<int>(res.stats.emitted_tokens)});
            vanilla.per_record.push_back(res.stats);
            vanilla.stats.merge(res.stats);
            if (is_repeat[i]) vanilla.repeated.merge(res.stats);
            vanilla_tokens.push_back(std::move(res.tokens));
        }
        vanilla.speedup_proxy = 1.0;
    }

    for (Ablation a : opts.ablations) {
        EngineConfig cfg = opts.engine;
        apply_ablation(cfg, a);
        cfg.collect_tree_dumps = opts.dump_trees;
        Engine engine(*in.tokenizer, *in.schema, cfg);
        Datastore store(opts.capacity);
        for (const auto& e : opts.preload_entries) store.insert_raw(e);

        AdjacencyMatrix shared_matrix(
            std::max(in.model->vocab_size(), in.tokenizer->vocab_size()),
            cfg.recycle_width);
        if (opts.share_recycling) engine.share_recycling_matrix(&shared_matrix);

        ConfigReport cr;
        std::mt19937_64 seeder(opts.seed);
        for (std::size_t i = 0; i < records.size(); ++i) {
            const std::uint64_t record_seed = seeder();
            auto res = engine.generate(*in.model, *in.embedder, records[i].query, &store,
                                       record_seed);
            if (cfg.mode == DecodeMode::Greedy) {
                cr.lossless_checked = true;
                if (vanilla_tokens[i] != res.tokens) cr.lossless_failures += 1;
            }
            if (step_log) {
                std::int64_t step_no = 0;
                for (auto [len, count] : res.stats.acceptance_histogram)
                    for (std::int64_t c = 0; c < count; ++c)
                        step_log->push_back({config_name(a), i, ++step_no, len});
            }
            if (tree_dumps)
                tree_dumps->insert(tree_dumps->end(), res.tree_dumps.begin(),
                                   res.tree_dumps.end());
            cr.per_record.push_back(res.stats);
            cr.stats.merge(res.stats);
            if (is_repeat[i]) cr.repeated.merge(res.stats);
        }
        cr.speedup_proxy = cr.stats.forward_passes > 0
                               ? static_cast<double>(vanilla.stats.forward_passes) /
                                     static_cast<double>(cr.stats.forward_passes)
                               : 0.0;
        report.configs[config_name(a)] = std::move(cr);
    }

    report.configs["vanilla"] = std::move(vanilla);
    return report;
}

namespace detail {

inline nlohmann::ordered_json stats_json(const DecodeStats& s) {
    nlohmann::ordered_json j;
    j["mat"] = s.mat();
    j["forward_passes"] = s.forward_passes;
    j["emitted"] = s.emitted_tokens;
    nlohmann::ordered_json hist = nlohmann::ordered_json::object();
    for (auto [len, count] : s.acceptance_histogram) hist[std::to_string(len)] = count;
    j["histogram"] = hist;
    nlohmann::ordered_json per_state = nlohmann::ordered_json::object();
    for (auto [tag, count] : s.per_state) per_state[to_string(tag)] = count;
    j["per_state"] = per_state;
    nlohmann::ordered_json per_source = nlohmann::ordered_json::object();
    for (auto [src, count] : s.per_source) per_source[to_string(src)] = count;
    j["per_source"] = per_source;
    return j;
}

}  // namespace detail

// Report JSON: {"format_version": 1, "configs": {name: {"mat": ...,
// "forward_passes": ..., "emitted": ..., "histogram": {...}, "per_state":
// {...}, "per_source": {...}, "speedup_proxy": ...}}}
inline std::string report_to_json(const RunReport& report) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["records"] = report.records;
    nlohmann::ordered_json configs = nlohmann::ordered_json::object();
    // fixed rendering order
    static const char* kOrder[] = {"vanilla", "full", "w/o SAD", "w/o RAS", "w/o both"};
    auto emit = [&](const std::string& name, const ConfigReport& cr) {
        nlohmann::ordered_json jc = detail::stats_json(cr.stats);
        jc["speedup_proxy"] = cr.speedup_proxy;
        jc["max_accepted"] = cr.stats.max_accepted;
        jc["datastore_inserts"] = cr.stats.datastore_inserts;
        if (cr.lossless_checked) jc["lossless_failures"] = cr.lossless_failures;
        jc["repeated_subset"] = detail::stats_json(cr.repeated);
        configs[name] = jc;
    };
    for (const char* name : kOrder) {
        auto it = report.configs.find(name);
        if (it != report.configs.end()) emit(name, it->second);
    }
    for (const auto& [name, cr] : report.configs)
        if (!configs.contains(name)) emit(name, cr);
    j["configs"] = configs;
    return j.dump(2);
}

// Fixed column order mirroring the usual efficiency tables.
inline std::string report_to_table(const RunReport& report) {
    std::ostringstream os;
    os << "config        #MAT    forward_passes  speedup_proxy\n";
    static const char* kOrder[] = {"vanilla", "full", "w/o SAD", "w/o RAS", "w/o both"};
    auto row = [&](const std::string& name, const ConfigReport& cr) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-12s %6.2f %15lld %14.2f\n", name.c_str(),
                      cr.stats.mat(), static_cast<long long>(cr.stats.forward_passes),
                      cr.speedup_proxy);
        os << buf;
    };
    for (const char* name : kOrder) {
        auto it = report.configs.find(name);
        if (it != report.configs.end()) row(name, it->second);
    }
    for (const auto& [name, cr] : report.configs)
        if (std::find_if(std::begin(kOrder), std::end(kOrder), [&](const char* k) {
                return name == k;
            }) == std::end(kOrder))
            row(name, cr);
    return os.str();
}

struct AdherenceSummary {
    long total = 0;
    long adherent = 0;
    std::map<std::string, long> violations;
    std::vector<AdherenceReport> reports;

    double rate() const { return total > 0 ? static_cast<double>(adherent) / total : 0.0; }
};

// Per-line adherence check over a text file of model outputs.
inline AdherenceSummary check_adherence_lines(const std::vector<std::string>& lines) {
    AdherenceSummary s;
    for (const auto& line : lines) {
        auto r = check_format_adherence(line);
        s.total += 1;
        if (r.adherent) s.adherent += 1;
        else s.violations[to_string(*r.violation)] += 1;
        s.reports.push_back(r);
    }
    return s;
}

}  // namespace specdec
