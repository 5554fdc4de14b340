#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "specdec/draft.hpp"
#include "specdec/errors.hpp"
#include "specdec/fsm.hpp"
#include "specdec/model.hpp"
#include "specdec/recycle.hpp"
#include "specdec/retrieval.hpp"
#include "specdec/schema.hpp"
#include "specdec/tokenizer.hpp"
#include "specdec/tree.hpp"
#include "specdec/verify.hpp"

namespace specdec {

struct EngineConfig {
    RetrievalConfig retrieval;
    bool disable_sad = false;
    bool disable_ras = false;
    std::size_t drafting_budget = 64;
    int max_tokens = 256;
    DecodeMode mode = DecodeMode::Greedy;
    bool recycling = true;
    bool pld_fallback = true;
    bool recycling_prewarm = false;
    int recycle_width = 8;
    // Algorithm order checks retrieval before schema drafting even in
    // structural states; this measurement-only flag swaps that order.
    bool prefer_sad_in_structural = false;
    bool collect_tree_dumps = false;

    void disable_both() {
        disable_sad = true;
        disable_ras = true;
    }
};

struct DecodeStats {
    std::int64_t forward_passes = 0;
    std::int64_t decode_steps = 0;
    std::int64_t emitted_tokens = 0;
    std::map<int, std::int64_t> acceptance_histogram;   // step count by emitted length
    std::map<DraftSource, std::int64_t> per_source;     // accepted tokens by draft source
    std::map<StateTag, std::int64_t> per_state;         // accepted tokens by FSM state
    std::vector<int> first_two_steps;                   // emitted lengths of steps 1-2
    std::int64_t datastore_inserts = 0;
    std::int64_t trimmed_candidates = 0;
    std::int64_t demotions = 0;                         // schema-violation fallbacks
    int max_accepted = 0;                               // longest accepted run of any step

    double mat() const {
        return forward_passes > 0 ? static_cast<double>(emitted_tokens) / forward_passes : 0.0;
    }

    void merge(const DecodeStats& o) {
        forward_passes += o.forward_passes;
        decode_steps += o.decode_steps;
        emitted_tokens += o.emitted_tokens;
        for (auto [k, v] : o.acceptance_histogram) acceptance_histogram[k] += v;
        for (auto [k, v] : o.per_source) per_source[k] += v;
        for (auto [k, v] : o.per_state) per_state[k] += v;
        first_two_steps.insert(first_two_steps.end(), o.first_two_steps.begin(),
                               o.first_two_steps.end());
        datastore_inserts += o.datastore_inserts;
        trimmed_candidates += o.trimmed_candidates;
        demotions += o.demotions;
        max_accepted = std::max(max_accepted, o.max_accepted);
    }
};

enum class Termination : std::uint8_t { Eos, BudgetExceeded };

struct GenerateResult {
    std::vector<TokenId> tokens;  // generated only, prompt excluded
    std::string text;
    DecodeStats stats;
    Termination status = Termination::Eos;
    std::vector<std::string> tree_dumps;
};

// PLD-style fallback: suffix-match the combined context-plus-generated
// sequence against itself and draft the continuations of earlier occurrences.
inline std::vector<DraftCandidate> pld_context_match(std::span<const TokenId> context_and_generated,
                                                     const RetrievalConfig& config) {
    RetrievedCall self;
    self.entry_id = -1;
    self.y.assign(context_and_generated.begin(), context_and_generated.end());
    std::vector<RetrievedCall> corpus;
    corpus.push_back(std::move(self));
    auto matches = suffix_match(context_and_generated, corpus, config);
    return extract_continuations(matches, corpus, config, DraftSource::ContextPld);
}

// The decode loop: retrieval-augmented speculation when a suffix match
// exists, otherwise schema drafting in structural FSM states, otherwise the
// recycling tree or PLD context matching, otherwise a single vanilla step.
// Accepted runs always pass through the FSM, completed adherent calls feed
// the datastore, and acceptance never depends on where drafts came from.
class Engine {
public:
    Engine(Tokenizer& tok, ToolSchema schema, EngineConfig cfg = {})
        : tok_(&tok), schema_(std::move(schema)),
          fsm_(compile_schema(schema_, tok)), cfg_(cfg) {
        cfg_.retrieval.validate();
    }

    const EngineConfig& config() const { return cfg_; }
    const ToolSchema& schema() const { return schema_; }
    const Fsm& fsm() const { return fsm_; }

    // Opt-in cross-session recycling matrix (default is per-session).
    void share_recycling_matrix(AdjacencyMatrix* matrix) { shared_matrix_ = matrix; }

    GenerateResult generate(const TargetModel& model, const EmbeddingProvider& embedder,
                            std::string_view query, Datastore* store,
                            std::uint64_t seed = 0) const {
        Session s(*this, query, seed);

        // retrieval snapshot: once per query, before the loop
        if (ras_on(store)) {
            s.h_query = embed(tok_->encode(std::string(query)), embedder);
            for (std::int64_t id : topk(s.h_query, *store, cfg_.retrieval.k)) {
                auto e = store->find(id);
                if (e) s.retrieved.push_back({e->id, e->y});
            }
        }

        AdjacencyMatrix local_matrix(std::max(model.vocab_size(), tok_->vocab_size()),
                                     cfg_.recycle_width);
        AdjacencyMatrix* matrix = shared_matrix_ ? shared_matrix_ : &local_matrix;
        if (cfg_.recycling && cfg_.recycling_prewarm) prewarm(model, s, *matrix);

        while (static_cast<int>(s.generated.size()) < cfg_.max_tokens) {
            auto drafts = collect_drafts(s, *matrix);
            if (drafts.empty()) {
                // single-token step; its distribution still refreshes the
                // recycling matrix, otherwise a cold matrix never warms
                Distribution d = model.next_distribution(s.full_sequence());
                s.counter.passes += 1;
                if (cfg_.recycling) {
                    TokenId prev = s.generated.empty() ? s.context.back() : s.generated.back();
                    std::vector<StepOutput> outs = {{prev, top_w_tokens(d, matrix->width())}};
                    update_matrix(*matrix, outs);
                }
                TokenId t = detail::pick(d, cfg_.mode, &s.rng);
                finish_step(s, {t}, 0, nullptr, store);
            } else {
                DraftTree tree = pack(drafts, cfg_.drafting_budget);
                s.stats.trimmed_candidates += tree.trimmed;
                if (cfg_.collect_tree_dumps) s.dumps.push_back(render_tree(tree, *tok_));
                auto dists = forward_tree(model, s.full_sequence(), tree, &s.counter);
                if (cfg_.recycling) refresh_matrix(*matrix, s, tree, dists);
                auto res = accept_from(dists, tree, cfg_.mode, &s.rng);
                std::vector<TokenId> run = res.accepted;
                run.push_back(res.correction);
                finish_step(s, run, res.accepted.size(), &tree, store);
            }
            if (s.saw_eos) break;
        }

        GenerateResult out;
        out.tokens = std::move(s.generated);
        out.text = tok_->decode(out.tokens);
        out.stats = std::move(s.stats);
        out.stats.forward_passes = s.counter.passes;
        out.status = s.saw_eos ? Termination::Eos : Termination::BudgetExceeded;
        out.tree_dumps = std::move(s.dumps);
        return out;
    }

    // Baseline: one token per forward pass, same prompt. mat() == 1 exactly.
    GenerateResult generate_vanilla(const TargetModel& model, std::string_view query,
                                    std::uint64_t seed = 0) const {
        std::vector<TokenId> context = tok_->encode(render_prompt(schema_, query));
        std::mt19937_64 rng(seed);
        ForwardCounter counter;
        GenerateResult out;
        out.status = Termination::BudgetExceeded;
        std::vector<TokenId> seq = context;
        while (static_cast<int>(out.tokens.size()) < cfg_.max_tokens) {
            TokenId t = vanilla_step(model, seq, cfg_.mode, &rng, &counter);
            out.tokens.push_back(t);
            seq.push_back(t);
            out.stats.decode_steps += 1;
            out.stats.emitted_tokens += 1;
            out.stats.acceptance_histogram[1] += 1;
            if (out.stats.decode_steps <= 2) out.stats.first_two_steps.push_back(1);
            if (t == tok_->eos()) {
                out.status = Termination::Eos;
                break;
            }
        }
        out.stats.forward_passes = counter.passes;
        out.text = tok_->decode(out.tokens);
        return out;
    }

private:
    struct Session {
        Session(const Engine& eng, std::string_view query, std::uint64_t seed) : rng(seed) {
            context = eng.tok_->encode(render_prompt(eng.schema_, query));
            state = eng.fsm_.initial();
            // the rendered prompt ends with the call trigger: fold it so the
            // first decode step starts in the tool-name state
            if (!context.empty() && context.back() == eng.fsm_.compiled().call_open) {
                auto adv = eng.fsm_.advance(state, std::span(&context.back(), 1));
                state = adv.state;
                call_start = 0;
            }
        }

        std::vector<TokenId> full_sequence() const {
            std::vector<TokenId> seq = context;
            seq.insert(seq.end(), generated.begin(), generated.end());
            return seq;
        }

        std::vector<TokenId> context;
        std::vector<TokenId> generated;
        FsmState state;
        bool demoted = false;
        std::int64_t call_start = -1;  // index into generated, -1 = outside a call
        std::vector<float> h_query;
        std::vector<RetrievedCall> retrieved;
        std::mt19937_64 rng;
        ForwardCounter counter;
        DecodeStats stats;
        std::vector<std::string> dumps;
        bool saw_eos = false;
    };

    bool ras_on(const Datastore* store) const { return !cfg_.disable_ras && store != nullptr; }

    bool structural(const FsmState& state) const {
        return !fsm_.legal_continuations(state).open_ended;
    }

    std::vector<DraftCandidate> collect_drafts(Session& s, const AdjacencyMatrix& matrix) const {
        std::vector<DraftCandidate> drafts;
        const bool sad_ready = !cfg_.disable_sad && !s.demoted && structural(s.state);

        auto try_ras = [&]() {
            if (s.retrieved.empty() ||
                static_cast<int>(s.generated.size()) < cfg_.retrieval.min_suffix())
                return;
            auto matches = suffix_match(s.generated, s.retrieved, cfg_.retrieval);
            drafts = extract_continuations(matches, s.retrieved, cfg_.retrieval);
        };
        auto try_sad = [&]() {
            if (sad_ready) drafts = schema_candidates(fsm_, s.state, cfg_.drafting_budget);
        };

        if (cfg_.prefer_sad_in_structural && sad_ready) {
            try_sad();
            if (drafts.empty()) try_ras();
        } else {
            try_ras();
            if (drafts.empty()) try_sad();
        }
        if (!drafts.empty()) return drafts;

        if (cfg_.recycling) {
            TokenId root = s.generated.empty() ? s.context.back() : s.generated.back();
            if (matrix.row_warm(root))
                drafts = bfs_draft(matrix, root, StaticTreeTemplate::default_template());
        }
        if (drafts.empty() && cfg_.pld_fallback) {
            drafts = pld_context_match(s.full_sequence(), cfg_.retrieval);
        }
        return drafts;
    }

    void prewarm(const TargetModel& model, Session& s, AdjacencyMatrix& matrix) const {
        auto dists = model.forward_prompt(s.context);
        s.counter.passes += 1;  // one teacher-forced invocation
        std::vector<StepOutput> outs;
        outs.reserve(dists.size());
        for (std::size_t i = 0; i < s.context.size(); ++i)
            outs.push_back({s.context[i], top_w_tokens(dists[i], matrix.width())});
        update_matrix(matrix, outs);
    }

    void refresh_matrix(AdjacencyMatrix& matrix, const Session& s, const DraftTree& tree,
                        const std::vector<Distribution>& dists) const {
        std::vector<StepOutput> outs;
        outs.reserve(dists.size());
        TokenId ctx_last = s.generated.empty() ? s.context.back() : s.generated.back();
        outs.push_back({ctx_last, top_w_tokens(dists[0], matrix.width())});
        for (std::size_t i = 0; i < tree.size(); ++i)
            outs.push_back({tree.tokens[i], top_w_tokens(dists[i + 1], matrix.width())});
        update_matrix(matrix, outs);
    }

    // Appends one step's emitted run: truncates at eos and at the token
    // budget, folds the FSM (demoting on illegal tokens and re-arming at the
    // next call trigger), updates stats, and inserts completed calls.
    void finish_step(Session& s, std::vector<TokenId> run, std::size_t accepted_len,
                     const DraftTree* tree, Datastore* store) const {
        const std::size_t remaining =
            static_cast<std::size_t>(cfg_.max_tokens) - s.generated.size();
        if (run.size() > remaining) run.resize(remaining);
        for (std::size_t i = 0; i < run.size(); ++i) {
            if (run[i] == tok_->eos()) {
                run.resize(i + 1);
                s.saw_eos = true;
                break;
            }
        }
        accepted_len = std::min(accepted_len, run.size());

        // per-source attribution for the surviving accepted tokens
        if (tree != nullptr && accepted_len > 0) {
            int node = -1;
            std::size_t counted = 0;
            // re-walk the accepted path through the trie
            std::vector<std::vector<int>> kids(tree->size());
            std::vector<int> roots;
            for (std::size_t i = 0; i < tree->size(); ++i) {
                if (tree->parent[i] < 0) roots.push_back(static_cast<int>(i));
                else kids[static_cast<std::size_t>(tree->parent[i])].push_back(static_cast<int>(i));
            }
            const std::vector<int>* frontier = &roots;
            while (counted < accepted_len) {
                int next = -1;
                for (int child : *frontier)
                    if (tree->tokens[static_cast<std::size_t>(child)] == run[counted]) next = child;
                if (next < 0) break;
                s.stats.per_source[tree->source_of[static_cast<std::size_t>(next)]] += 1;
                node = next;
                frontier = &kids[static_cast<std::size_t>(node)];
                ++counted;
            }
        }

        const std::size_t base = s.generated.size();
        s.generated.insert(s.generated.end(), run.begin(), run.end());
        fold_fsm(s, run, base, accepted_len, store);

        s.stats.decode_steps += 1;
        s.stats.emitted_tokens += static_cast<std::int64_t>(run.size());
        s.stats.acceptance_histogram[static_cast<int>(run.size())] += 1;
        s.stats.max_accepted = std::max(s.stats.max_accepted, static_cast<int>(accepted_len));
        if (s.stats.decode_steps <= 2)
            s.stats.first_two_steps.push_back(static_cast<int>(run.size()));
    }

    void fold_fsm(Session& s, std::span<const TokenId> run, std::size_t base,
                  std::size_t accepted_len, Datastore* store) const {
        std::size_t i = 0;
        while (i < run.size()) {
            if (s.demoted) {
                if (run[i] == fsm_.compiled().call_open) {
                    // a fresh call re-arms schema tracking
                    s.demoted = false;
                    s.state = fsm_.initial();
                } else {
                    if (i < accepted_len) s.stats.per_state[StateTag::Others] += 1;
                    ++i;
                    continue;
                }
            }
            auto adv = fsm_.advance(s.state, run.subspan(i));
            s.state = adv.state;
            for (std::size_t j = 0; j < adv.tags.size(); ++j)
                if (i + j < accepted_len) s.stats.per_state[adv.tags[j]] += 1;
            for (const auto& ev : adv.events) {
                const std::size_t abs = base + i + ev.index;
                if (ev.kind == FsmEventKind::CallOpened) {
                    s.call_start = static_cast<std::int64_t>(abs) + 1;
                } else if (ev.kind == FsmEventKind::CallCompleted) {
                    complete_call(s, abs, store);
                }
            }
            if (adv.illegal_at.has_value()) {
                s.demoted = true;
                s.stats.demotions += 1;
                s.call_start = -1;  // the broken call is never banked
                i += *adv.illegal_at;  // the offending token folds as free text
            } else {
                i += adv.tags.size();
            }
        }
    }

    // Inserts the just-completed call (generated[call_start .. end_index])
    // when it passes the adherence gate. A call that completed structurally
    // but decodes to non-adherent text is simply not banked.
    void complete_call(Session& s, std::size_t end_index, Datastore* store) const {
        const std::int64_t start = s.call_start;
        s.call_start = -1;
        if (start < 0 || !ras_on(store)) return;
        std::vector<TokenId> y(s.generated.begin() + start,
                               s.generated.begin() + static_cast<std::int64_t>(end_index) + 1);
        if (y.empty()) return;
        try {
            store->insert(s.h_query, std::move(y), *tok_);
            s.stats.datastore_inserts += 1;
        } catch (const NotAdherentError&) {
        }
    }

    Tokenizer* tok_;
    ToolSchema schema_;
    Fsm fsm_;
    EngineConfig cfg_;
    AdjacencyMatrix* shared_matrix_ = nullptr;
};

}  // namespace specdec
