#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "specdec/errors.hpp"
#include "specdec/fsm.hpp"
#include "specdec/model.hpp"
#include "specdec/tree.hpp"
#include "specdec/types.hpp"

namespace specdec {

enum class DecodeMode : std::uint8_t { Greedy, Sampled };

namespace detail {

inline TokenId argmax(const Distribution& d) {
    TokenId best = 0;
    for (TokenId t = 1; t < static_cast<TokenId>(d.size()); ++t)
        if (d[static_cast<std::size_t>(t)] > d[static_cast<std::size_t>(best)]) best = t;
    return best;
}

// platform-independent uniform in [0, 1)
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline TokenId sample(const Distribution& d, std::mt19937_64& rng) {
    double u = uniform01(rng);
    double acc = 0.0;
    for (TokenId t = 0; t < static_cast<TokenId>(d.size()); ++t) {
        acc += d[static_cast<std::size_t>(t)];
        if (u < acc) return t;
    }
    return static_cast<TokenId>(d.size()) - 1;
}

inline TokenId pick(const Distribution& d, DecodeMode mode, std::mt19937_64* rng) {
    return mode == DecodeMode::Greedy ? argmax(d) : sample(d, *rng);
}

}  // namespace detail

struct AcceptanceResult {
    std::vector<TokenId> accepted;
    // token drawn at the first rejection point, or the bonus token after a
    // fully accepted leaf; always present, so every step emits >= 1 token
    TokenId correction = -1;
    std::optional<std::size_t> accepted_leaf;          // candidate fully consumed, if any
    std::map<DraftSource, int> per_source_lengths;     // accepted tokens by draft source
    std::map<StateTag, int> per_state_lengths;         // filled by the decode loop
};

// Longest-prefix selection against precomputed distributions: walk the tree
// from the context position; drafts are hard token proposals, and at each
// position the target's own pick (argmax, or a single sample from its
// distribution) must equal a child token for the walk to continue.
// Acceptance therefore emits exactly the target's greedy trajectory in
// greedy mode and an exact target-distribution sample in sampled mode, no
// matter where the drafts came from.
inline AcceptanceResult accept_from(const std::vector<Distribution>& dists,
                                    const DraftTree& tree, DecodeMode mode,
                                    std::mt19937_64* rng = nullptr) {
    std::vector<std::vector<int>> kids(tree.size());
    std::vector<int> roots;
    for (std::size_t i = 0; i < tree.size(); ++i) {
        if (tree.parent[i] < 0) roots.push_back(static_cast<int>(i));
        else kids[static_cast<std::size_t>(tree.parent[i])].push_back(static_cast<int>(i));
    }

    AcceptanceResult res;
    int cur = -1;  // -1 = context position
    const std::vector<int>* frontier = &roots;
    while (true) {
        const Distribution& d = dists[static_cast<std::size_t>(cur + 1)];
        TokenId want = detail::pick(d, mode, rng);
        int next = -1;
        for (int child : *frontier) {
            if (tree.tokens[static_cast<std::size_t>(child)] == want) {
                if (next != -1) throw Error("duplicate sibling token in draft tree");
                next = child;
            }
        }
        if (next == -1) {
            res.correction = want;  // rejection (or bonus draw at a leaf)
            break;
        }
        res.accepted.push_back(want);
        res.per_source_lengths[tree.source_of[static_cast<std::size_t>(next)]] += 1;
        cur = next;
        frontier = &kids[static_cast<std::size_t>(cur)];
    }

    if (cur >= 0) {
        for (std::size_t c = 0; c < tree.leaf_paths.size(); ++c) {
            const auto& path = tree.leaf_paths[c];
            if (!path.empty() && path.back() == cur && path.size() == res.accepted.size()) {
                res.accepted_leaf = c;
                break;
            }
        }
    }
    return res;
}

// One verification pass over the tree: exactly one forward_tree call, then
// longest accepted prefix plus the correction/bonus token.
inline AcceptanceResult verify_and_accept(const TargetModel& model,
                                          std::span<const TokenId> context,
                                          const DraftTree& tree, DecodeMode mode,
                                          std::mt19937_64* rng = nullptr,
                                          ForwardCounter* counter = nullptr) {
    auto dists = forward_tree(model, context, tree, counter);
    return accept_from(dists, tree, mode, rng);
}

// Baseline autoregressive step: one forward pass, one token.
inline TokenId vanilla_step(const TargetModel& model, std::span<const TokenId> context,
                            DecodeMode mode, std::mt19937_64* rng = nullptr,
                            ForwardCounter* counter = nullptr) {
    Distribution d = model.next_distribution(context);
    if (counter) counter->passes += 1;
    return detail::pick(d, mode, rng);
}

}  // namespace specdec
