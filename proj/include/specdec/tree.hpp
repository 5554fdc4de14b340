#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "specdec/errors.hpp"
#include "specdec/tokenizer.hpp"
#include "specdec/types.hpp"

namespace specdec {

// Draft candidates compacted into one flattened token sequence. parent[i] < i
// for every node (-1 marks children of the context), and mask row i is the
// reflexive-transitive closure of parent, so a masked forward pass sees each
// node behind exactly its own ancestor path.
struct DraftTree {
    std::vector<TokenId> tokens;
    std::vector<int> parent;          // -1 = root (child of the context)
    AncestorMask mask;
    std::vector<DraftSource> source_of;
    // node index list spelling each kept candidate, root first
    std::vector<std::vector<int>> leaf_paths;
    std::vector<DraftCandidate> kept;
    int trimmed = 0;                  // candidates dropped by the budget

    std::size_t size() const { return tokens.size(); }
};

namespace detail {

inline int source_priority(DraftSource s) {
    switch (s) {
        case DraftSource::Retrieval: return 0;
        case DraftSource::SchemaToolName:
        case DraftSource::SchemaParamName:
        case DraftSource::SchemaFill: return 1;
        case DraftSource::ContextPld: return 2;
        case DraftSource::Recycling: return 3;
    }
    return 4;
}

}  // namespace detail

// Trie-packs candidates into a DraftTree. Candidates sharing a token prefix
// share nodes; exact duplicates collapse into one. When the flattened size
// would exceed `budget`, lower-priority candidates are dropped whole
// (retrieval > schema > recycling, then input order, then shorter first) and
// counted in `trimmed`.
inline DraftTree pack(const std::vector<DraftCandidate>& candidates, std::size_t budget = 64) {
    if (candidates.empty()) throw EmptyDraftSetError("pack: no draft candidates");
    for (const auto& c : candidates)
        if (c.tokens.empty()) throw EmptyDraftSetError("pack: empty candidate token sequence");

    // stable: input (schedule) order is the tie-break within a priority class
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detail::source_priority(candidates[a].source) <
               detail::source_priority(candidates[b].source);
    });

    DraftTree tree;
    // children[node+1] maps token -> child node (+1 shifts the -1 root)
    std::vector<std::map<TokenId, int>> children(1);

    auto try_add = [&](const DraftCandidate& cand) -> bool {
        // count nodes the candidate would add
        int cur = -1;
        std::size_t matched = 0;
        for (TokenId t : cand.tokens) {
            auto& slots = children[static_cast<std::size_t>(cur + 1)];
            auto it = slots.find(t);
            if (it == slots.end()) break;
            cur = it->second;
            ++matched;
        }
        std::size_t fresh = cand.tokens.size() - matched;
        if (tree.tokens.size() + fresh > budget) return false;

        std::vector<int> path;
        path.reserve(cand.tokens.size());
        cur = -1;
        for (TokenId t : cand.tokens) {
            auto& slots = children[static_cast<std::size_t>(cur + 1)];
            auto it = slots.find(t);
            if (it != slots.end()) {
                cur = it->second;
            } else {
                int node = static_cast<int>(tree.tokens.size());
                tree.tokens.push_back(t);
                tree.parent.push_back(cur);
                tree.source_of.push_back(cand.source);
                slots.emplace(t, node);
                children.emplace_back();
                cur = node;
            }
            path.push_back(cur);
        }
        tree.leaf_paths.push_back(std::move(path));
        tree.kept.push_back(cand);
        return true;
    };

    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const auto& cand = candidates[order[oi]];
        bool dup = false;
        for (const auto& k : tree.kept)
            if (k.tokens == cand.tokens) { dup = true; break; }
        if (dup) continue;
        if (!try_add(cand)) ++tree.trimmed;
    }

    const std::size_t n = tree.tokens.size();
    tree.mask = AncestorMask(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (tree.parent[i] >= 0) tree.mask.copy_row(i, static_cast<std::size_t>(tree.parent[i]));
        tree.mask.set(i, i);
    }
    return tree;
}

// Structural/retrieval drafts: per-candidate lengths, no template imposed.
inline DraftTree dynamic_tree(const std::vector<DraftCandidate>& candidates,
                              std::size_t budget = 64) {
    return pack(candidates, budget);
}

// Recycling drafts already follow a static template; packing the root-to-leaf
// paths reconstructs exactly the pruned template shape.
inline DraftTree static_tree(const std::vector<DraftCandidate>& recycling_paths,
                             std::size_t budget = 64) {
    return pack(recycling_paths, budget);
}

// Indented text rendering of the trie, one node per line, for debug dumps.
inline std::string render_tree(const DraftTree& tree, const Tokenizer& tok) {
    std::string out;
    std::vector<std::vector<int>> kids(tree.size());
    std::vector<int> roots;
    for (std::size_t i = 0; i < tree.size(); ++i) {
        if (tree.parent[i] < 0) roots.push_back(static_cast<int>(i));
        else kids[static_cast<std::size_t>(tree.parent[i])].push_back(static_cast<int>(i));
    }
    auto escape = [](const std::string& s) {
        std::string r;
        for (char c : s) {
            if (c == '\n') r += "\\n";
            else if (c == '\t') r += "\\t";
            else r += c;
        }
        return r;
    };
    // depth-first, children in creation order
    std::vector<std::pair<int, int>> stack;  // (node, depth)
    for (auto it = roots.rbegin(); it != roots.rend(); ++it) stack.push_back({*it, 0});
    while (!stack.empty()) {
        auto [node, depth] = stack.back();
        stack.pop_back();
        out.append(static_cast<std::size_t>(depth) * 2, ' ');
        out += "[" + std::to_string(node) + "] '" +
               escape(tok.piece(tree.tokens[static_cast<std::size_t>(node)])) + "' (" +
               to_string(tree.source_of[static_cast<std::size_t>(node)]) + ")\n";
        const auto& ks = kids[static_cast<std::size_t>(node)];
        for (auto it = ks.rbegin(); it != ks.rend(); ++it) stack.push_back({*it, depth + 1});
    }
    return out;
}

}  // namespace specdec
