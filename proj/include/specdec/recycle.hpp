#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "specdec/errors.hpp"
#include "specdec/types.hpp"

namespace specdec {

// Per-token top-w successor candidates, refreshed from verification outputs;
// the most recent verification pass wins a row outright.
class AdjacencyMatrix {
public:
    static constexpr TokenId kPad = -1;

    AdjacencyMatrix(int vocab, int width = 8)
        : vocab_(vocab), width_(width),
          slots_(static_cast<std::size_t>(vocab) * static_cast<std::size_t>(width), kPad),
          pad_row_(static_cast<std::size_t>(width), kPad) {}

    int vocab() const { return vocab_; }
    int width() const { return width_; }

    std::span<const TokenId> row(TokenId token) const {
        if (token < 0 || token >= vocab_) return pad_row_;
        return {slots_.data() + static_cast<std::size_t>(token) * width_,
                static_cast<std::size_t>(width_)};
    }

    void set_row(TokenId token, std::span<const TokenId> top) {
        if (token < 0 || token >= vocab_) return;
        TokenId* dst = slots_.data() + static_cast<std::size_t>(token) * width_;
        for (int i = 0; i < width_; ++i)
            dst[i] = i < static_cast<int>(top.size()) ? top[static_cast<std::size_t>(i)] : kPad;
    }

    bool row_warm(TokenId token) const { return row(token)[0] != kPad; }

private:
    int vocab_;
    int width_;
    std::vector<TokenId> slots_;
    std::vector<TokenId> pad_row_;
};

// Tokens with positive probability, by probability descending then id
// ascending, at most `w` of them. Zero-probability tokens never enter a row:
// a point-mass model contributes a single real successor, not padding noise.
inline std::vector<TokenId> top_w_tokens(const Distribution& dist, int w) {
    std::vector<TokenId> ids;
    for (TokenId t = 0; t < static_cast<TokenId>(dist.size()); ++t)
        if (dist[static_cast<std::size_t>(t)] > 0.0) ids.push_back(t);
    std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) {
        return dist[static_cast<std::size_t>(a)] > dist[static_cast<std::size_t>(b)];
    });
    if (static_cast<int>(ids.size()) > w) ids.resize(static_cast<std::size_t>(w));
    return ids;
}

struct StepOutput {
    TokenId preceding;             // token whose distribution was computed
    std::vector<TokenId> top;      // its new top-w successors
};

// Last-writer-wins refresh of the affected rows.
inline void update_matrix(AdjacencyMatrix& matrix, std::span<const StepOutput> step_outputs) {
    for (const auto& s : step_outputs) matrix.set_row(s.preceding, s.top);
}

// Pre-defined draft-tree shape: node i attaches to parent[i] (-1 = the last
// accepted token) as that parent's child_rank-th successor.
struct StaticTreeTemplate {
    struct Node {
        int depth;
        int parent;      // -1 for depth-1 nodes
        int child_rank;  // index into the parent token's adjacency row
    };
    std::vector<Node> nodes;

    // Branching factors per depth, truncated in BFS order to max_nodes.
    static StaticTreeTemplate from_branching(std::span<const int> branching,
                                             std::size_t max_nodes = 64) {
        StaticTreeTemplate tpl;
        std::vector<int> frontier = {-1};
        int depth = 0;
        for (int b : branching) {
            ++depth;
            std::vector<int> next;
            for (int parent : frontier) {
                for (int r = 0; r < b; ++r) {
                    if (tpl.nodes.size() >= max_nodes) return tpl;
                    tpl.nodes.push_back({depth, parent, r});
                    next.push_back(static_cast<int>(tpl.nodes.size()) - 1);
                }
            }
            frontier = std::move(next);
        }
        return tpl;
    }

    static StaticTreeTemplate default_template() {
        static const int branching[] = {4, 2, 2, 1, 1, 1};
        return from_branching(branching, 64);
    }
};

// Breadth-first expansion of the adjacency matrix over the template, rooted
// at the last accepted token. Padding nodes prune their whole subtree. The
// result is the set of root-to-leaf token paths of the pruned tree.
inline std::vector<DraftCandidate> bfs_draft(const AdjacencyMatrix& matrix, TokenId root,
                                             const StaticTreeTemplate& tpl) {
    const std::size_t n = tpl.nodes.size();
    std::vector<TokenId> token(n, AdjacencyMatrix::kPad);
    std::vector<char> alive(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& node = tpl.nodes[i];
        TokenId parent_token;
        if (node.parent < 0) {
            parent_token = root;
        } else {
            if (!alive[static_cast<std::size_t>(node.parent)]) continue;
            parent_token = token[static_cast<std::size_t>(node.parent)];
        }
        if (node.child_rank >= matrix.width()) continue;
        TokenId t = matrix.row(parent_token)[static_cast<std::size_t>(node.child_rank)];
        if (t == AdjacencyMatrix::kPad) continue;
        token[i] = t;
        alive[i] = 1;
    }

    // leaf paths in depth-first template order, so lower-rank (more likely)
    // branches come out first
    std::vector<std::vector<int>> kids(n);
    std::vector<int> roots;
    for (std::size_t i = 0; i < n; ++i) {
        if (!alive[i]) continue;
        if (tpl.nodes[i].parent < 0) roots.push_back(static_cast<int>(i));
        else kids[static_cast<std::size_t>(tpl.nodes[i].parent)].push_back(static_cast<int>(i));
    }
    std::vector<DraftCandidate> out;
    std::vector<int> stack(roots.rbegin(), roots.rend());
    while (!stack.empty()) {
        int node = stack.back();
        stack.pop_back();
        const auto& ks = kids[static_cast<std::size_t>(node)];
        if (ks.empty()) {
            std::vector<TokenId> path;
            for (int cur = node; cur >= 0; cur = tpl.nodes[static_cast<std::size_t>(cur)].parent)
                path.push_back(token[static_cast<std::size_t>(cur)]);
            std::reverse(path.begin(), path.end());
            DraftCandidate cand;
            cand.tokens = std::move(path);
            cand.source = DraftSource::Recycling;
            out.push_back(std::move(cand));
            continue;
        }
        for (auto it = ks.rbegin(); it != ks.rend(); ++it) stack.push_back(*it);
    }
    return out;
}

}  // namespace specdec
