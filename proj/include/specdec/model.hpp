#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "specdec/errors.hpp"
#include "specdec/tokenizer.hpp"
#include "specdec/tree.hpp"
#include "specdec/types.hpp"

namespace specdec {

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64_tokens(std::span<const TokenId> toks,
                                    std::uint64_t h = 0xcbf29ce484222325ull) {
    for (TokenId t : toks) {
        for (int b = 0; b < 4; ++b) {
            h ^= static_cast<std::uint8_t>((static_cast<std::uint32_t>(t) >> (8 * b)) & 0xff);
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

}  // namespace detail

// The model whose output distribution the engine must preserve. Only
// next_distribution is required; forward_tree's default reconstructs each
// node's path from the attention mask alone, so a wrong mask shows up as a
// wrong distribution. One forward_tree call represents one (batched) model
// invocation regardless of node count.
class TargetModel {
public:
    virtual ~TargetModel() = default;

    virtual int vocab_size() const = 0;

    // P(next token | ctx)
    virtual Distribution next_distribution(std::span<const TokenId> ctx) const = 0;

    // out[0] = P(. | ctx); out[1 + i] = P(. | ctx ++ mask-path(i)).
    virtual std::vector<Distribution> forward_tree(std::span<const TokenId> ctx,
                                                   std::span<const TokenId> draft,
                                                   const AncestorMask& mask) const {
        if (mask.size() != draft.size())
            throw MaskShapeMismatchError("mask is " + std::to_string(mask.size()) +
                                         "x" + std::to_string(mask.size()) + ", draft has " +
                                         std::to_string(draft.size()) + " tokens");
        std::vector<Distribution> out;
        out.reserve(draft.size() + 1);
        out.push_back(next_distribution(ctx));
        std::vector<TokenId> buf(ctx.begin(), ctx.end());
        for (std::size_t i = 0; i < draft.size(); ++i) {
            buf.resize(ctx.size());
            for (std::size_t j = 0; j <= i; ++j)
                if (mask.at(i, j)) buf.push_back(draft[j]);
            out.push_back(next_distribution(buf));
        }
        return out;
    }

    // teacher-forced pass over a prompt: out[i] = P(. | ctx[0..i]); one invocation
    virtual std::vector<Distribution> forward_prompt(std::span<const TokenId> ctx) const {
        std::vector<Distribution> out;
        out.reserve(ctx.size());
        for (std::size_t i = 1; i <= ctx.size(); ++i)
            out.push_back(next_distribution(ctx.subspan(0, i)));
        return out;
    }
};

struct ForwardCounter {
    std::int64_t passes = 0;
};

// Counted single-invocation verification pass over a packed draft tree.
inline std::vector<Distribution> forward_tree(const TargetModel& model,
                                              std::span<const TokenId> ctx,
                                              const DraftTree& tree,
                                              ForwardCounter* counter = nullptr) {
    auto out = model.forward_tree(ctx, tree.tokens, tree.mask);
    if (counter) counter->passes += 1;
    return out;
}

// Maps a token sequence (the input question) to a fixed-dimension real vector.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual int dim() const = 0;
    virtual std::vector<float> embed_tokens(std::span<const TokenId> question) const = 0;
};

inline std::vector<float> embed(std::span<const TokenId> question,
                                const EmbeddingProvider& provider) {
    if (question.empty()) throw EmptyInputError("embed: empty question");
    return provider.embed_tokens(question);
}

// Hashed bag-of-tokens: each token string hashes to one coordinate, counts
// accumulate, then L2-normalize. Deterministic, and similar questions land on
// nearby unit vectors, which is all top-k retrieval needs.
class HashedBagEmbedding : public EmbeddingProvider {
public:
    explicit HashedBagEmbedding(const Tokenizer& tok, int dim = 256) : tok_(&tok), dim_(dim) {}

    int dim() const override { return dim_; }

    int coordinate_of(std::string_view piece) const {
        return static_cast<int>(detail::fnv1a64(piece) % static_cast<std::uint64_t>(dim_));
    }

    std::vector<float> embed_tokens(std::span<const TokenId> question) const override {
        if (question.empty()) throw EmptyInputError("embed: empty question");
        std::vector<float> v(static_cast<std::size_t>(dim_), 0.0f);
        for (TokenId t : question)
            v[static_cast<std::size_t>(coordinate_of(tok_->piece(t)))] += 1.0f;
        double norm2 = 0.0;
        for (float x : v) norm2 += static_cast<double>(x) * x;
        const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
        for (float& x : v) x *= inv;
        return v;
    }

private:
    const Tokenizer* tok_;
    int dim_;
};

// Deterministic test model: a registry of (prompt, gold continuation) pairs.
// The distribution at any position is a point mass on the gold token indexed
// by position past the matched prompt, so greedy decoding replays the gold
// sequence and self-corrects after any off-script draft of equal length.
class ScriptedModel : public TargetModel {
public:
    explicit ScriptedModel(int vocab, TokenId eos) : vocab_(vocab), eos_(eos) {}

    void add_script(std::vector<TokenId> prompt, std::vector<TokenId> gold) {
        if (std::find(gold.begin(), gold.end(), eos_) == gold.end()) gold.push_back(eos_);
        std::uint64_t h = detail::fnv1a64_tokens(prompt);
        by_len_[prompt.size()].emplace(h, scripts_.size());
        scripts_.push_back({std::move(prompt), std::move(gold)});
    }

    int vocab_size() const override { return vocab_; }

    Distribution next_distribution(std::span<const TokenId> ctx) const override {
        Distribution d(static_cast<std::size_t>(vocab_), 0.0);
        d[static_cast<std::size_t>(next_token(ctx))] = 1.0;
        return d;
    }

    TokenId next_token(std::span<const TokenId> ctx) const {
        // longest registered prompt that prefixes ctx
        for (auto it = by_len_.rbegin(); it != by_len_.rend(); ++it) {
            const std::size_t len = it->first;
            if (len > ctx.size()) continue;
            auto range = it->second.equal_range(detail::fnv1a64_tokens(ctx.subspan(0, len)));
            for (auto e = range.first; e != range.second; ++e) {
                const auto& s = scripts_[e->second];
                if (!std::equal(s.prompt.begin(), s.prompt.end(), ctx.begin())) continue;
                std::size_t pos = ctx.size() - len;
                return pos < s.gold.size() ? s.gold[pos] : eos_;
            }
        }
        return eos_;
    }

private:
    struct Script {
        std::vector<TokenId> prompt;
        std::vector<TokenId> gold;
    };
    int vocab_;
    TokenId eos_;
    std::vector<Script> scripts_;
    std::map<std::size_t, std::unordered_multimap<std::uint64_t, std::size_t>> by_len_;
};

// Additively smoothed n-gram model over a token corpus. Every conditional is
// strictly positive, which the speculative-sampling tests rely on.
class NgramModel : public TargetModel {
public:
    NgramModel(int vocab, int order = 3, double alpha = 0.1)
        : vocab_(vocab), order_(order), alpha_(alpha) {
        if (order_ < 1) throw Error("ngram order must be >= 1");
    }

    void add_sequence(std::span<const TokenId> seq) {
        const std::size_t n = static_cast<std::size_t>(order_) - 1;
        for (std::size_t i = 0; i + n < seq.size(); ++i) {
            std::uint64_t key = detail::fnv1a64_tokens(seq.subspan(i, n));
            auto& row = counts_[key];
            row.total += 1;
            row.by_token[seq[i + n]] += 1;
        }
    }

    int vocab_size() const override { return vocab_; }

    Distribution next_distribution(std::span<const TokenId> ctx) const override {
        const std::size_t n = static_cast<std::size_t>(order_) - 1;
        const double denom_base = alpha_ * vocab_;
        Distribution d(static_cast<std::size_t>(vocab_), 0.0);
        const Row* row = nullptr;
        if (ctx.size() >= n) {
            auto it = counts_.find(detail::fnv1a64_tokens(ctx.subspan(ctx.size() - n, n)));
            if (it != counts_.end()) row = &it->second;
        }
        const double total = row ? static_cast<double>(row->total) : 0.0;
        const double uniform = alpha_ / (total + denom_base);
        std::fill(d.begin(), d.end(), uniform);
        if (row) {
            for (auto [tok, cnt] : row->by_token)
                d[static_cast<std::size_t>(tok)] = (cnt + alpha_) / (total + denom_base);
        }
        return d;
    }

private:
    struct Row {
        long total = 0;
        std::map<TokenId, long> by_token;
    };
    int vocab_;
    int order_;
    double alpha_;
    std::unordered_map<std::uint64_t, Row> counts_;
};

}  // namespace specdec
