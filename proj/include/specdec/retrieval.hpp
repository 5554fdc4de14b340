#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "specdec/errors.hpp"
#include "specdec/schema.hpp"
#include "specdec/tokenizer.hpp"
#include "specdec/types.hpp"

namespace specdec {

struct RetrievalConfig {
    int k = 10;
    std::vector<int> suffix_lengths = {7, 6, 5};        // tried longest-first
    std::vector<int> continuation_lengths = {32, 16, 8, 8};

    void validate() const {
        if (k < 1) throw Error("retrieval k must be >= 1");
        if (suffix_lengths.empty()) throw Error("suffix_lengths must be non-empty");
        for (std::size_t i = 1; i < suffix_lengths.size(); ++i)
            if (suffix_lengths[i] >= suffix_lengths[i - 1])
                throw Error("suffix_lengths must be strictly descending");
        if (continuation_lengths.empty()) throw Error("continuation_lengths must be non-empty");
        for (int n : continuation_lengths)
            if (n < 1) throw Error("continuation lengths must be positive");
    }

    int min_suffix() const { return suffix_lengths.back(); }
};

struct DatastoreEntry {
    std::int64_t id = 0;
    std::vector<float> h;        // unit-norm query embedding
    std::vector<TokenId> y;      // completed tool-call output
    std::int64_t created_at = 0;
};

// Bank of prior successful tool calls. Bounded capacity evicts oldest first;
// ids keep increasing past evictions. Readers may share; writes serialize.
class Datastore {
public:
    explicit Datastore(std::optional<std::size_t> capacity = std::nullopt)
        : capacity_(capacity) {}

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return entries_.size();
    }

    std::optional<std::size_t> capacity() const { return capacity_; }

    std::vector<DatastoreEntry> snapshot() const {
        std::shared_lock lock(mu_);
        return entries_;
    }

    std::optional<DatastoreEntry> find(std::int64_t id) const {
        std::shared_lock lock(mu_);
        for (const auto& e : entries_)
            if (e.id == id) return e;
        return std::nullopt;
    }

    // Appends an entry after the adherence gate; evicts the oldest entry when
    // over capacity. Returns the new id, strictly above all prior ids.
    std::int64_t insert(std::vector<float> h, std::vector<TokenId> y, const Tokenizer& tok) {
        if (y.empty()) throw NotAdherentError("datastore insert: empty sequence");
        auto report = check_format_adherence(tok.decode(y));
        if (!report.adherent)
            throw NotAdherentError(std::string("datastore insert: ") +
                                   to_string(*report.violation));
        normalize(h);
        std::unique_lock lock(mu_);
        DatastoreEntry e;
        e.id = next_id_++;
        e.created_at = e.id;
        e.h = std::move(h);
        e.y = std::move(y);
        entries_.push_back(std::move(e));
        if (capacity_ && entries_.size() > *capacity_)
            entries_.erase(entries_.begin());
        return entries_.back().id;
    }

    // Unchecked variant for loading persisted entries.
    void insert_raw(DatastoreEntry e) {
        std::unique_lock lock(mu_);
        next_id_ = std::max(next_id_, e.id + 1);
        entries_.push_back(std::move(e));
        if (capacity_ && entries_.size() > *capacity_)
            entries_.erase(entries_.begin());
    }

private:
    static void normalize(std::vector<float>& h) {
        double n2 = 0.0;
        for (float x : h) n2 += static_cast<double>(x) * x;
        if (n2 <= 0.0) throw Error("datastore insert: zero embedding");
        const float inv = static_cast<float>(1.0 / std::sqrt(n2));
        for (float& x : h) x *= inv;
    }

    mutable std::shared_mutex mu_;
    std::vector<DatastoreEntry> entries_;
    std::optional<std::size_t> capacity_;
    std::int64_t next_id_ = 0;
};

inline double cosine(std::span<const float> a, std::span<const float> b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
    return dot;
}

// Ids of the min(k, |store|) entries most similar to h_query by cosine;
// ties break toward the larger (more recent) id.
inline std::vector<std::int64_t> topk(std::span<const float> h_query, const Datastore& store,
                                      int k) {
    auto entries = store.snapshot();
    std::vector<std::pair<double, std::int64_t>> scored;
    scored.reserve(entries.size());
    for (const auto& e : entries) scored.emplace_back(cosine(h_query, e.h), e.id);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second > b.second;
    });
    std::vector<std::int64_t> ids;
    for (std::size_t i = 0; i < scored.size() && i < static_cast<std::size_t>(k); ++i)
        ids.push_back(scored[i].second);
    return ids;
}

// A retrieved call the session holds for its whole generation.
struct RetrievedCall {
    std::int64_t entry_id = -1;
    std::vector<TokenId> y;
};

struct SuffixMatch {
    std::size_t candidate_index = 0;  // into the retrieved list
    std::int64_t entry_id = -1;
    std::size_t m = 0;                // continuation start in y'
    int length = 0;                   // matched suffix length L
};

// For each candidate (in retrieval rank order): scan suffix lengths longest
// first; the first length that matches anywhere yields matches at all its
// positions, earliest first, and shorter lengths are skipped. A position
// counts only if at least one continuation token follows it.
inline std::vector<SuffixMatch> suffix_match(std::span<const TokenId> generated,
                                             std::span<const RetrievedCall> candidates,
                                             const RetrievalConfig& config) {
    std::vector<SuffixMatch> out;
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        const auto& y = candidates[ci].y;
        for (int L : config.suffix_lengths) {
            if (static_cast<std::size_t>(L) > generated.size()) continue;
            std::span<const TokenId> needle =
                generated.subspan(generated.size() - static_cast<std::size_t>(L));
            bool matched = false;
            for (std::size_t m = static_cast<std::size_t>(L); m < y.size(); ++m) {
                if (std::equal(needle.begin(), needle.end(),
                               y.begin() + static_cast<std::ptrdiff_t>(m - L))) {
                    out.push_back({ci, candidates[ci].entry_id, m, L});
                    matched = true;
                }
            }
            if (matched) break;
        }
    }
    return out;
}

// The i-th match takes continuation_lengths[i] tokens of its candidate from
// position m (shorter at end of sequence); the schedule caps the candidate
// count, and exact duplicate continuations keep only their first occurrence.
inline std::vector<DraftCandidate> extract_continuations(
        std::span<const SuffixMatch> matches, std::span<const RetrievedCall> candidates,
        const RetrievalConfig& config, DraftSource source = DraftSource::Retrieval) {
    std::vector<DraftCandidate> out;
    for (std::size_t i = 0; i < matches.size() && i < config.continuation_lengths.size(); ++i) {
        const auto& match = matches[i];
        const auto& y = candidates[match.candidate_index].y;
        std::size_t want = static_cast<std::size_t>(config.continuation_lengths[i]);
        std::size_t take = std::min(want, y.size() - match.m);
        if (take == 0) continue;
        DraftCandidate cand;
        cand.tokens.assign(y.begin() + static_cast<std::ptrdiff_t>(match.m),
                           y.begin() + static_cast<std::ptrdiff_t>(match.m + take));
        cand.source = source;
        cand.meta_id = match.entry_id;
        cand.meta_pos = static_cast<std::int64_t>(match.m);
        bool dup = false;
        for (const auto& prev : out)
            if (prev.tokens == cand.tokens) { dup = true; break; }
        if (!dup) out.push_back(std::move(cand));
    }
    return out;
}

// JSON Lines persistence: {"id": int, "h": [float...], "y": [int...]}
inline void save_datastore(const Datastore& store, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FileError("cannot write " + path);
    for (const auto& e : store.snapshot()) {
        nlohmann::json j;
        j["id"] = e.id;
        j["h"] = e.h;
        j["y"] = e.y;
        f << j.dump() << "\n";
    }
}

// Loads persisted entries into `store`; rejects wrong-dimension vectors.
inline void load_datastore(Datastore& store, const std::string& path, int expected_dim) {
    std::ifstream f(path);
    if (!f) throw FileError("cannot read " + path);
    std::string line;
    long line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("id") || !j.contains("h") || !j.contains("y"))
            throw ParseError(path + ": bad datastore line", line_no);
        DatastoreEntry e;
        e.id = j["id"].get<std::int64_t>();
        e.created_at = e.id;
        e.h = j["h"].get<std::vector<float>>();
        e.y = j["y"].get<std::vector<TokenId>>();
        if (static_cast<int>(e.h.size()) != expected_dim)
            throw ParseError(path + ": embedding dimension " + std::to_string(e.h.size()) +
                                 " != " + std::to_string(expected_dim),
                             line_no);
        if (e.y.empty()) throw ParseError(path + ": empty y", line_no);
        store.insert_raw(std::move(e));
    }
}

}  // namespace specdec
