#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "specdec/retrieval.hpp"
#include "specdec/tokenizer.hpp"

using namespace specdec;

namespace {

std::vector<float> random_unit(std::mt19937_64& rng, int dim) {
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(dim));
    double n2 = 0.0;
    for (auto& x : v) {
        x = gauss(rng);
        n2 += static_cast<double>(x) * x;
    }
    float inv = static_cast<float>(1.0 / std::sqrt(n2));
    for (auto& x : v) x *= inv;
    return v;
}

// brute force: full sort by (cosine desc, id desc)
std::vector<std::int64_t> brute_topk(std::span<const float> q,
                                     const std::vector<DatastoreEntry>& entries, int k) {
    std::vector<std::pair<double, std::int64_t>> scored;
    for (const auto& e : entries) scored.emplace_back(cosine(q, e.h), e.id);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second > b.second;
    });
    std::vector<std::int64_t> ids;
    for (std::size_t i = 0; i < scored.size() && i < static_cast<std::size_t>(k); ++i)
        ids.push_back(scored[i].second);
    return ids;
}

// O(|gen| * |y'|) scanner with the same longest-first-then-skip contract
std::vector<SuffixMatch> brute_suffix_match(std::span<const TokenId> generated,
                                            std::span<const RetrievedCall> candidates,
                                            const RetrievalConfig& cfg) {
    std::vector<SuffixMatch> out;
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        const auto& y = candidates[ci].y;
        for (int L : cfg.suffix_lengths) {
            if (static_cast<std::size_t>(L) > generated.size()) continue;
            std::vector<SuffixMatch> found;
            for (std::size_t m = static_cast<std::size_t>(L); m < y.size(); ++m) {
                bool eq = true;
                for (int j = 0; j < L; ++j) {
                    if (y[m - static_cast<std::size_t>(L) + static_cast<std::size_t>(j)] !=
                        generated[generated.size() - static_cast<std::size_t>(L) +
                                  static_cast<std::size_t>(j)]) {
                        eq = false;
                        break;
                    }
                }
                if (eq) found.push_back({ci, candidates[ci].entry_id, m, L});
            }
            if (!found.empty()) {
                out.insert(out.end(), found.begin(), found.end());
                break;
            }
        }
    }
    return out;
}

bool same_matches(const std::vector<SuffixMatch>& a, const std::vector<SuffixMatch>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].candidate_index != b[i].candidate_index || a[i].entry_id != b[i].entry_id ||
            a[i].m != b[i].m || a[i].length != b[i].length)
            return false;
    return true;
}

std::vector<TokenId> adherent_tokens(Tokenizer& tok, const std::string& name) {
    return tok.encode("{\"name\": \"" + name + "\", \"parameters\": {}}");
}

}  // namespace

TEST_CASE("topk on an empty store is empty") {
    Datastore store;
    std::vector<float> q = {1.0f, 0.0f};
    CHECK(topk(q, store, 10).empty());
}

TEST_CASE("an identical embedding ranks first with similarity one") {
    Tokenizer tok;
    Datastore store;
    std::mt19937_64 rng(1);
    auto y = adherent_tokens(tok, "A");
    for (int i = 0; i < 5; ++i) store.insert(random_unit(rng, 8), y, tok);
    auto q = random_unit(rng, 8);
    auto id = store.insert(q, y, tok);
    auto ids = topk(q, store, 3);
    REQUIRE(!ids.empty());
    CHECK(ids[0] == id);
}

TEST_CASE("topk matches exhaustive cosine sort on random stores") {
    Tokenizer tok;
    std::mt19937_64 rng(17);
    auto y = adherent_tokens(tok, "A");
    for (int iter = 0; iter < 50; ++iter) {
        Datastore store;
        int n = 1 + static_cast<int>(rng() % 50);
        for (int i = 0; i < n; ++i) store.insert(random_unit(rng, 16), y, tok);
        auto q = random_unit(rng, 16);
        CHECK(topk(q, store, 10) == brute_topk(q, store.snapshot(), 10));
    }
}

TEST_CASE("suffix_match basics") {
    RetrievalConfig cfg;

    SECTION("no occurrence anywhere") {
        std::vector<TokenId> gen = {1, 2, 3, 4, 5, 6, 7};
        std::vector<RetrievedCall> cands = {{0, {9, 9, 9, 9, 9, 9, 9, 9, 9, 9}}};
        CHECK(suffix_match(gen, cands, cfg).empty());
    }

    SECTION("candidate extending the generated sequence matches at L=7") {
        std::vector<TokenId> gen = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        std::vector<TokenId> y = gen;
        y.insert(y.end(), {11, 12, 13});
        std::vector<RetrievedCall> cands = {{0, y}};
        auto ms = suffix_match(gen, cands, cfg);
        REQUIRE(ms.size() == 1);
        CHECK(ms[0].length == 7);
        CHECK(ms[0].m == gen.size());
    }

    SECTION("too-short generated sequence cannot match") {
        std::vector<TokenId> gen = {1, 2, 3};
        std::vector<RetrievedCall> cands = {{0, {1, 2, 3, 4, 5, 6, 7, 8}}};
        CHECK(suffix_match(gen, cands, cfg).empty());
    }
}

TEST_CASE("suffix_match equals the brute-force scanner on random pairs") {
    std::mt19937_64 rng(23);
    RetrievalConfig cfg;
    for (int iter = 0; iter < 1000; ++iter) {
        std::vector<TokenId> gen;
        std::size_t glen = 5 + rng() % 75;
        for (std::size_t i = 0; i < glen; ++i)
            gen.push_back(static_cast<TokenId>(rng() % 12));
        std::vector<RetrievedCall> cands;
        int nc = 1 + static_cast<int>(rng() % 3);
        for (int c = 0; c < nc; ++c) {
            RetrievedCall rc;
            rc.entry_id = c;
            std::size_t ylen = 1 + rng() % 80;
            for (std::size_t i = 0; i < ylen; ++i)
                rc.y.push_back(static_cast<TokenId>(rng() % 12));
            // sometimes splice the generated suffix in so matches actually occur
            if (rng() % 2 == 0 && rc.y.size() > 10) {
                std::size_t at = rng() % (rc.y.size() - 8);
                for (std::size_t j = 0; j < 7 && j < gen.size(); ++j)
                    rc.y[at + j] = gen[gen.size() - std::min<std::size_t>(7, gen.size()) + j];
            }
            cands.push_back(std::move(rc));
        }
        auto fast = suffix_match(gen, cands, cfg);
        auto slow = brute_suffix_match(gen, cands, cfg);
        REQUIRE(same_matches(fast, slow));
    }
}

TEST_CASE("extract_continuations follows the length schedule") {
    RetrievalConfig cfg;  // {32, 16, 8, 8}

    RetrievedCall rc;
    rc.entry_id = 7;
    for (int i = 0; i < 60; ++i) rc.y.push_back(i);
    std::vector<RetrievedCall> cands = {rc};

    SECTION("first match gets 32 tokens") {
        std::vector<SuffixMatch> ms = {{0, 7, 20, 7}};
        auto out = extract_continuations(ms, cands, cfg);
        REQUIRE(out.size() == 1);
        CHECK(out[0].tokens.size() == 32);
        CHECK(out[0].tokens.front() == 20);
        CHECK(out[0].source == DraftSource::Retrieval);
        CHECK(out[0].meta_id == 7);
    }

    SECTION("five matches yield at most four candidates") {
        std::vector<SuffixMatch> ms = {{0, 7, 10, 7}, {0, 7, 20, 7}, {0, 7, 30, 7},
                                       {0, 7, 40, 7}, {0, 7, 50, 7}};
        auto out = extract_continuations(ms, cands, cfg);
        CHECK(out.size() == 4);
        CHECK(out[0].tokens.size() == 32);
        CHECK(out[1].tokens.size() == 16);
        CHECK(out[2].tokens.size() == 8);
        CHECK(out[3].tokens.size() == 8);
    }

    SECTION("end of sequence truncates the continuation") {
        std::vector<SuffixMatch> ms = {{0, 7, 57, 7}};
        auto out = extract_continuations(ms, cands, cfg);
        REQUIRE(out.size() == 1);
        CHECK(out[0].tokens.size() == 3);
    }
}

TEST_CASE("insert assigns increasing ids and enforces the adherence gate") {
    Tokenizer tok;
    Datastore store;
    auto y = adherent_tokens(tok, "A");
    std::vector<float> h = {1.0f, 0.0f, 0.0f};
    CHECK(store.insert(h, y, tok) == 0);
    CHECK(store.size() == 1);
    CHECK(store.insert(h, y, tok) == 1);

    auto bad = tok.encode("```json {\"name\": \"A\"} ```");
    CHECK_THROWS_AS(store.insert(h, bad, tok), NotAdherentError);
    CHECK(store.size() == 2);
}

TEST_CASE("capacity evicts oldest first, ids keep rising") {
    Tokenizer tok;
    Datastore store(std::size_t{2});
    auto y = adherent_tokens(tok, "A");
    std::vector<float> h = {0.0f, 1.0f};
    store.insert(h, y, tok);
    store.insert(h, y, tok);
    auto id3 = store.insert(h, y, tok);
    CHECK(id3 == 2);
    CHECK(store.size() == 2);
    CHECK(!store.find(0).has_value());
    CHECK(store.find(1).has_value());
    CHECK(store.find(2).has_value());
}

TEST_CASE("memory bound: entry storage is O(d + |y|)") {
    // 1000 entries at d=256 floats + 200 tokens stays in the low megabytes
    std::size_t per_entry = 256 * sizeof(float) + 200 * sizeof(TokenId);
    CHECK(per_entry * 1000 < 8u * 1024 * 1024);
}

TEST_CASE("jsonl round trip and dimension rejection") {
    namespace fs = std::filesystem;
    Tokenizer tok;
    std::mt19937_64 rng(29);
    Datastore store;
    auto y = adherent_tokens(tok, "RoundTrip");
    for (int i = 0; i < 4; ++i) store.insert(random_unit(rng, 8), y, tok);

    auto path = (fs::temp_directory_path() / "specdec_store_test.jsonl").string();
    save_datastore(store, path);

    Datastore loaded;
    load_datastore(loaded, path, 8);
    REQUIRE(loaded.size() == 4);
    auto a = store.snapshot();
    auto b = loaded.snapshot();
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].h == b[i].h);
        CHECK(a[i].y == b[i].y);
    }

    Datastore wrong;
    CHECK_THROWS_AS(load_datastore(wrong, path, 16), ParseError);
    fs::remove(path);
}
