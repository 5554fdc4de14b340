#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "specdec/errors.hpp"

namespace specdec {

using TokenId = std::int32_t;

// Probability vector over the vocabulary; entries sum to 1.
using Distribution = std::vector<double>;

// Which strategy produced a draft candidate.
enum class DraftSource : std::uint8_t {
    SchemaToolName,
    SchemaParamName,
    SchemaFill,
    Retrieval,
    Recycling,
    ContextPld,
};

inline const char* to_string(DraftSource s) {
    switch (s) {
        case DraftSource::SchemaToolName: return "schema_tool_name";
        case DraftSource::SchemaParamName: return "schema_param_name";
        case DraftSource::SchemaFill: return "schema_fill";
        case DraftSource::Retrieval: return "retrieval";
        case DraftSource::Recycling: return "recycling";
        case DraftSource::ContextPld: return "context_pld";
    }
    return "?";
}

// A proposed continuation awaiting verification.
struct DraftCandidate {
    std::vector<TokenId> tokens;
    DraftSource source = DraftSource::SchemaFill;
    // Origin info: tool/param index for schema drafts, datastore entry id and
    // match position for retrieval, -1 when not applicable.
    std::int64_t meta_id = -1;
    std::int64_t meta_pos = -1;
};

// Square boolean matrix; row i marks i itself plus every ancestor of node i.
class AncestorMask {
public:
    AncestorMask() = default;
    explicit AncestorMask(std::size_t n) : n_(n), bits_(n * n, 0) {}

    std::size_t size() const { return n_; }
    bool at(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v = true) { bits_[i * n_ + j] = v ? 1 : 0; }

    // copies row `from` into row `to`
    void copy_row(std::size_t to, std::size_t from) {
        for (std::size_t j = 0; j < n_; ++j) bits_[to * n_ + j] = bits_[from * n_ + j];
    }

    bool operator==(const AncestorMask& o) const { return n_ == o.n_ && bits_ == o.bits_; }

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> bits_;
};

}  // namespace specdec
