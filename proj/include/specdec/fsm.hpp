#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specdec/schema.hpp"
#include "specdec/types.hpp"

namespace specdec {

enum class StateTag : std::uint8_t { ToolName, ParamName, ParamValue, Others };

inline const char* to_string(StateTag t) {
    switch (t) {
        case StateTag::ToolName: return "tool_name";
        case StateTag::ParamName: return "param_name";
        case StateTag::ParamValue: return "param_value";
        case StateTag::Others: return "others";
    }
    return "?";
}

// Per-token region attribution, matched by the character-level oracle tests.
enum class RegionLabel : std::uint8_t { Scaffold, ToolName, ParamName, ParamValue, FreeText };

inline const char* to_string(RegionLabel l) {
    switch (l) {
        case RegionLabel::Scaffold: return "scaffold";
        case RegionLabel::ToolName: return "tool-name";
        case RegionLabel::ParamName: return "param-name";
        case RegionLabel::ParamValue: return "param-value";
        case RegionLabel::FreeText: return "free-text";
    }
    return "?";
}

// Where inside the current structural run the decoder sits. The tag is the
// coarse four-state machine; the phase pins the exact token expected next.
enum class FsmPhase : std::uint8_t {
    None,      // Others
    Prefix,    // ToolName: inside `{"name": "`
    Name,      // ToolName: inside the tool name
    Suffix,    // ToolName: inside `", "parameters": {`
    Slot,      // ParamName: before a key's opening quote (or the closing brace)
    Key,       // ParamName: inside a parameter name
    SepColon,  // ParamName: expecting `:`
    SepSpace,  // ParamName: expecting the space before the value
    Value,     // ParamValue: value content
    Closing,   // expecting the second `}` of the call terminator
};

struct FsmState {
    StateTag tag = StateTag::Others;
    FsmPhase phase = FsmPhase::None;
    std::uint32_t run_pos = 0;
    std::uint64_t match_mask = 0;   // viable tools (Name) or params (Key)
    int active_tool = -1;           // set in ParamName/ParamValue
    int pending_param = -1;         // matched key awaiting its value terminator
    std::uint64_t emitted_params = 0;
    // ParamValue scanning
    bool in_quote = false;
    std::uint32_t backslash_run = 0;
    std::int32_t depth = 0;         // nested {}/[] inside a value
    bool slot_space_pending = false;

    bool operator==(const FsmState&) const = default;
};

enum class FsmEventKind : std::uint8_t { CallOpened, CallCompleted };

struct FsmEvent {
    FsmEventKind kind;
    std::size_t index;  // position within the advanced token run
};

struct AdvanceResult {
    FsmState state;
    std::vector<RegionLabel> labels;  // one per consumed token
    std::vector<StateTag> tags;       // state tag that consumed each token
    std::vector<FsmEvent> events;
    // First token that extends no legal name/scaffold run; tokens at and past
    // it are left unconsumed. The FSM is not an error authority: callers
    // demote to open-ended decoding instead of failing.
    std::optional<std::size_t> illegal_at;

    bool ok() const { return !illegal_at.has_value(); }
};

// One Figure-3 arc: delimiter token run observed in `from` moves to `to`.
struct DelimiterRule {
    StateTag from;
    std::vector<TokenId> run;
    StateTag to;
};

struct StructuralCandidate {
    enum class Kind : std::uint8_t { ToolNameRun, ParamNameRun, Terminator, ForcedRun };
    std::vector<TokenId> tokens;
    Kind kind = Kind::ForcedRun;
    int tool = -1;
    int param = -1;
};

struct LegalContinuations {
    bool open_ended = false;
    std::vector<StructuralCandidate> candidates;
};

class Fsm {
public:
    explicit Fsm(CompiledSchema compiled) : c_(std::move(compiled)) {
        rules_.push_back({StateTag::Others, {c_.call_open}, StateTag::ToolName});
        rules_.push_back({StateTag::ParamValue, {c_.comma}, StateTag::ParamName});
        rules_.push_back({StateTag::ParamValue, c_.call_terminator(), StateTag::Others});
        rules_.push_back({StateTag::ParamName, c_.call_terminator(), StateTag::Others});
    }

    const CompiledSchema& compiled() const { return c_; }
    const std::vector<DelimiterRule>& delimiter_rules() const { return rules_; }

    FsmState initial() const { return FsmState{}; }

    // Folds the transition function over an accepted token run, left to right.
    AdvanceResult advance(FsmState state, std::span<const TokenId> accepted) const {
        AdvanceResult res;
        res.labels.reserve(accepted.size());
        res.tags.reserve(accepted.size());
        for (std::size_t i = 0; i < accepted.size(); ++i) {
            StateTag before = state.tag;
            auto step = step_one(state, accepted[i]);
            if (!step.has_value()) {
                res.illegal_at = i;
                break;
            }
            res.labels.push_back(step->first);
            res.tags.push_back(before);
            if (step->second.has_value())
                res.events.push_back({*step->second, i});
        }
        res.state = state;
        return res;
    }

    LegalContinuations legal_continuations(const FsmState& s) const {
        LegalContinuations out;
        switch (s.phase) {
            case FsmPhase::None:
            case FsmPhase::Value:
                out.open_ended = true;
                return out;
            case FsmPhase::Prefix:
                for (int t = 0; t < static_cast<int>(c_.tools.size()); ++t) {
                    StructuralCandidate cand;
                    cand.kind = StructuralCandidate::Kind::ToolNameRun;
                    cand.tool = t;
                    append(cand.tokens, std::span(c_.scaffold_prefix).subspan(s.run_pos));
                    append(cand.tokens, c_.tools[static_cast<std::size_t>(t)].name_tokens);
                    append(cand.tokens, c_.name_suffix);
                    out.candidates.push_back(std::move(cand));
                }
                return out;
            case FsmPhase::Name:
                for (int t = 0; t < static_cast<int>(c_.tools.size()); ++t) {
                    if (!(s.match_mask >> t & 1)) continue;
                    const auto& name = c_.tools[static_cast<std::size_t>(t)].name_tokens;
                    if (name.size() < s.run_pos) continue;
                    StructuralCandidate cand;
                    cand.kind = StructuralCandidate::Kind::ToolNameRun;
                    cand.tool = t;
                    append(cand.tokens, std::span(name).subspan(s.run_pos));
                    append(cand.tokens, c_.name_suffix);
                    out.candidates.push_back(std::move(cand));
                }
                return out;
            case FsmPhase::Suffix: {
                StructuralCandidate cand;
                cand.kind = StructuralCandidate::Kind::ForcedRun;
                cand.tool = s.active_tool;
                append(cand.tokens, std::span(c_.name_suffix).subspan(s.run_pos));
                out.candidates.push_back(std::move(cand));
                return out;
            }
            case FsmPhase::Slot: {
                const auto& tool = c_.tools[static_cast<std::size_t>(s.active_tool)];
                bool required_done = true;
                for (int p = 0; p < static_cast<int>(tool.params.size()); ++p) {
                    if (s.emitted_params >> p & 1) continue;
                    StructuralCandidate cand;
                    cand.kind = StructuralCandidate::Kind::ParamNameRun;
                    cand.tool = s.active_tool;
                    cand.param = p;
                    if (s.slot_space_pending) cand.tokens.push_back(c_.space);
                    append(cand.tokens, tool.params[static_cast<std::size_t>(p)].keyed_tokens);
                    out.candidates.push_back(std::move(cand));
                    if (tool.params[static_cast<std::size_t>(p)].required) required_done = false;
                }
                if (required_done) {
                    StructuralCandidate term;
                    term.kind = StructuralCandidate::Kind::Terminator;
                    term.tool = s.active_tool;
                    term.tokens = c_.call_terminator();
                    out.candidates.push_back(std::move(term));
                }
                return out;
            }
            case FsmPhase::Key: {
                const auto& tool = c_.tools[static_cast<std::size_t>(s.active_tool)];
                for (int p = 0; p < static_cast<int>(tool.params.size()); ++p) {
                    if (!(s.match_mask >> p & 1)) continue;
                    const auto& name = tool.params[static_cast<std::size_t>(p)].name_tokens;
                    if (name.size() < s.run_pos) continue;
                    StructuralCandidate cand;
                    cand.kind = StructuralCandidate::Kind::ParamNameRun;
                    cand.tool = s.active_tool;
                    cand.param = p;
                    append(cand.tokens, std::span(name).subspan(s.run_pos));
                    cand.tokens.push_back(c_.quote);
                    cand.tokens.push_back(c_.colon);
                    cand.tokens.push_back(c_.space);
                    out.candidates.push_back(std::move(cand));
                }
                return out;
            }
            case FsmPhase::SepColon: {
                StructuralCandidate cand;
                cand.kind = StructuralCandidate::Kind::ForcedRun;
                cand.tokens = {c_.colon, c_.space};
                out.candidates.push_back(std::move(cand));
                return out;
            }
            case FsmPhase::SepSpace: {
                StructuralCandidate cand;
                cand.kind = StructuralCandidate::Kind::ForcedRun;
                cand.tokens = {c_.space};
                out.candidates.push_back(std::move(cand));
                return out;
            }
            case FsmPhase::Closing: {
                StructuralCandidate cand;
                cand.kind = StructuralCandidate::Kind::ForcedRun;
                cand.tokens = {c_.close_brace};
                out.candidates.push_back(std::move(cand));
                return out;
            }
        }
        out.open_ended = true;
        return out;
    }

private:
    static void append(std::vector<TokenId>& dst, std::span<const TokenId> src) {
        dst.insert(dst.end(), src.begin(), src.end());
    }

    // Consumes one token. Returns (region label, optional event), or nullopt
    // when the token extends no legal run in a structural state.
    std::optional<std::pair<RegionLabel, std::optional<FsmEventKind>>> step_one(
            FsmState& s, TokenId tok) const {
        using Ret = std::pair<RegionLabel, std::optional<FsmEventKind>>;
        switch (s.phase) {
            case FsmPhase::None:
                if (tok == c_.call_open) {
                    s = FsmState{};
                    s.tag = StateTag::ToolName;
                    s.phase = FsmPhase::Prefix;
                    return Ret{RegionLabel::Scaffold, FsmEventKind::CallOpened};
                }
                return Ret{RegionLabel::FreeText, std::nullopt};

            case FsmPhase::Prefix:
                if (tok != c_.scaffold_prefix[s.run_pos]) return std::nullopt;
                if (++s.run_pos == c_.scaffold_prefix.size()) {
                    s.phase = FsmPhase::Name;
                    s.run_pos = 0;
                    s.match_mask = c_.tools.size() >= 64
                                       ? ~0ull
                                       : (1ull << c_.tools.size()) - 1;
                }
                return Ret{RegionLabel::Scaffold, std::nullopt};

            case FsmPhase::Name: {
                std::uint64_t next_mask = 0;
                int completed = -1;
                for (int t = 0; t < static_cast<int>(c_.tools.size()); ++t) {
                    if (!(s.match_mask >> t & 1)) continue;
                    const auto& name = c_.tools[static_cast<std::size_t>(t)].name_tokens;
                    if (name.size() > s.run_pos && name[s.run_pos] == tok)
                        next_mask |= 1ull << t;
                    if (name.size() == s.run_pos) completed = t;
                }
                if (next_mask != 0) {
                    s.match_mask = next_mask;
                    ++s.run_pos;
                    return Ret{RegionLabel::ToolName, std::nullopt};
                }
                if (completed >= 0 && tok == c_.name_suffix[0]) {
                    s.active_tool = completed;
                    s.phase = FsmPhase::Suffix;
                    s.run_pos = 1;
                    return Ret{RegionLabel::Scaffold, std::nullopt};
                }
                return std::nullopt;
            }

            case FsmPhase::Suffix:
                if (tok != c_.name_suffix[s.run_pos]) return std::nullopt;
                if (++s.run_pos == c_.name_suffix.size()) {
                    s.tag = StateTag::ParamName;
                    s.phase = FsmPhase::Slot;
                    s.run_pos = 0;
                    s.emitted_params = 0;
                    s.slot_space_pending = false;
                }
                return Ret{RegionLabel::Scaffold, std::nullopt};

            case FsmPhase::Slot:
                if (tok == c_.space) {
                    s.slot_space_pending = false;
                    return Ret{RegionLabel::Scaffold, std::nullopt};
                }
                if (tok == c_.quote) {
                    s.phase = FsmPhase::Key;
                    s.run_pos = 0;
                    s.slot_space_pending = false;
                    const auto& tool = c_.tools[static_cast<std::size_t>(s.active_tool)];
                    s.match_mask = 0;
                    for (int p = 0; p < static_cast<int>(tool.params.size()); ++p)
                        if (!(s.emitted_params >> p & 1)) s.match_mask |= 1ull << p;
                    return Ret{RegionLabel::Scaffold, std::nullopt};
                }
                if (tok == c_.close_brace) {
                    s.phase = FsmPhase::Closing;
                    return Ret{RegionLabel::Scaffold, std::nullopt};
                }
                return std::nullopt;

            case FsmPhase::Key: {
                const auto& tool = c_.tools[static_cast<std::size_t>(s.active_tool)];
                std::uint64_t next_mask = 0;
                int completed = -1;
                for (int p = 0; p < static_cast<int>(tool.params.size()); ++p) {
                    if (!(s.match_mask >> p & 1)) continue;
                    const auto& name = tool.params[static_cast<std::size_t>(p)].name_tokens;
                    if (name.size() > s.run_pos && name[s.run_pos] == tok)
                        next_mask |= 1ull << p;
                    if (name.size() == s.run_pos) completed = p;
                }
                if (next_mask != 0) {
                    s.match_mask = next_mask;
                    ++s.run_pos;
                    return Ret{RegionLabel::ParamName, std::nullopt};
                }
                if (completed >= 0 && tok == c_.quote) {
                    s.pending_param = completed;
                    s.phase = FsmPhase::SepColon;
                    return Ret{RegionLabel::Scaffold, std::nullopt};
                }
                return std::nullopt;
            }

            case FsmPhase::SepColon:
                if (tok != c_.colon) return std::nullopt;
                s.phase = FsmPhase::SepSpace;
                return Ret{RegionLabel::Scaffold, std::nullopt};

            case FsmPhase::SepSpace:
                if (tok != c_.space) return std::nullopt;
                s.tag = StateTag::ParamValue;
                s.phase = FsmPhase::Value;
                s.in_quote = false;
                s.backslash_run = 0;
                s.depth = 0;
                return Ret{RegionLabel::Scaffold, std::nullopt};

            case FsmPhase::Value: {
                if (s.in_quote) {
                    if (tok == c_.quote && s.backslash_run % 2 == 0) s.in_quote = false;
                    s.backslash_run = (tok == c_.backslash) ? s.backslash_run + 1 : 0;
                    return Ret{RegionLabel::ParamValue, std::nullopt};
                }
                if (tok == c_.quote) {
                    s.in_quote = true;
                    return Ret{RegionLabel::ParamValue, std::nullopt};
                }
                if (tok == c_.open_brace || tok == c_.open_bracket) {
                    ++s.depth;
                    return Ret{RegionLabel::ParamValue, std::nullopt};
                }
                if (tok == c_.close_bracket) {
                    if (s.depth == 0) return std::nullopt;
                    --s.depth;
                    return Ret{RegionLabel::ParamValue, std::nullopt};
                }
                if (tok == c_.close_brace) {
                    if (s.depth > 0) {
                        --s.depth;
                        return Ret{RegionLabel::ParamValue, std::nullopt};
                    }
                    // end of the parameters object: the pending value is done
                    if (s.pending_param >= 0) s.emitted_params |= 1ull << s.pending_param;
                    s.pending_param = -1;
                    s.phase = FsmPhase::Closing;
                    return Ret{RegionLabel::Scaffold, std::nullopt};
                }
                if (tok == c_.comma && s.depth == 0) {
                    if (s.pending_param >= 0) s.emitted_params |= 1ull << s.pending_param;
                    s.pending_param = -1;
                    s.tag = StateTag::ParamName;
                    s.phase = FsmPhase::Slot;
                    s.slot_space_pending = true;
                    return Ret{RegionLabel::Scaffold, std::nullopt};
                }
                return Ret{RegionLabel::ParamValue, std::nullopt};
            }

            case FsmPhase::Closing:
                if (tok != c_.close_brace) return std::nullopt;
                s = FsmState{};
                return Ret{RegionLabel::Scaffold, FsmEventKind::CallCompleted};
        }
        return std::nullopt;
    }

    CompiledSchema c_;
    std::vector<DelimiterRule> rules_;
};

inline Fsm build_fsm(CompiledSchema compiled) { return Fsm(std::move(compiled)); }

}  // namespace specdec
