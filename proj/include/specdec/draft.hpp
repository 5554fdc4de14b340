#pragma once

#include <optional>
#include <vector>

#include "specdec/errors.hpp"
#include "specdec/fsm.hpp"
#include "specdec/types.hpp"

namespace specdec {

namespace detail {

inline DraftCandidate to_candidate(const StructuralCandidate& sc, DraftSource source,
                                   std::size_t budget) {
    DraftCandidate c;
    c.tokens = sc.tokens;
    if (c.tokens.size() > budget) c.tokens.resize(budget);
    c.source = source;
    c.meta_id = sc.param >= 0 ? sc.param : sc.tool;
    return c;
}

}  // namespace detail

// One candidate per tool in the schema: the remaining scaffold prefix, the
// tool name, and the suffix through the opening brace of the parameters
// object, each capped at the drafting budget.
inline std::vector<DraftCandidate> draft_tool_names(const Fsm& fsm, const FsmState& state,
                                                    std::size_t budget = 64) {
    if (state.tag != StateTag::ToolName)
        throw WrongStateError("draft_tool_names: state is " + std::string(to_string(state.tag)));
    auto legal = fsm.legal_continuations(state);
    std::vector<DraftCandidate> out;
    for (const auto& sc : legal.candidates)
        out.push_back(detail::to_candidate(sc, DraftSource::SchemaToolName, budget));
    return out;
}

// One candidate per unemitted parameter (keyed `"name": ` run), plus the
// `}}` call terminator once every required parameter has been emitted.
inline std::vector<DraftCandidate> draft_param_names(const Fsm& fsm, const FsmState& state,
                                                     std::size_t budget = 64) {
    if (state.tag != StateTag::ParamName || state.active_tool < 0)
        throw WrongStateError("draft_param_names: state is " +
                              std::string(to_string(state.tag)));
    auto legal = fsm.legal_continuations(state);
    std::vector<DraftCandidate> out;
    for (const auto& sc : legal.candidates)
        out.push_back(detail::to_candidate(sc, DraftSource::SchemaParamName, budget));
    return out;
}

// When the schema pins the upcoming tokens to a single run (a separator, the
// tail of the name suffix, the closing brace, a lone remaining required
// parameter), returns that run; otherwise absent.
inline std::optional<DraftCandidate> schema_fill(const Fsm& fsm, const FsmState& state,
                                                 std::size_t budget = 64) {
    auto legal = fsm.legal_continuations(state);
    if (legal.open_ended || legal.candidates.size() != 1) return std::nullopt;
    return detail::to_candidate(legal.candidates.front(), DraftSource::SchemaFill, budget);
}

// Dispatcher used by the decode loop: structural states yield the matching
// candidate set, open-ended states yield nothing.
inline std::vector<DraftCandidate> schema_candidates(const Fsm& fsm, const FsmState& state,
                                                     std::size_t budget = 64) {
    if (state.tag == StateTag::ToolName) return draft_tool_names(fsm, state, budget);
    if (state.tag == StateTag::ParamName && (state.phase == FsmPhase::Slot ||
                                             state.phase == FsmPhase::Key))
        return draft_param_names(fsm, state, budget);
    if (auto fill = schema_fill(fsm, state, budget)) return {*fill};
    return {};
}

}  // namespace specdec
