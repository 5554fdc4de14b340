#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "specdec/draft.hpp"
#include "specdec/fsm.hpp"
#include "specdec/schema.hpp"
#include "specdec/tokenizer.hpp"
#include "specdec/tree.hpp"

using namespace specdec;

namespace {

struct Fixture {
    Tokenizer tok;
    ToolSchema schema;
    Fsm fsm;

    explicit Fixture(const std::string& doc)
        : schema(parse_tool_docs(doc)), fsm(build_fsm(compile_schema(schema, tok))) {}

    FsmState after(const std::string& text) {
        auto adv = fsm.advance(fsm.initial(), tok.encode(text));
        REQUIRE(adv.ok());
        return adv.state;
    }
};

}  // namespace

TEST_CASE("draft_tool_names: one candidate per tool, gold decode included") {
    Fixture fx(R"({"tools": [{"name": "ForgotPassword", "parameters": {
        "Status": {"type": "string"}}}]})");
    auto state = fx.after("<tool_call>");
    auto cands = draft_tool_names(fx.fsm, state);
    REQUIRE(cands.size() == 1);
    auto text = fx.tok.decode(cands[0].tokens);
    CHECK(text.find("\"name\": \"ForgotPassword\"") != std::string::npos);
    CHECK(cands[0].source == DraftSource::SchemaToolName);
}

TEST_CASE("draft_tool_names: five tools within budget") {
    Fixture fx(R"({"tools": [
        {"name": "AToolOne", "parameters": {}}, {"name": "BToolTwo", "parameters": {}},
        {"name": "CToolThree", "parameters": {}}, {"name": "DToolFour", "parameters": {}},
        {"name": "EToolFive", "parameters": {}}]})");
    auto state = fx.after("<tool_call>");
    auto cands = draft_tool_names(fx.fsm, state, 64);
    REQUIRE(cands.size() == 5);
    for (const auto& c : cands) CHECK(c.tokens.size() <= 64);
}

TEST_CASE("draft_tool_names rejects non-ToolName states") {
    Fixture fx(R"({"tools": [{"name": "A", "parameters": {}}]})");
    CHECK_THROWS_AS(draft_tool_names(fx.fsm, fx.fsm.initial()), WrongStateError);
}

TEST_CASE("tools sharing a prefix merge in the packed tree") {
    Fixture fx(R"({"tools": [{"name": "Get.Weather", "parameters": {}},
                             {"name": "Get.Time", "parameters": {}}]})");
    auto state = fx.after("<tool_call>");
    auto cands = draft_tool_names(fx.fsm, state);
    REQUIRE(cands.size() == 2);
    auto tree = pack(cands, 256);
    // shared: scaffold prefix + "Get" + "." ; then two distinct tails
    std::size_t shared = fx.fsm.compiled().scaffold_prefix.size() + 2;
    std::size_t tail_sum = 0;
    for (const auto& c : cands) tail_sum += c.tokens.size() - shared;
    CHECK(tree.size() == shared + tail_sum);
}

TEST_CASE("draft_param_names enumerates unemitted params and the terminator") {
    Fixture fx(R"({"tools": [{"name": "T", "parameters": {
        "Status": {"type": "string", "required": true},
        "Username": {"type": "string", "required": true},
        "extra": {"type": "string", "required": false}}}]})");

    SECTION("none emitted: one candidate per param, no terminator") {
        auto state = fx.after("<tool_call>{\"name\": \"T\", \"parameters\": {");
        auto cands = draft_param_names(fx.fsm, state);
        REQUIRE(cands.size() == 3);
        std::set<std::string> decoded;
        for (const auto& c : cands) decoded.insert(fx.tok.decode(c.tokens));
        CHECK(decoded.count("\"Status\": ") == 1);
        CHECK(decoded.count("\"Username\": ") == 1);
        CHECK(decoded.count("\"extra\": ") == 1);
    }

    SECTION("one required emitted: remaining two (terminator still blocked)") {
        // slot entered via the comma, space not yet emitted: candidates lead with it
        auto at_comma = fx.after(
            "<tool_call>{\"name\": \"T\", \"parameters\": {\"Status\": \"x\",");
        auto cands = draft_param_names(fx.fsm, at_comma);
        REQUIRE(cands.size() == 2);
        for (const auto& c : cands) CHECK(fx.tok.decode(c.tokens).front() == ' ');

        // once the space is consumed the candidates start at the quote
        auto after_space = fx.after(
            "<tool_call>{\"name\": \"T\", \"parameters\": {\"Status\": \"x\", ");
        auto cands2 = draft_param_names(fx.fsm, after_space);
        REQUIRE(cands2.size() == 2);
        for (const auto& c : cands2) CHECK(fx.tok.decode(c.tokens).front() == '"');
    }

    SECTION("all required emitted: terminator appears") {
        auto state = fx.after(
            "<tool_call>{\"name\": \"T\", \"parameters\": {\"Status\": \"x\", "
            "\"Username\": \"y\", ");
        auto cands = draft_param_names(fx.fsm, state);
        REQUIRE(cands.size() == 2);  // "extra" + terminator
        bool saw_term = false;
        for (const auto& c : cands)
            if (fx.tok.decode(c.tokens) == "}}") saw_term = true;
        CHECK(saw_term);
    }

    SECTION("wrong state throws") {
        CHECK_THROWS_AS(draft_param_names(fx.fsm, fx.fsm.initial()), WrongStateError);
    }
}

TEST_CASE("schema_fill returns forced runs only") {
    Fixture fx(R"({"tools": [{"name": "T", "parameters": {
        "a": {"type": "string", "required": true},
        "b": {"type": "string", "required": false}}}]})");

    SECTION("separator after an accepted param name") {
        auto state = fx.after("<tool_call>{\"name\": \"T\", \"parameters\": {\"a\"");
        auto fill = schema_fill(fx.fsm, state);
        REQUIRE(fill.has_value());
        CHECK(fx.tok.decode(fill->tokens) == ": ");
        CHECK(fill->source == DraftSource::SchemaFill);
    }

    SECTION("Others mid-sentence: nothing forced") {
        auto state = fx.after("thinking about it");
        CHECK(!schema_fill(fx.fsm, state).has_value());
    }

    SECTION("single remaining required param is uniquely determined") {
        Fixture fx2(R"({"tools": [{"name": "T", "parameters": {
            "a": {"type": "string", "required": true},
            "b": {"type": "string", "required": true}}}]})");
        auto state = fx2.after(
            "<tool_call>{\"name\": \"T\", \"parameters\": {\"a\": \"x\",");
        auto fill = schema_fill(fx2.fsm, state);
        REQUIRE(fill.has_value());
        CHECK(fx2.tok.decode(fill->tokens) == " \"b\": ");
    }

    SECTION("two candidates: not forced") {
        auto state = fx.after("<tool_call>{\"name\": \"T\", \"parameters\": {");
        // "a" required unemitted and "b" optional -> two name candidates
        CHECK(!schema_fill(fx.fsm, state).has_value());
    }

    SECTION("second closing brace is forced") {
        auto state = fx.after(
            "<tool_call>{\"name\": \"T\", \"parameters\": {\"a\": \"x\"}");
        auto fill = schema_fill(fx.fsm, state);
        REQUIRE(fill.has_value());
        CHECK(fx.tok.decode(fill->tokens) == "}");
    }
}

TEST_CASE("soundness: structural candidates never trip the FSM") {
    Fixture fx(R"({"tools": [
        {"name": "ForgotPassword", "parameters": {
            "Status": {"type": "string"}, "Username": {"type": "string"}}},
        {"name": "Get.Weather", "parameters": {"city": {"type": "string"}}}]})");

    std::vector<std::string> prefixes = {
        "<tool_call>",
        "<tool_call>{\"name\": \"",
        "<tool_call>{\"name\": \"Get",
        "<tool_call>{\"name\": \"ForgotPassword\", \"parameters\": {",
        "<tool_call>{\"name\": \"ForgotPassword\", \"parameters\": {\"Status\": \"v\", ",
        "<tool_call>{\"name\": \"Get.Weather\", \"parameters\": {\"city\"",
    };
    for (const auto& prefix : prefixes) {
        auto state = fx.after(prefix);
        auto cands = schema_candidates(fx.fsm, state);
        for (const auto& c : cands) {
            auto adv = fx.fsm.advance(state, c.tokens);
            INFO("prefix: " << prefix << " candidate: " << fx.tok.decode(c.tokens));
            CHECK(adv.ok());
        }
    }
}

TEST_CASE("coverage: the gold structural run is always among the candidates") {
    Fixture fx(R"({"tools": [
        {"name": "ForgotPassword", "parameters": {"Status": {"type": "string"}}},
        {"name": "GetWeather", "parameters": {"city": {"type": "string"}}},
        {"name": "GetTime", "parameters": {}}]})");
    for (const auto& tool : fx.schema.tools) {
        auto state = fx.after("<tool_call>");
        auto gold = fx.tok.encode("{\"name\": \"" + tool.name + "\", \"parameters\": {");
        auto cands = draft_tool_names(fx.fsm, state, 256);
        bool found = false;
        for (const auto& c : cands)
            if (c.tokens == gold) found = true;
        CHECK(found);
    }
}

TEST_CASE("no duplicate candidate token sequences in one call") {
    Fixture fx(R"({"tools": [
        {"name": "AA", "parameters": {"x": {"type": "string"}}},
        {"name": "AB", "parameters": {"x": {"type": "string"}}},
        {"name": "B", "parameters": {}}]})");
    auto state = fx.after("<tool_call>");
    auto cands = schema_candidates(fx.fsm, state);
    std::set<std::vector<TokenId>> uniq;
    for (const auto& c : cands) uniq.insert(c.tokens);
    CHECK(uniq.size() == cands.size());
}
