#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "specdec/errors.hpp"
#include "specdec/tokenizer.hpp"
#include "specdec/types.hpp"

namespace specdec {

enum class ParamType : std::uint8_t { String, Integer, Number, Boolean, Enum, Object, Array };

inline const char* to_string(ParamType t) {
    switch (t) {
        case ParamType::String: return "string";
        case ParamType::Integer: return "integer";
        case ParamType::Number: return "number";
        case ParamType::Boolean: return "boolean";
        case ParamType::Enum: return "enum";
        case ParamType::Object: return "object";
        case ParamType::Array: return "array";
    }
    return "?";
}

struct ParamDef {
    std::string name;
    ParamType type = ParamType::String;
    bool required = true;
    std::vector<std::string> enum_values;  // non-empty iff type == Enum
};

struct ToolDef {
    std::string name;
    std::string description;
    std::vector<ParamDef> params;  // declaration order
};

struct ToolSchema {
    std::vector<ToolDef> tools;
};

// Token-level compilation of the canonical call template
//   {"name": "<TOOL>", "parameters": {"<P1>": <V1>, ...}}
// scaffold_prefix covers `{"name": "` (after the <tool_call> trigger), each
// tool's name_suffix covers `", "parameters": {`, and each parameter carries
// its name tokens plus the `"<p>": ` keyed run used for drafting.
struct CompiledSchema {
    struct CompiledParam {
        std::vector<TokenId> name_tokens;   // just the name pieces
        std::vector<TokenId> keyed_tokens;  // " name " :  SP
        std::vector<std::vector<TokenId>> value_candidates;  // tokenized enum literals
        bool required = true;
    };
    struct CompiledTool {
        std::vector<TokenId> name_tokens;
        std::vector<CompiledParam> params;
    };

    std::vector<TokenId> scaffold_prefix;  // { " name " : SP "
    std::vector<TokenId> name_suffix;      // " , SP " parameters " : SP {
    std::vector<CompiledTool> tools;

    // delimiters
    TokenId call_open = -1;       // <tool_call>
    TokenId quote = -1;
    TokenId colon = -1;
    TokenId comma = -1;           // value terminator
    TokenId space = -1;
    TokenId open_brace = -1;
    TokenId close_brace = -1;     // two of these form the call terminator
    TokenId open_bracket = -1;
    TokenId close_bracket = -1;
    TokenId backslash = -1;

    std::vector<TokenId> call_terminator() const { return {close_brace, close_brace}; }
};

namespace detail {

inline ParamType parse_param_type(const std::string& s, const std::string& path) {
    if (s == "string") return ParamType::String;
    if (s == "integer") return ParamType::Integer;
    if (s == "number") return ParamType::Number;
    if (s == "boolean") return ParamType::Boolean;
    if (s == "enum") return ParamType::Enum;
    if (s == "object") return ParamType::Object;
    if (s == "array") return ParamType::Array;
    throw DocParseError(path, "unknown parameter type '" + s + "'");
}

}  // namespace detail

// Parses a tool-documentation JSON document:
//   {"tools": [{"name": str, "description": str,
//               "parameters": {"<pname>": {"type": str, "required": bool, "enum": [str]?}}}]}
// Parameter order follows document order. Unknown fields are ignored. Tool
// and parameter names must be non-empty, unique, and free of the quote,
// backslash, and marker literals the token-run matcher keys on.
inline ToolSchema parse_tool_docs(const std::string& doc_text,
                                  const std::string& doc_path = "<doc>") {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(doc_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DocParseError(doc_path, e.what());
    }
    if (!doc.is_object() || !doc.contains("tools") || !doc["tools"].is_array())
        throw DocParseError(doc_path, "expected top-level object with a \"tools\" array");
    if (doc["tools"].empty())
        throw DocParseError(doc_path, "tools list is empty");

    auto check_name = [&](const std::string& name, const std::string& where) {
        if (name.empty()) throw DocParseError(doc_path, where + ": empty name");
        if (name.find('"') != std::string::npos || name.find('\\') != std::string::npos ||
            name.find('<') != std::string::npos || name.find('>') != std::string::npos)
            throw DocParseError(doc_path, where + ": name '" + name +
                                              "' contains a reserved character");
    };

    ToolSchema schema;
    std::set<std::string> tool_names;
    for (const auto& jt : doc["tools"]) {
        if (!jt.is_object() || !jt.contains("name") || !jt["name"].is_string())
            throw DocParseError(doc_path, "tool entry missing string \"name\"");
        ToolDef tool;
        tool.name = jt["name"].get<std::string>();
        check_name(tool.name, "tool");
        if (!tool_names.insert(tool.name).second)
            throw DuplicateToolError(doc_path, "duplicate tool '" + tool.name + "'");
        if (jt.contains("description") && jt["description"].is_string())
            tool.description = jt["description"].get<std::string>();

        if (jt.contains("parameters")) {
            const auto& jp = jt["parameters"];
            if (!jp.is_object())
                throw DocParseError(doc_path, "tool '" + tool.name +
                                                  "': \"parameters\" must be an object");
            std::set<std::string> pnames;
            for (auto it = jp.begin(); it != jp.end(); ++it) {
                ParamDef p;
                p.name = it.key();
                check_name(p.name, "tool '" + tool.name + "' parameter");
                if (!pnames.insert(p.name).second)
                    throw DuplicateParamError(doc_path, "tool '" + tool.name +
                                                            "': duplicate parameter '" +
                                                            p.name + "'");
                const auto& jd = it.value();
                if (!jd.is_object())
                    throw DocParseError(doc_path, "parameter '" + p.name +
                                                      "' definition must be an object");
                if (jd.contains("type") && jd["type"].is_string())
                    p.type = detail::parse_param_type(jd["type"].get<std::string>(), doc_path);
                if (jd.contains("required") && jd["required"].is_boolean())
                    p.required = jd["required"].get<bool>();
                if (jd.contains("enum")) {
                    if (!jd["enum"].is_array() || jd["enum"].empty())
                        throw DocParseError(doc_path, "parameter '" + p.name +
                                                          "': \"enum\" must be a non-empty array");
                    for (const auto& v : jd["enum"]) {
                        if (!v.is_string())
                            throw DocParseError(doc_path, "parameter '" + p.name +
                                                              "': enum values must be strings");
                        p.enum_values.push_back(v.get<std::string>());
                    }
                    p.type = ParamType::Enum;
                }
                if (p.type == ParamType::Enum && p.enum_values.empty())
                    throw DocParseError(doc_path, "parameter '" + p.name +
                                                      "': enum type without enum values");
                tool.params.push_back(std::move(p));
            }
            if (tool.params.size() > 64)
                throw DocParseError(doc_path, "tool '" + tool.name + "': more than 64 parameters");
        }
        schema.tools.push_back(std::move(tool));
    }
    if (schema.tools.size() > 64)
        throw DocParseError(doc_path, "more than 64 tools");
    return schema;
}

// Compiles the schema against a tokenizer. Deterministic for identical inputs.
inline CompiledSchema compile_schema(const ToolSchema& schema, Tokenizer& tok) {
    CompiledSchema out;
    out.scaffold_prefix = tok.encode("{\"name\": \"");
    out.name_suffix = tok.encode("\", \"parameters\": {");
    out.call_open = tok.tool_call_open();
    out.quote = tok.encode("\"").at(0);
    out.colon = tok.encode(":").at(0);
    out.comma = tok.encode(",").at(0);
    out.space = tok.encode(" ").at(0);
    out.open_brace = tok.encode("{").at(0);
    out.close_brace = tok.encode("}").at(0);
    out.open_bracket = tok.encode("[").at(0);
    out.close_bracket = tok.encode("]").at(0);
    out.backslash = tok.encode("\\").at(0);

    for (const auto& tool : schema.tools) {
        CompiledSchema::CompiledTool ct;
        ct.name_tokens = tok.encode(tool.name);
        for (const auto& p : tool.params) {
            CompiledSchema::CompiledParam cp;
            cp.name_tokens = tok.encode(p.name);
            cp.keyed_tokens = tok.encode("\"" + p.name + "\": ");
            cp.required = p.required;
            for (const auto& v : p.enum_values)
                cp.value_candidates.push_back(tok.encode("\"" + v + "\""));
            ct.params.push_back(std::move(cp));
        }
        out.tools.push_back(std::move(ct));
    }
    return out;
}

enum class ViolationKind : std::uint8_t {
    NotJson,
    ExtraneousText,
    MarkdownFence,
    XmlTag,
    MalformedStructure,
};

inline const char* to_string(ViolationKind v) {
    switch (v) {
        case ViolationKind::NotJson: return "not_json";
        case ViolationKind::ExtraneousText: return "extraneous_text";
        case ViolationKind::MarkdownFence: return "markdown_fence";
        case ViolationKind::XmlTag: return "xml_tag";
        case ViolationKind::MalformedStructure: return "malformed_structure";
    }
    return "?";
}

struct AdherenceReport {
    bool adherent = false;
    std::optional<ViolationKind> violation;
    std::optional<std::size_t> location;  // character offset
};

namespace detail {

// span [start, end) of a balanced JSON object starting at `start`, honoring
// strings and escapes; nullopt when unbalanced
inline std::optional<std::size_t> balanced_object_end(std::string_view text, std::size_t start) {
    int depth = 0;
    bool in_str = false;
    bool esc = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (in_str) {
            if (esc) esc = false;
            else if (c == '\\') esc = true;
            else if (c == '"') in_str = false;
            continue;
        }
        if (c == '"') in_str = true;
        else if (c == '{') ++depth;
        else if (c == '}') {
            --depth;
            if (depth == 0) return i + 1;
        }
    }
    return std::nullopt;
}

}  // namespace detail

// Strict format adherence: the text must be exactly one valid JSON object
// with top-level keys {"name","parameters"} (name a string, parameters an
// object) and nothing outside it; surrounding whitespace is benign.
inline AdherenceReport check_format_adherence(std::string_view text) {
    auto report_violation = [](ViolationKind k, std::size_t at) {
        AdherenceReport r;
        r.adherent = false;
        r.violation = k;
        r.location = at;
        return r;
    };

    std::size_t begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return report_violation(ViolationKind::NotJson, 0);
    std::size_t end = text.find_last_not_of(" \t\r\n") + 1;
    std::string_view body = text.substr(begin, end - begin);

    if (body.substr(0, 3) == "```") return report_violation(ViolationKind::MarkdownFence, begin);
    if (body.front() == '<') return report_violation(ViolationKind::XmlTag, begin);
    if (body.front() == '[') return report_violation(ViolationKind::MalformedStructure, begin);
    if (body.front() != '{') {
        // leading natural language; extraneous only if a JSON object follows
        if (body.find('{') != std::string_view::npos)
            return report_violation(ViolationKind::ExtraneousText, begin);
        return report_violation(ViolationKind::NotJson, begin);
    }

    auto obj_end = detail::balanced_object_end(body, 0);
    if (!obj_end) return report_violation(ViolationKind::MalformedStructure, begin);
    std::string_view obj = body.substr(0, *obj_end);
    std::string_view tail = body.substr(*obj_end);
    std::size_t tail_ws = tail.find_first_not_of(" \t\r\n");
    if (tail_ws != std::string_view::npos) {
        if (tail.substr(tail_ws, 3) == "```")
            return report_violation(ViolationKind::MarkdownFence, begin + *obj_end + tail_ws);
        if (tail[tail_ws] == '<')
            return report_violation(ViolationKind::XmlTag, begin + *obj_end + tail_ws);
        return report_violation(ViolationKind::ExtraneousText, begin + *obj_end + tail_ws);
    }

    nlohmann::json parsed = nlohmann::json::parse(obj, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object())
        return report_violation(ViolationKind::MalformedStructure, begin);
    if (parsed.size() != 2 || !parsed.contains("name") || !parsed.contains("parameters") ||
        !parsed["name"].is_string() || !parsed["parameters"].is_object())
        return report_violation(ViolationKind::MalformedStructure, begin);

    AdherenceReport r;
    r.adherent = true;
    return r;
}

// Deterministic prompt rendering: system line, one documentation line per
// tool (an invocation template plus the description), the user query, and a
// trailing <tool_call> trigger so generation starts inside the call.
inline std::string render_prompt(const ToolSchema& schema, std::string_view query) {
    std::string out = "System: respond with a tool call. Available tools:\n";
    for (const auto& tool : schema.tools) {
        out += "<tool_call>{\"name\": \"" + tool.name + "\", \"parameters\": {";
        bool first = true;
        for (const auto& p : tool.params) {
            if (!first) out += ", ";
            first = false;
            out += "\"" + p.name + "\": ";
            if (!p.enum_values.empty()) out += "\"" + p.enum_values.front() + "\"";
            else out += "\"" + std::string(to_string(p.type)) + "\"";
        }
        out += "}}</tool_call> " + tool.name;
        if (!tool.description.empty()) out += ": " + tool.description;
        out += "\n";
    }
    out += "User: ";
    out += query;
    out += "\nAssistant: <tool_call>";
    return out;
}

}  // namespace specdec
