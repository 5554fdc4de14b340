#pragma once

#include <cctype>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "specdec/errors.hpp"
#include "specdec/types.hpp"

namespace specdec {

// Toy word-piece tokenizer. Units are maximal [A-Za-z0-9_] runs, single
// punctuation characters, and single whitespace characters, so structural
// JSON tokens ({ } " : ,) are each one TokenId and decode(encode(s)) == s.
// The tool-call markers and the end-of-sequence marker are atomic specials.
// New pieces are interned on first sight; ids are stable once assigned.
class Tokenizer {
public:
    Tokenizer() {
        tool_call_open_ = intern("<tool_call>");
        tool_call_close_ = intern("</tool_call>");
        eos_ = intern("</s>");
    }

    std::vector<TokenId> encode(std::string_view text) {
        std::vector<TokenId> out;
        std::size_t pos = 0;
        while (pos < text.size()) {
            if (auto sp = match_special(text, pos)) {
                out.push_back(sp->first);
                pos += sp->second;
                continue;
            }
            unsigned char c = static_cast<unsigned char>(text[pos]);
            if (!encodable(c)) {
                throw UnknownSymbolError("unencodable byte 0x" + to_hex(c) +
                                         " at offset " + std::to_string(pos));
            }
            if (is_word_char(c)) {
                std::size_t end = pos + 1;
                while (end < text.size() && is_word_char(static_cast<unsigned char>(text[end])))
                    ++end;
                out.push_back(intern(text.substr(pos, end - pos)));
                pos = end;
            } else {
                out.push_back(intern(text.substr(pos, 1)));
                pos += 1;
            }
        }
        return out;
    }

    std::string decode(std::span<const TokenId> tokens) const {
        std::string out;
        for (TokenId t : tokens) out += piece(t);
        return out;
    }

    const std::string& piece(TokenId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size())
            throw Error("token id " + std::to_string(id) + " out of range");
        return pieces_[static_cast<std::size_t>(id)];
    }

    // id of an already-interned piece, or -1
    TokenId lookup(std::string_view piece) const {
        auto it = ids_.find(std::string(piece));
        return it == ids_.end() ? -1 : it->second;
    }

    int vocab_size() const { return static_cast<int>(pieces_.size()); }

    TokenId tool_call_open() const { return tool_call_open_; }
    TokenId tool_call_close() const { return tool_call_close_; }
    TokenId eos() const { return eos_; }

    bool is_special(TokenId id) const {
        return id == tool_call_open_ || id == tool_call_close_ || id == eos_;
    }

private:
    static bool is_word_char(unsigned char c) {
        return std::isalnum(c) != 0 || c == '_';
    }
    static bool encodable(unsigned char c) {
        return std::isprint(c) != 0 || c == '\t' || c == '\n';
    }
    static std::string to_hex(unsigned char c) {
        static const char* d = "0123456789abcdef";
        return {d[c >> 4], d[c & 0xf]};
    }

    static constexpr std::string_view kSpecials[3] = {"</tool_call>", "<tool_call>", "</s>"};

    std::optional<std::pair<TokenId, std::size_t>> match_special(std::string_view text,
                                                                 std::size_t pos) const {
        for (auto s : kSpecials) {
            if (text.substr(pos, s.size()) == s) {
                return std::make_pair(ids_.at(std::string(s)), s.size());
            }
        }
        return std::nullopt;
    }

    TokenId intern(std::string_view piece) {
        auto it = ids_.find(std::string(piece));
        if (it != ids_.end()) return it->second;
        TokenId id = static_cast<TokenId>(pieces_.size());
        pieces_.emplace_back(piece);
        ids_.emplace(pieces_.back(), id);
        return id;
    }

    std::vector<std::string> pieces_;
    std::unordered_map<std::string, TokenId> ids_;
    TokenId tool_call_open_ = -1;
    TokenId tool_call_close_ = -1;
    TokenId eos_ = -1;
};

}  // namespace specdec
