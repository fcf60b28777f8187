#pragma once

// Minimal lexer for the Python subset that tool-maker programs use.
// Nothing here evaluates code; it only splits source into logical lines
// and tokens.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "tabrex/error.hpp"
#include "tabrex/strings.hpp"

namespace tabrex::pysrc {

enum class TokenKind { name, number, string, op };

struct Token {
    TokenKind kind;
    std::string text;
    friend bool operator==(const Token&, const Token&) = default;
};

struct LogicalLine {
    std::size_t indent = 0;   ///< columns, tabs expanded to multiples of 8
    std::size_t line_no = 0;  ///< 1-based physical line where it starts
    std::vector<Token> tokens;
    std::string text;         ///< raw source slice, comments included
};

inline bool is_keyword(std::string_view s) {
    static constexpr std::array<std::string_view, 35> kw = {
        "False", "None",   "True",    "and",      "as",       "assert", "async", "await", "break",
        "class", "continue", "def",   "del",      "elif",     "else",   "except", "finally", "for",
        "from",  "global", "if",      "import",   "in",       "is",     "lambda", "nonlocal", "not",
        "or",    "pass",   "raise",   "return",   "try",      "while",  "with",   "yield"};
    for (auto k : kw)
        if (k == s) return true;
    return false;
}

namespace detail {

inline bool name_start(char c) {
    auto u = static_cast<unsigned char>(c);
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || u >= 0x80;
}
inline bool name_char(char c) { return name_start(c) || (c >= '0' && c <= '9'); }
inline bool digit(char c) { return c >= '0' && c <= '9'; }

inline bool string_prefix(std::string_view s) {
    if (s.size() > 2) return false;
    for (char c : s) {
        char l = static_cast<char>(c | 0x20);
        if (l != 'r' && l != 'b' && l != 'f' && l != 'u') return false;
    }
    return true;
}

} // namespace detail

/// Splits source into logical lines: bracketed continuations and backslash
/// continuations are joined, comments dropped, blank lines skipped.
/// Throws SyntaxError on an unterminated string.
inline std::vector<LogicalLine> logical_lines(std::string_view src) {
    static constexpr std::array<std::string_view, 5> ops3 = {"**=", "//=", ">>=", "<<=", "..."};
    static constexpr std::array<std::string_view, 19> ops2 = {"==", "!=", "<=", ">=", "+=", "-=", "*=",
                                                              "/=", "%=", "&=", "|=", "^=", "->", "**",
                                                              "//", "<<", ">>", ":=", "@="};
    std::vector<LogicalLine> out;
    LogicalLine cur;
    bool at_line_start = true;
    int depth = 0;
    std::size_t line = 1;
    std::size_t start_offset = 0;
    std::size_t i = 0;
    const std::size_t n = src.size();

    auto finish = [&](std::size_t end) {
        if (!cur.tokens.empty()) {
            cur.text = std::string(strings::trim(src.substr(start_offset, end - start_offset)));
            out.push_back(std::move(cur));
        }
        cur = LogicalLine{};
        at_line_start = true;
        depth = 0;
    };

    while (i < n) {
        if (at_line_start) {
            std::size_t col = 0;
            std::size_t j = i;
            while (j < n && (src[j] == ' ' || src[j] == '\t')) {
                col = src[j] == '\t' ? (col / 8 + 1) * 8 : col + 1;
                ++j;
            }
            cur.indent = col;
            cur.line_no = line;
            start_offset = j;
            i = j;
            at_line_start = false;
            continue;
        }
        const char c = src[i];
        if (c == '\n') {
            ++line;
            ++i;
            if (depth > 0) continue;
            finish(i - 1);
            continue;
        }
        if (c == '\r' || c == ' ' || c == '\t' || c == '\f') { ++i; continue; }
        if (c == '\\' && i + 1 < n && (src[i + 1] == '\n' || src[i + 1] == '\r')) {
            i += src[i + 1] == '\r' && i + 2 < n && src[i + 2] == '\n' ? 3 : 2;
            ++line;
            continue;
        }
        if (c == '#') {
            while (i < n && src[i] != '\n') ++i;
            continue;
        }
        // Names, possibly a string prefix.
        if (detail::name_start(c)) {
            std::size_t j = i;
            while (j < n && detail::name_char(src[j])) ++j;
            std::string_view word = src.substr(i, j - i);
            if (j < n && (src[j] == '"' || src[j] == '\'') && detail::string_prefix(word)) {
                // fall through to string scanning starting at the prefix
            } else {
                cur.tokens.push_back({TokenKind::name, std::string(word)});
                i = j;
                continue;
            }
        }
        if (detail::digit(c) || (c == '.' && i + 1 < n && detail::digit(src[i + 1]))) {
            std::size_t j = i;
            while (j < n && (detail::name_char(src[j]) || src[j] == '.' ||
                             ((src[j] == '+' || src[j] == '-') && (src[j - 1] == 'e' || src[j - 1] == 'E'))))
                ++j;
            cur.tokens.push_back({TokenKind::number, std::string(src.substr(i, j - i))});
            i = j;
            continue;
        }
        {
            std::size_t j = i;
            while (j < n && detail::name_char(src[j])) ++j;
            if (j < n && (src[j] == '"' || src[j] == '\'')) {
                const char q = src[j];
                const bool triple = j + 2 < n && src[j + 1] == q && src[j + 2] == q;
                const std::size_t start_line = line;
                std::size_t k = j + (triple ? 3 : 1);
                const bool raw = src.substr(i, j - i).find_first_of("rR") != std::string_view::npos;
                bool closed = false;
                while (k < n) {
                    if (src[k] == '\\' && !raw && k + 1 < n) {
                        if (src[k + 1] == '\n') ++line;
                        k += 2;
                        continue;
                    }
                    if (src[k] == '\\' && raw && k + 1 < n) { k += 2; continue; }
                    if (src[k] == '\n') {
                        if (!triple) break;
                        ++line;
                    }
                    if (src[k] == q) {
                        if (!triple) { ++k; closed = true; break; }
                        if (k + 2 < n && src[k + 1] == q && src[k + 2] == q) { k += 3; closed = true; break; }
                    }
                    ++k;
                }
                if (!closed) throw SyntaxError(start_line, "unterminated string literal");
                cur.tokens.push_back({TokenKind::string, std::string(src.substr(i, k - i))});
                i = k;
                continue;
            }
        }
        std::string_view rest = src.substr(i);
        std::string_view op;
        for (auto o : ops3)
            if (rest.starts_with(o)) { op = o; break; }
        if (op.empty())
            for (auto o : ops2)
                if (rest.starts_with(o)) { op = o; break; }
        if (op.empty()) op = rest.substr(0, 1);
        if (op == "(" || op == "[" || op == "{") ++depth;
        if ((op == ")" || op == "]" || op == "}") && depth > 0) --depth;
        cur.tokens.push_back({TokenKind::op, std::string(op)});
        i += op.size();
    }
    finish(n);
    return out;
}

/// Value of a Python string literal token (prefixes and quotes removed,
/// common escapes decoded).
inline std::string decode_string(std::string_view raw) {
    std::size_t p = 0;
    bool is_raw = false;
    while (p < raw.size() && raw[p] != '"' && raw[p] != '\'') {
        if (raw[p] == 'r' || raw[p] == 'R') is_raw = true;
        ++p;
    }
    std::string_view body = raw.substr(p);
    const std::size_t q = body.size() >= 6 && (body.starts_with("\"\"\"") || body.starts_with("'''")) ? 3 : 1;
    body = body.substr(q, body.size() - 2 * q);
    if (is_raw) return std::string(body);
    std::string out;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] != '\\' || i + 1 >= body.size()) {
            out.push_back(body[i]);
            continue;
        }
        const char e = body[++i];
        switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case '\\': out.push_back('\\'); break;
        case '\'': out.push_back('\''); break;
        case '"': out.push_back('"'); break;
        case '\n': break;
        default: out.push_back('\\'); out.push_back(e);
        }
    }
    return out;
}

/// A top-level `def` block cut out of a larger source text.
struct FunctionBlock {
    std::string name;
    std::vector<std::string> params;
    std::string source;  ///< the whole block, header included
};

namespace detail {

inline std::vector<std::string> parse_params(const std::vector<Token>& toks, std::size_t open) {
    std::vector<std::string> params;
    int depth = 0;
    bool expect_name = true;
    for (std::size_t k = open + 1; k < toks.size(); ++k) {
        const auto& t = toks[k];
        if (t.kind == TokenKind::op && (t.text == "(" || t.text == "[" || t.text == "{")) ++depth;
        else if (t.kind == TokenKind::op && (t.text == ")" || t.text == "]" || t.text == "}")) {
            if (depth == 0) break;
            --depth;
        } else if (depth == 0 && t.kind == TokenKind::op && t.text == ",") {
            expect_name = true;
        } else if (depth == 0 && expect_name && t.kind == TokenKind::name) {
            params.push_back(t.text);
            expect_name = false;
        } else if (depth == 0 && t.kind == TokenKind::op && (t.text == "*" || t.text == "**" || t.text == "/")) {
            // keep expecting the name that follows
        } else if (depth == 0) {
            expect_name = false;
        }
    }
    return params;
}

} // namespace detail

/// Finds column-0 `def` blocks. A block runs until the next non-blank line
/// at column 0.
inline std::vector<FunctionBlock> top_level_functions(std::string_view src) {
    std::vector<FunctionBlock> out;
    auto lines = strings::split_lines(src);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& l = lines[i];
        if (!l.starts_with("def ")) continue;
        std::size_t end = i + 1;
        while (end < lines.size()) {
            const std::string& next = lines[end];
            if (!strings::trim(next).empty() && !(next[0] == ' ' || next[0] == '\t')) {
                // a closing bracket of a multi-line signature still belongs to the header
                if (next[0] == ')' && end == i + 1) { ++end; continue; }
                break;
            }
            ++end;
        }
        std::size_t last = end;
        while (last > i + 1 && strings::trim(lines[last - 1]).empty()) --last;
        std::vector<std::string> block(lines.begin() + static_cast<std::ptrdiff_t>(i),
                                       lines.begin() + static_cast<std::ptrdiff_t>(last));
        FunctionBlock fb;
        fb.source = strings::join(block, "\n");
        auto logical = logical_lines(fb.source);
        if (logical.empty() || logical[0].tokens.size() < 3 || logical[0].tokens[1].kind != TokenKind::name) continue;
        fb.name = logical[0].tokens[1].text;
        if (logical[0].tokens[2].text == "(") fb.params = detail::parse_params(logical[0].tokens, 2);
        out.push_back(std::move(fb));
        i = end - 1;
    }
    return out;
}

} // namespace tabrex::pysrc
