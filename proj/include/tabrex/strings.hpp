#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace tabrex::strings {

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

/// ASCII case folding; multi-byte UTF-8 sequences pass through untouched.
inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

inline std::string fold(std::string_view s) { return lower(trim(s)); }

inline bool starts_with(std::string_view s, std::string_view prefix) { return s.starts_with(prefix); }
inline bool ends_with(std::string_view s, std::string_view suffix) { return s.ends_with(suffix); }

inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.emplace_back(line);
        if (nl == text.size()) break;
        start = nl + 1;
    }
    return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

inline bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    auto head = static_cast<unsigned char>(s[0]);
    if (!(std::isalpha(head) || head == '_')) return false;
    return std::all_of(s.begin() + 1, s.end(), [](char c) {
        auto u = static_cast<unsigned char>(c);
        return std::isalnum(u) || u == '_';
    });
}

/// `getColumnByName`, `Get-Column by name` -> `get_column_by_name`.
inline std::string to_snake_case(std::string_view name) {
    std::string out;
    auto trimmed = trim(name);
    for (std::size_t i = 0; i < trimmed.size(); ++i) {
        const char c = trimmed[i];
        if (c >= 'A' && c <= 'Z') {
            const bool prev_lower = i > 0 && ((trimmed[i - 1] >= 'a' && trimmed[i - 1] <= 'z') ||
                                              (trimmed[i - 1] >= '0' && trimmed[i - 1] <= '9'));
            const bool next_lower = i + 1 < trimmed.size() && trimmed[i + 1] >= 'a' && trimmed[i + 1] <= 'z';
            const bool prev_upper = i > 0 && trimmed[i - 1] >= 'A' && trimmed[i - 1] <= 'Z';
            if (prev_lower || (prev_upper && next_lower)) out.push_back('_');
            out.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (c == '-' || c == ' ' || c == '.') {
            out.push_back('_');
        } else {
            out.push_back(c);
        }
    }
    std::string collapsed;
    for (char c : out) {
        if (c == '_' && !collapsed.empty() && collapsed.back() == '_') continue;
        collapsed.push_back(c);
    }
    while (!collapsed.empty() && collapsed.back() == '_') collapsed.pop_back();
    while (!collapsed.empty() && collapsed.front() == '_') collapsed.erase(0, 1);
    return collapsed;
}

} // namespace tabrex::strings
