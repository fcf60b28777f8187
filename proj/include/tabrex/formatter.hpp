#pragma once

#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabrex/table.hpp"

namespace tabrex {

struct CellCoord {
    std::size_t row = 0;
    std::size_t col = 0;
    friend bool operator==(const CellCoord&, const CellCoord&) = default;
};

struct AmbiguousDate {
    CellCoord cell;
    std::string text;
    friend bool operator==(const AmbiguousDate&, const AmbiguousDate&) = default;
};

/// Audit trail of a formatting pass. Counts cover only cells that were
/// actually rewritten, so rerunning on formatted output reports zeros.
struct FormatReport {
    std::size_t cleaned_cells = 0;
    std::size_t standardized_cells = 0;
    std::vector<std::pair<std::size_t, std::string>> repaired_headers;
    std::map<std::string, std::size_t> stripped_symbols;
    std::vector<AmbiguousDate> ambiguous_dates;
    // llm mode only
    std::size_t llm_accepted_cells = 0;
    std::optional<std::string> llm_rejected;

    bool unchanged() const {
        return cleaned_cells == 0 && standardized_cells == 0 && repaired_headers.empty();
    }

    FormatReport& merge(const FormatReport& o) {
        cleaned_cells += o.cleaned_cells;
        standardized_cells += o.standardized_cells;
        repaired_headers.insert(repaired_headers.end(), o.repaired_headers.begin(), o.repaired_headers.end());
        for (const auto& [sym, n] : o.stripped_symbols) stripped_symbols[sym] += n;
        ambiguous_dates.insert(ambiguous_dates.end(), o.ambiguous_dates.begin(), o.ambiguous_dates.end());
        llm_accepted_cells += o.llm_accepted_cells;
        if (o.llm_rejected) llm_rejected = o.llm_rejected;
        return *this;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["cleaned_cells"] = cleaned_cells;
        j["standardized_cells"] = standardized_cells;
        j["repaired_headers"] = nlohmann::ordered_json::array();
        for (const auto& [col, name] : repaired_headers)
            j["repaired_headers"].push_back({{"col", col}, {"name", name}});
        j["stripped_symbols"] = nlohmann::ordered_json::object();
        for (const auto& [sym, n] : stripped_symbols) j["stripped_symbols"][sym] = n;
        j["ambiguous_dates"] = nlohmann::ordered_json::array();
        for (const auto& a : ambiguous_dates)
            j["ambiguous_dates"].push_back({{"row", a.cell.row}, {"col", a.cell.col}, {"text", a.text}});
        if (llm_accepted_cells || llm_rejected) {
            j["llm_accepted_cells"] = llm_accepted_cells;
            if (llm_rejected) j["llm_rejected"] = *llm_rejected;
        }
        return j;
    }
};

namespace detail {

inline bool strip_suffix(std::string& s, std::string_view suffix) {
    if (s.size() >= suffix.size() && std::string_view(s).ends_with(suffix)) {
        s.resize(s.size() - suffix.size());
        return true;
    }
    return false;
}

inline bool strip_bracketed_digits(std::string& s) {
    if (s.empty() || s.back() != ']') return false;
    const auto open = s.rfind('[');
    if (open == std::string::npos || open + 2 > s.size() - 1) return false;
    for (std::size_t i = open + 1; i + 1 < s.size(); ++i)
        if (!is_digit(s[i])) return false;
    s.resize(open);
    return true;
}

/// Removes trailing footnote markers: `*`, `†`, `‡`, `[1]`, and a superscript
/// letter a-e directly after a digit.
inline std::string strip_footnotes(std::string_view raw) {
    static constexpr std::array<std::string_view, 5> superscripts = {
        "\xE1\xB5\x83", "\xE1\xB5\x87", "\xE1\xB6\x9C", "\xE1\xB5\x88", "\xE1\xB5\x89"};
    std::string s(strings::trim(raw));
    bool changed = true;
    while (changed && !s.empty()) {
        changed = false;
        const std::size_t before = s.size();
        while (!s.empty() && strings::is_space(s.back())) s.pop_back();
        changed |= strip_suffix(s, "*") || strip_suffix(s, "\xE2\x80\xA0") || strip_suffix(s, "\xE2\x80\xA1");
        changed |= strip_bracketed_digits(s);
        for (auto sup : superscripts)
            if (s.size() > sup.size() && std::string_view(s).ends_with(sup) &&
                is_digit(s[s.size() - sup.size() - 1])) {
                s.resize(s.size() - sup.size());
                changed = true;
            }
        if (s.size() >= 2 && s.back() >= 'a' && s.back() <= 'e' && is_digit(s[s.size() - 2])) {
            s.pop_back();
            changed = true;
        }
        changed |= s.size() != before;
    }
    return s;
}

inline std::optional<int> month_from_name(std::string_view name) {
    static const std::array<std::string_view, 12> full = {"january", "february", "march",     "april",
                                                          "may",     "june",     "july",      "august",
                                                          "september", "october", "november", "december"};
    const std::string n = strings::lower(name);
    for (std::size_t i = 0; i < full.size(); ++i) {
        if (n == full[i] || n == full[i].substr(0, 3)) return static_cast<int>(i + 1);
    }
    if (n == "sept") return 9;
    return std::nullopt;
}

enum class DateReading { none, date, ambiguous };

struct DateParse {
    DateReading kind = DateReading::none;
    std::chrono::year_month_day value{};
};

/// Accepted: MM/DD/YYYY, DD/MM/YYYY (when unambiguous), "Month D, YYYY",
/// YYYY-MM-DD, "D Mon YYYY".
inline DateParse parse_date_text(std::string_view raw) {
    static const std::regex slash(R"(^(\d{1,2})/(\d{1,2})/(\d{4})$)");
    static const std::regex month_first(R"(^([A-Za-z]+)\.? (\d{1,2}),? (\d{4})$)");
    static const std::regex day_first(R"(^(\d{1,2}) ([A-Za-z]+)\.?,? (\d{4})$)");
    const std::string s(strings::trim(raw));
    std::smatch m;
    if (auto iso = parse_iso_date(s)) return {DateReading::date, *iso};
    if (std::regex_match(s, m, slash)) {
        const int a = std::stoi(m[1]), b = std::stoi(m[2]), y = std::stoi(m[3]);
        auto month_day = make_date(y, a, b);
        auto day_month = make_date(y, b, a);
        if (month_day && day_month && *month_day != *day_month) return {DateReading::ambiguous, {}};
        if (month_day) return {DateReading::date, *month_day};
        if (day_month) return {DateReading::date, *day_month};
        return {};
    }
    if (std::regex_match(s, m, month_first)) {
        auto month = month_from_name(m[1].str());
        if (!month) return {};
        if (auto d = make_date(std::stoi(m[3]), *month, std::stoi(m[2]))) return {DateReading::date, *d};
        return {};
    }
    if (std::regex_match(s, m, day_first)) {
        auto month = month_from_name(m[2].str());
        if (!month) return {};
        if (auto d = make_date(std::stoi(m[3]), *month, std::stoi(m[1]))) return {DateReading::date, *d};
    }
    return {};
}

inline std::vector<std::vector<CellValue>> mutable_rows(const Table& t) { return t.rows(); }

} // namespace detail

/// Currency becomes Number (symbol recorded), trailing footnote markers and
/// thousands separators go away. Cells that resist cleaning stay Text.
inline std::pair<Table, FormatReport> clean_cells(const Table& table) {
    FormatReport report;
    auto rows = detail::mutable_rows(table);
    for (auto& row : rows) {
        for (auto& cell : row) {
            if (auto* cur = std::get_if<Currency>(&cell)) {
                ++report.stripped_symbols[cur->symbol];
                cell = Number{cur->amount};
                ++report.cleaned_cells;
                continue;
            }
            auto* text = std::get_if<Text>(&cell);
            if (!text) continue;
            std::string stripped = detail::strip_footnotes(text->value);
            CellValue reparsed = parse_cell(stripped);
            if (auto* cur = std::get_if<Currency>(&reparsed)) {
                ++report.stripped_symbols[cur->symbol];
                reparsed = Number{cur->amount};
            }
            if (std::holds_alternative<Missing>(reparsed)) continue;
            if (reparsed != cell) {
                cell = std::move(reparsed);
                ++report.cleaned_cells;
            }
        }
    }
    return {Table(table.caption(), table.headers(), std::move(rows)), report};
}

/// Rewrites parseable dates to Date and "X%" strings to Percent. Ambiguous
/// slash dates are reported and left as Text.
inline std::pair<Table, FormatReport> standardize(const Table& table) {
    FormatReport report;
    auto rows = detail::mutable_rows(table);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            auto* text = std::get_if<Text>(&rows[r][c]);
            if (!text) continue;
            auto date = detail::parse_date_text(text->value);
            if (date.kind == detail::DateReading::date) {
                rows[r][c] = Date{date.value};
                ++report.standardized_cells;
            } else if (date.kind == detail::DateReading::ambiguous) {
                report.ambiguous_dates.push_back({{r, c}, text->value});
            } else if (auto pct = parse_percent_text(text->value)) {
                rows[r][c] = *pct;
                ++report.standardized_cells;
            }
        }
    }
    return {Table(table.caption(), table.headers(), std::move(rows)), report};
}

/// Dominant non-missing kind of a column: "date", "amount" or "text".
inline std::string dominant_column_kind(const Table& table, std::size_t col) {
    std::size_t dates = 0, amounts = 0, texts = 0;
    for (const auto& row : table.rows()) {
        const auto& cell = row[col];
        if (std::holds_alternative<Date>(cell)) ++dates;
        else if (std::holds_alternative<Number>(cell) || std::holds_alternative<Currency>(cell) ||
                 std::holds_alternative<Percent>(cell))
            ++amounts;
        else if (std::holds_alternative<Text>(cell))
            ++texts;
    }
    if (dates == 0 && amounts == 0 && texts == 0) return "text";
    if (dates >= amounts && dates >= texts) return "date";
    if (amounts >= texts) return "amount";
    return "text";
}

/// Names empty headers after the column's dominant kind plus its 1-based
/// position, then suffixes duplicates with _2, _3, ... (compared
/// case-insensitively, the way column lookup matches).
inline std::pair<Table, FormatReport> repair(const Table& table) {
    FormatReport report;
    auto headers = table.headers();
    std::vector<bool> renamed(headers.size(), false);
    for (std::size_t c = 0; c < headers.size(); ++c) {
        if (strings::trim(headers[c]).empty()) {
            headers[c] = dominant_column_kind(table, c) + "_" + std::to_string(c + 1);
            renamed[c] = true;
        }
    }
    std::set<std::string> seen;
    for (std::size_t c = 0; c < headers.size(); ++c) {
        std::string key = strings::fold(headers[c]);
        if (seen.count(key)) {
            for (std::size_t suffix = 2;; ++suffix) {
                std::string candidate = headers[c] + "_" + std::to_string(suffix);
                if (!seen.count(strings::fold(candidate))) {
                    bool later_clash = false;
                    for (std::size_t k = c + 1; k < headers.size(); ++k)
                        if (strings::fold(headers[k]) == strings::fold(candidate)) later_clash = true;
                    if (later_clash) continue;
                    headers[c] = candidate;
                    key = strings::fold(candidate);
                    renamed[c] = true;
                    break;
                }
            }
        }
        seen.insert(key);
    }
    for (std::size_t c = 0; c < headers.size(); ++c)
        if (renamed[c]) report.repaired_headers.emplace_back(c, headers[c]);
    return {Table(table.caption(), std::move(headers), table.rows()), report};
}

enum class FormatMode { rules, llm };

inline std::optional<FormatMode> format_mode_from_string(std::string_view s) {
    if (s == "rules") return FormatMode::rules;
    if (s == "llm") return FormatMode::llm;
    return std::nullopt;
}

/// Produces the model's formatted-table response for (table, query).
using LlmFormatter = std::function<std::string(const Table&, std::string_view query)>;

namespace detail {

inline std::pair<Table, FormatReport> apply_rules(const Table& table) {
    auto [cleaned, r1] = clean_cells(table);
    auto [standard, r2] = standardize(cleaned);
    auto [repaired, r3] = repair(standard);
    r1.merge(r2).merge(r3);
    return {std::move(repaired), std::move(r1)};
}

inline std::optional<Table> extract_llm_table(std::string_view response) {
    const auto open = response.find('[');
    const auto close = response.rfind(']');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
    try {
        return parse_table(response.substr(open, close - open + 1), TableFormat::json_rows);
    } catch (const ParseError&) {
        return std::nullopt;
    }
}

} // namespace detail

/// Rules mode: clean, then standardize, then repair headers. The query does
/// not influence rules mode.
///
/// Llm mode: the model's table is parsed and validated cell by cell against
/// the rule engine. Wherever the rules rewrite the original cell, the rule
/// result wins; a model edit is accepted only on a Text cell the rules leave
/// alone, and only when the model's value renders differently. Typed cells
/// are never overwritten by the model.
/// A response that does not parse, or changes the table's shape, is
/// discarded and rules mode is used.
inline std::pair<Table, FormatReport> format_table(const Table& table, std::string_view query,
                                                   FormatMode mode, const LlmFormatter& llm = {}) {
    auto ruled = detail::apply_rules(table);
    if (mode == FormatMode::rules) return ruled;
    if (!llm) throw std::invalid_argument("llm format mode needs a model callback");

    const std::string response = llm(table, query);
    auto& [rule_table, report] = ruled;
    auto proposed = detail::extract_llm_table(response);
    if (!proposed) {
        report.llm_rejected = "response is not a nested-array table";
        return ruled;
    }
    if (proposed->row_count() != table.row_count() || proposed->column_count() != table.column_count()) {
        report.llm_rejected = "response changes the table shape";
        return ruled;
    }
    auto validated = clean_cells(*proposed).first;
    validated = standardize(validated).first;

    auto rows = rule_table.rows();
    std::size_t accepted = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            const CellValue& original = table.rows()[r][c];
            if (rows[r][c] != original || !std::holds_alternative<Text>(original)) continue;
            const CellValue& model = validated.rows()[r][c];
            if (render_canonical(model) == render_canonical(original)) continue;
            rows[r][c] = model;
            ++accepted;
        }
    }
    report.llm_accepted_cells = accepted;
    return {Table(table.caption(), rule_table.headers(), std::move(rows)), report};
}

} // namespace tabrex
