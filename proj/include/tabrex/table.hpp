#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabrex/decimal.hpp"
#include "tabrex/error.hpp"
#include "tabrex/strings.hpp"

namespace tabrex {

// ---------------------------------------------------------------------------
// Cell values
// ---------------------------------------------------------------------------

struct Missing {
    friend bool operator==(const Missing&, const Missing&) = default;
};

struct Number {
    Decimal value;
    friend bool operator==(const Number&, const Number&) = default;
};

struct Text {
    std::string value;
    friend bool operator==(const Text&, const Text&) = default;
};

/// Always a valid calendar date.
struct Date {
    std::chrono::year_month_day value;
    friend bool operator==(const Date&, const Date&) = default;
};

struct Currency {
    Decimal amount;
    std::string symbol;
    friend bool operator==(const Currency&, const Currency&) = default;
};

/// Displayed magnitude: "45%" is stored as 45.
struct Percent {
    Decimal value;
    friend bool operator==(const Percent&, const Percent&) = default;
};

using CellValue = std::variant<Missing, Number, Text, Date, Currency, Percent>;

inline const char* cell_kind_name(const CellValue& cell) {
    static constexpr std::array<const char*, 6> names = {"missing", "number", "text",
                                                         "date",    "currency", "percent"};
    return names[cell.index()];
}

inline constexpr std::array<std::string_view, 4> currency_symbols = {"$", "\xE2\x82\xAC" /* € */,
                                                                     "\xC2\xA3" /* £ */,
                                                                     "\xC2\xA5" /* ¥ */};

inline constexpr std::array<std::string_view, 20> currency_codes = {
    "USD", "EUR", "GBP", "JPY", "CNY", "CHF", "CAD", "AUD", "HKD", "INR",
    "KRW", "SGD", "SEK", "NOK", "DKK", "NZD", "MXN", "BRL", "RUB", "ZAR"};

namespace detail {

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline std::optional<int> parse_fixed_digits(std::string_view s) {
    if (s.empty()) return std::nullopt;
    int v = 0;
    for (char c : s) {
        if (!is_digit(c)) return std::nullopt;
        v = v * 10 + (c - '0');
    }
    return v;
}

} // namespace detail

inline std::optional<std::chrono::year_month_day> make_date(int year, int month, int day) {
    if (month < 1 || month > 12 || day < 1 || day > 31) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                    std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok()) return std::nullopt;
    return ymd;
}

inline std::string format_date(const std::chrono::year_month_day& ymd) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

/// Strict `YYYY-MM-DD`.
inline std::optional<std::chrono::year_month_day> parse_iso_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    auto y = detail::parse_fixed_digits(s.substr(0, 4));
    auto m = detail::parse_fixed_digits(s.substr(5, 2));
    auto d = detail::parse_fixed_digits(s.substr(8, 2));
    if (!y || !m || !d) return std::nullopt;
    return make_date(*y, *m, *d);
}

/// Plain number text with optional sign and correctly grouped thousands
/// separators: `1234`, `-1,234.5`, `.5`. No exponent.
inline std::optional<Decimal> parse_number_text(std::string_view s) {
    s = strings::trim(s);
    if (s.empty()) return std::nullopt;
    std::string digits;
    std::size_t i = 0;
    if (s[0] == '+' || s[0] == '-') {
        if (s[0] == '-') digits.push_back('-');
        ++i;
    }
    std::size_t int_start = i;
    std::size_t group_len = 0;
    bool grouped = false;
    bool first_group = true;
    while (i < s.size() && (detail::is_digit(s[i]) || s[i] == ',')) {
        if (s[i] == ',') {
            if (group_len == 0 || (first_group && group_len > 3) || (!first_group && group_len != 3))
                return std::nullopt;
            grouped = true;
            first_group = false;
            group_len = 0;
        } else {
            digits.push_back(s[i]);
            ++group_len;
        }
        ++i;
    }
    if (grouped && group_len != 3) return std::nullopt;
    const bool has_int = i > int_start;
    if (i < s.size() && s[i] == '.') {
        digits.push_back('.');
        ++i;
        std::size_t frac = 0;
        while (i < s.size() && detail::is_digit(s[i])) {
            digits.push_back(s[i]);
            ++i;
            ++frac;
        }
        if (frac == 0) return std::nullopt;
    } else if (!has_int) {
        return std::nullopt;
    }
    if (i != s.size()) return std::nullopt;
    return Decimal::parse(digits);
}

/// `$12.50`, `-$5`, `€1,200`, `12.50 USD`.
inline std::optional<Currency> parse_currency_text(std::string_view s) {
    s = strings::trim(s);
    if (s.empty()) return std::nullopt;
    std::string_view rest = s;
    bool negative = false;
    if (rest.front() == '-' || rest.front() == '+') {
        negative = rest.front() == '-';
        rest.remove_prefix(1);
    }
    for (auto sym : currency_symbols) {
        if (rest.starts_with(sym)) {
            std::string_view amount_text = strings::trim(rest.substr(sym.size()));
            if (amount_text.empty()) return std::nullopt;
            if (negative && (amount_text.front() == '-' || amount_text.front() == '+')) return std::nullopt;
            auto amount = parse_number_text(amount_text);
            if (!amount) return std::nullopt;
            return Currency{negative ? -*amount : *amount, std::string(sym)};
        }
    }
    if (s.size() > 3) {
        std::string_view code = s.substr(s.size() - 3);
        for (auto c : currency_codes) {
            if (code == c) {
                std::string_view amount_text = s.substr(0, s.size() - 3);
                if (amount_text.empty() || !(detail::is_digit(amount_text.back()) || amount_text.back() == ' '))
                    return std::nullopt;
                auto amount = parse_number_text(amount_text);
                if (!amount) return std::nullopt;
                return Currency{*amount, std::string(c)};
            }
        }
    }
    return std::nullopt;
}

/// `45%`, `-3.5 %`.
inline std::optional<Percent> parse_percent_text(std::string_view s) {
    s = strings::trim(s);
    if (s.size() < 2 || s.back() != '%') return std::nullopt;
    auto magnitude = parse_number_text(s.substr(0, s.size() - 1));
    if (!magnitude) return std::nullopt;
    return Percent{*magnitude};
}

/// Most specific reading wins: Date > Currency > Percent > Number > Text.
/// Blank input is Missing.
inline CellValue parse_cell(std::string_view raw) {
    const std::string_view s = strings::trim(raw);
    if (s.empty()) return Missing{};
    if (auto d = parse_iso_date(s)) return Date{*d};
    if (auto c = parse_currency_text(s)) return *c;
    if (auto p = parse_percent_text(s)) return *p;
    if (auto n = parse_number_text(s)) return Number{*n};
    return Text{std::string(s)};
}

inline std::string json_quote(std::string_view s) {
    return nlohmann::json(std::string(s)).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

/// Token used inside the canonical nested-array serialization.
inline std::string render_canonical(const CellValue& cell) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Missing>) return "\"\"";
            else if constexpr (std::is_same_v<T, Number>) return v.value.to_string();
            else if constexpr (std::is_same_v<T, Text>) return json_quote(v.value);
            else if constexpr (std::is_same_v<T, Date>) return "\"" + format_date(v.value) + "\"";
            else if constexpr (std::is_same_v<T, Currency>) return v.amount.to_string();
            else return v.value.to_string();
        },
        cell);
}

/// Unquoted human form, used for answers and comparisons.
inline std::string render_plain(const CellValue& cell) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Missing>) return "";
            else if constexpr (std::is_same_v<T, Number>) return v.value.to_string();
            else if constexpr (std::is_same_v<T, Text>) return v.value;
            else if constexpr (std::is_same_v<T, Date>) return format_date(v.value);
            else if constexpr (std::is_same_v<T, Currency>) return v.amount.to_string();
            else return v.value.to_string();
        },
        cell);
}

// ---------------------------------------------------------------------------
// Table
// ---------------------------------------------------------------------------

/// Caption plus a rectangular grid of typed cells. Immutable once built.
class Table {
public:
    Table() = default;

    /// Throws std::invalid_argument if any row length differs from the
    /// header count.
    Table(std::string caption, std::vector<std::string> headers, std::vector<std::vector<CellValue>> rows)
        : caption_(std::move(caption)), headers_(std::move(headers)), rows_(std::move(rows)) {
        for (std::size_t r = 0; r < rows_.size(); ++r)
            if (rows_[r].size() != headers_.size())
                throw std::invalid_argument("ragged table: row " + std::to_string(r) + " has " +
                                            std::to_string(rows_[r].size()) + " cells, expected " +
                                            std::to_string(headers_.size()));
    }

    /// Pads short rows with Missing; widens the header row with empty names
    /// when a row is longer than the header.
    static Table padded(std::string caption, std::vector<std::string> headers,
                        std::vector<std::vector<CellValue>> rows) {
        std::size_t width = headers.size();
        for (const auto& row : rows) width = std::max(width, row.size());
        headers.resize(width);
        for (auto& row : rows) row.resize(width, Missing{});
        return Table(std::move(caption), std::move(headers), std::move(rows));
    }

    const std::string& caption() const { return caption_; }
    const std::vector<std::string>& headers() const { return headers_; }
    const std::vector<std::vector<CellValue>>& rows() const { return rows_; }
    std::size_t row_count() const { return rows_.size(); }
    std::size_t column_count() const { return headers_.size(); }

    const CellValue& at(std::size_t row, std::size_t col) const {
        if (row >= rows_.size()) throw IndexOutOfBounds("row", row, rows_.size());
        if (col >= headers_.size()) throw IndexOutOfBounds("col", col, headers_.size());
        return rows_[row][col];
    }

    std::vector<CellValue> column(std::size_t col) const {
        if (col >= headers_.size()) throw IndexOutOfBounds("col", col, headers_.size());
        std::vector<CellValue> out;
        out.reserve(rows_.size());
        for (const auto& row : rows_) out.push_back(row[col]);
        return out;
    }

    friend bool operator==(const Table&, const Table&) = default;

private:
    std::string caption_;
    std::vector<std::string> headers_;
    std::vector<std::vector<CellValue>> rows_;
};

inline const CellValue& cell_at(const Table& table, std::size_t row, std::size_t col) {
    return table.at(row, col);
}

/// `[["h1", "h2"], [1, "x"], ...]`. The caption is not part of the array.
inline std::string serialize_canonical(const Table& table) {
    std::string out = "[[";
    for (std::size_t c = 0; c < table.headers().size(); ++c) {
        if (c) out += ", ";
        out += json_quote(table.headers()[c]);
    }
    out += "]";
    for (const auto& row : table.rows()) {
        out += ", [";
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out += ", ";
            out += render_canonical(row[c]);
        }
        out += "]";
    }
    out += "]";
    return out;
}

/// Pipe table for prompts and terminal output.
inline std::string render_markdown(const Table& table) {
    auto escape = [](std::string s) {
        std::string out;
        for (char c : s) {
            if (c == '|') out += "\\|";
            else if (c == '\n') out += ' ';
            else out += c;
        }
        return out;
    };
    std::string out = "|";
    for (const auto& h : table.headers()) out += " " + escape(h) + " |";
    out += "\n|";
    for (std::size_t c = 0; c < table.column_count(); ++c) out += " --- |";
    for (const auto& row : table.rows()) {
        out += "\n|";
        for (const auto& cell : row) out += " " + escape(render_plain(cell)) + " |";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

enum class TableFormat { csv, markdown, json_rows };

inline const char* to_string(TableFormat f) {
    switch (f) {
    case TableFormat::csv: return "csv";
    case TableFormat::markdown: return "markdown";
    case TableFormat::json_rows: return "json_rows";
    }
    return "?";
}

inline std::optional<TableFormat> table_format_from_string(std::string_view s) {
    if (s == "csv") return TableFormat::csv;
    if (s == "markdown" || s == "md") return TableFormat::markdown;
    if (s == "json_rows" || s == "json") return TableFormat::json_rows;
    return std::nullopt;
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_records(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_quoted = false;
    std::size_t line = 1;
    std::size_t quote_line = 0;

    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        const bool blank = record.size() == 1 && record[0].empty() && !field_quoted;
        if (!blank) records.push_back(std::move(record));
        record.clear();
        field_quoted = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!strings::trim(field).empty())
                throw ParseError("csv", line, "quote inside unquoted field");
            field.clear();
            in_quotes = true;
            field_quoted = true;
            quote_line = line;
            break;
        case ',':
            record.push_back(std::move(field));
            field.clear();
            field_quoted = false;
            break;
        case '\r':
            break;
        case '\n':
            end_record();
            ++line;
            break;
        default:
            if (field_quoted && !strings::is_space(c))
                throw ParseError("csv", line, "text after closing quote");
            field.push_back(c);
        }
    }
    if (in_quotes) throw ParseError("csv", quote_line, "unterminated quoted field");
    if (!field.empty() || !record.empty() || field_quoted) end_record();
    return records;
}

inline std::vector<std::string> split_markdown_row(std::string_view line) {
    std::string_view s = strings::trim(line);
    if (s.starts_with('|')) s.remove_prefix(1);
    if (s.ends_with('|') && !(s.size() >= 2 && s[s.size() - 2] == '\\')) s.remove_suffix(1);
    std::vector<std::string> cells;
    std::string cur;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == '|') {
            cur.push_back('|');
            ++i;
        } else if (s[i] == '|') {
            cells.emplace_back(strings::trim(cur));
            cur.clear();
        } else {
            cur.push_back(s[i]);
        }
    }
    cells.emplace_back(strings::trim(cur));
    return cells;
}

inline bool is_markdown_separator(const std::vector<std::string>& cells) {
    for (const auto& c : cells) {
        std::string_view s = c;
        if (s.starts_with(':')) s.remove_prefix(1);
        if (s.ends_with(':')) s.remove_suffix(1);
        if (s.empty()) return false;
        for (char ch : s)
            if (ch != '-') return false;
    }
    return !cells.empty();
}

/// SAX consumer for an array of arrays; keeps the raw text of floats so
/// decimals survive without binary rounding.
class JsonRowsReader {
public:
    using json = nlohmann::json;

    explicit JsonRowsReader(std::string_view text) : text_(text) {}

    std::vector<std::vector<CellValue>> rows;
    std::vector<std::string> headers;
    bool have_headers = false;

    bool null() { return push(Missing{}, ""); }
    bool boolean(bool v) { return push(Text{v ? "true" : "false"}, v ? "true" : "false"); }
    bool number_integer(json::number_integer_t v) { return push_number(std::to_string(v)); }
    bool number_unsigned(json::number_unsigned_t v) { return push_number(std::to_string(v)); }
    bool number_float(json::number_float_t, const std::string& raw) { return push_number(raw); }
    bool string(std::string& v) { return push(parse_cell(v), v); }
    bool binary(json::binary_t&) { return fail("binary values are not supported"); }
    bool start_object(std::size_t) { return fail("objects are not supported"); }
    bool key(std::string&) { return fail("objects are not supported"); }
    bool end_object() { return fail("objects are not supported"); }
    bool start_array(std::size_t) {
        ++depth_;
        if (depth_ > 2) return fail("arrays nested deeper than rows");
        if (depth_ == 2) current_.clear(), current_headers_.clear();
        return true;
    }
    bool end_array() {
        if (depth_ == 2) {
            if (!have_headers) {
                headers = std::move(current_headers_);
                have_headers = true;
            } else {
                rows.push_back(std::move(current_));
            }
        }
        --depth_;
        return true;
    }
    bool parse_error(std::size_t position, const std::string&, const nlohmann::detail::exception& ex) {
        throw ParseError("json_rows", line_of(position), ex.what());
    }

private:
    bool push_number(const std::string& raw) {
        auto d = Decimal::parse(raw);
        if (!d) return fail("unsupported number " + raw);
        return push(Number{*d}, raw);
    }
    bool push(CellValue cell, std::string raw) {
        if (depth_ != 2) return fail("cells must be inside row arrays");
        if (!have_headers) current_headers_.push_back(std::move(raw));
        else current_.push_back(std::move(cell));
        return true;
    }
    bool fail(const std::string& message) { throw ParseError("json_rows", 1, message); }

    std::size_t line_of(std::size_t position) const {
        std::size_t line = 1;
        for (std::size_t i = 0; i < position && i < text_.size(); ++i)
            if (text_[i] == '\n') ++line;
        return line;
    }

    std::string_view text_;
    int depth_ = 0;
    std::vector<CellValue> current_;
    std::vector<std::string> current_headers_;
};

inline Table parse_csv_table(std::string_view text) {
    auto records = read_csv_records(text);
    if (records.empty()) throw ParseError("csv", 1, "no header row");
    std::vector<std::string> headers;
    for (auto& h : records[0]) headers.emplace_back(strings::trim(h));
    std::vector<std::vector<CellValue>> rows;
    for (std::size_t r = 1; r < records.size(); ++r) {
        std::vector<CellValue> row;
        for (const auto& field : records[r]) row.push_back(parse_cell(field));
        rows.push_back(std::move(row));
    }
    return Table::padded("", std::move(headers), std::move(rows));
}

inline Table parse_markdown_table(std::string_view text) {
    auto lines = strings::split_lines(text);
    std::vector<std::string> caption_parts;
    std::size_t i = 0;
    for (; i < lines.size(); ++i) {
        auto t = strings::trim(lines[i]);
        if (t.starts_with('|')) break;
        if (!t.empty()) caption_parts.emplace_back(t);
    }
    if (i == lines.size()) throw ParseError("markdown", 1, "no pipe table found");
    auto headers = split_markdown_row(lines[i]);
    if (i + 1 >= lines.size() || !is_markdown_separator(split_markdown_row(lines[i + 1])))
        throw ParseError("markdown", i + 2, "missing header separator row");
    std::vector<std::vector<CellValue>> rows;
    for (std::size_t k = i + 2; k < lines.size(); ++k) {
        auto t = strings::trim(lines[k]);
        if (t.empty() || !t.starts_with('|')) break;
        std::vector<CellValue> row;
        for (const auto& cell : split_markdown_row(lines[k])) row.push_back(parse_cell(cell));
        rows.push_back(std::move(row));
    }
    return Table::padded(strings::join(caption_parts, " "), std::move(headers), std::move(rows));
}

inline Table parse_json_rows_table(std::string_view text) {
    JsonRowsReader reader(text);
    std::string owned(text);
    nlohmann::json::sax_parse(owned, &reader);
    if (!reader.have_headers) throw ParseError("json_rows", 1, "expected an array whose first element is the header row");
    return Table::padded("", std::move(reader.headers), std::move(reader.rows));
}

} // namespace detail

/// Parses csv, GitHub-flavored markdown, or a JSON array of arrays (first
/// row is the header) into a rectangular table. Short rows are padded with
/// Missing.
inline Table parse_table(std::string_view text, TableFormat format) {
    if (strings::trim(text).empty()) throw ParseError(to_string(format), 1, "empty input");
    switch (format) {
    case TableFormat::csv: return detail::parse_csv_table(text);
    case TableFormat::markdown: return detail::parse_markdown_table(text);
    case TableFormat::json_rows: return detail::parse_json_rows_table(text);
    }
    throw ParseError(to_string(format), 1, "unsupported format");
}

inline Table with_caption(const Table& table, std::string caption) {
    return Table(std::move(caption), table.headers(), table.rows());
}

} // namespace tabrex
