#include <gtest/gtest.h>

#include <regex>
#include <sstream>

#include "generators.hpp"
#include "support.hpp"
#include "tabrex/table.hpp"

using namespace tabrex;
using testing_support::read_file;
using testing_support::test_fixture;

namespace {

// Independent per-variant recognizer used to cross-check parse_cell.
struct OracleCell {
    std::string kind;
    std::string value;  // digits with grouping removed, or the ISO date
};

bool oracle_valid_date(int y, int m, int d) {
    if (m < 1 || m > 12 || d < 1) return false;
    return d <= gen::days_in_month(y, m);
}

OracleCell oracle_parse(const std::string& raw) {
    static const std::string num = R"((?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+)";
    static const std::regex date_re(R"(^(\d{4})-(\d{2})-(\d{2})$)");
    static const std::regex symbol_re("^([+-]?)(\\$|\xE2\x82\xAC|\xC2\xA3|\xC2\xA5)\\s*(" + num + ")$");
    static const std::regex code_re(
        "^([+-]?(?:" + num + "))\\s*(USD|EUR|GBP|JPY|CNY|CHF|CAD|AUD|HKD|INR|KRW|SGD|SEK|NOK|DKK|NZD|MXN|BRL|RUB|ZAR)$");
    static const std::regex percent_re("^([+-]?(?:" + num + "))\\s*%$");
    static const std::regex number_re("^([+-]?(?:" + num + "))$");
    auto strip = [](std::string s) {
        std::string out;
        for (char c : s)
            if (c != ',' && c != '+') out.push_back(c);
        return out;
    };
    std::string s = raw;
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(0, 1);
    std::smatch m;
    if (s.empty()) return {"missing", ""};
    if (std::regex_match(s, m, date_re) && oracle_valid_date(std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3])))
        return {"date", s};
    if (std::regex_match(s, m, symbol_re)) return {"currency", (m[1] == "-" ? "-" : "") + strip(m[3])};
    if (std::regex_match(s, m, code_re)) return {"currency", strip(m[1])};
    if (std::regex_match(s, m, percent_re)) return {"percent", strip(m[1])};
    if (std::regex_match(s, m, number_re)) return {"number", strip(m[1])};
    return {"text", s};
}

struct CellRow {
    std::string raw, kind, canonical;
};

std::vector<CellRow> load_cells() {
    std::vector<CellRow> out;
    std::istringstream in(read_file(test_fixture("table/cells.tsv")));
    std::string line;
    while (std::getline(in, line)) {
        if (line.starts_with("#")) continue;
        std::istringstream fields(line);
        CellRow row;
        std::getline(fields, row.raw, '\t');
        std::getline(fields, row.kind, '\t');
        std::getline(fields, row.canonical, '\t');
        out.push_back(row);
    }
    return out;
}

std::optional<Decimal> numeric_part(const CellValue& cell) {
    if (auto* n = std::get_if<Number>(&cell)) return n->value;
    if (auto* c = std::get_if<Currency>(&cell)) return c->amount;
    if (auto* p = std::get_if<Percent>(&cell)) return p->value;
    return std::nullopt;
}

} // namespace

TEST(ParseCell, FixtureMatchesLabelsAndRegexOracle) {
    const auto cells = load_cells();
    ASSERT_EQ(cells.size(), 50u);
    for (const auto& row : cells) {
        SCOPED_TRACE("cell '" + row.raw + "'");
        const CellValue cell = parse_cell(row.raw);
        const OracleCell expected = oracle_parse(row.raw);
        EXPECT_EQ(cell_kind_name(cell), row.kind);
        EXPECT_EQ(expected.kind, row.kind);
        EXPECT_EQ(render_canonical(cell), row.canonical);
        if (auto n = numeric_part(cell)) EXPECT_EQ(*n, *Decimal::parse(expected.value));
        if (row.kind == "date") EXPECT_EQ(render_plain(cell), expected.value);
    }
}

TEST(ParseCell, CurrencyKeepsSymbol) {
    EXPECT_EQ(parse_cell("$12.50"), CellValue(Currency{*Decimal::parse("12.5"), "$"}));
    EXPECT_EQ(parse_cell("12.50 USD"), CellValue(Currency{*Decimal::parse("12.5"), "USD"}));
    EXPECT_EQ(parse_cell("45%"), CellValue(Percent{Decimal(45)}));
}

TEST(ParseCell, MissingIsNotEmptyText) {
    EXPECT_TRUE(std::holds_alternative<Missing>(parse_cell("")));
    EXPECT_TRUE(std::holds_alternative<Missing>(parse_cell("   ")));
    EXPECT_NE(CellValue(Missing{}), CellValue(Text{""}));
}

TEST(ParseTable, MinimalCsv) {
    Table t = parse_table("a,b\n1,2", TableFormat::csv);
    EXPECT_EQ(t.headers(), (std::vector<std::string>{"a", "b"}));
    ASSERT_EQ(t.row_count(), 1u);
    EXPECT_EQ(t.at(0, 0), CellValue(Number{Decimal(1)}));
    EXPECT_EQ(t.at(0, 1), CellValue(Number{Decimal(2)}));
}

TEST(ParseTable, RaggedCsvRowIsPadded) {
    Table t = parse_table("a,b\n1", TableFormat::csv);
    ASSERT_EQ(t.row_count(), 1u);
    EXPECT_EQ(t.at(0, 0), CellValue(Number{Decimal(1)}));
    EXPECT_EQ(t.at(0, 1), CellValue(Missing{}));
}

TEST(ParseTable, CsvQuotingAndCrlf) {
    Table t = parse_table("name,amount\r\n\"Smith, J\",\"1,200\"\r\n\"say \"\"hi\"\"\",3\r\n", TableFormat::csv);
    ASSERT_EQ(t.row_count(), 2u);
    EXPECT_EQ(t.at(0, 0), CellValue(Text{"Smith, J"}));
    EXPECT_EQ(t.at(0, 1), CellValue(Number{Decimal(1200)}));
    EXPECT_EQ(t.at(1, 0), CellValue(Text{"say \"hi\""}));
}

TEST(ParseTable, CsvUnterminatedQuoteIsParseError) {
    try {
        parse_table("a,b\n\"open,2\n", TableFormat::csv);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.format(), "csv");
    }
}

TEST(ParseTable, MarkdownWithCurrency) {
    const std::string md = "| Item | Cost |\n|------|-----:|\n| tea | $12.50 |\n| cake | $3 |\n";
    Table t = parse_table(md, TableFormat::markdown);
    EXPECT_EQ(t.headers(), (std::vector<std::string>{"Item", "Cost"}));
    EXPECT_EQ(t.at(0, 1), CellValue(Currency{*Decimal::parse("12.50"), "$"}));
    EXPECT_EQ(t.at(1, 1), CellValue(Currency{Decimal(3), "$"}));
}

TEST(ParseTable, MarkdownWithoutSeparatorIsParseError) {
    EXPECT_THROW(parse_table("| a | b |\n| 1 | 2 |\n", TableFormat::markdown), ParseError);
}

TEST(ParseTable, JsonRows) {
    Table t = parse_table(R"([["a", "b"], [1, "x"], [2.50, null]])", TableFormat::json_rows);
    EXPECT_EQ(t.at(0, 0), CellValue(Number{Decimal(1)}));
    EXPECT_EQ(t.at(0, 1), CellValue(Text{"x"}));
    EXPECT_EQ(t.at(1, 0), CellValue(Number{*Decimal::parse("2.5")}));
    EXPECT_EQ(t.at(1, 1), CellValue(Missing{}));
}

TEST(ParseTable, UnbalancedJsonReportsLine) {
    try {
        parse_table("[[\"a\"],\n [1],\n [2", TableFormat::json_rows);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.format(), "json_rows");
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(ParseTable, EmptyTextRejected) {
    EXPECT_THROW(parse_table("", TableFormat::csv), ParseError);
    EXPECT_THROW(parse_table("", TableFormat::json_rows), ParseError);
}

TEST(CellAt, InBoundsAndBoundary) {
    Table t("", {"a"}, {{Number{Decimal(7)}}});
    EXPECT_EQ(cell_at(t, 0, 0), CellValue(Number{Decimal(7)}));
    try {
        cell_at(t, 1, 0);
        FAIL() << "expected IndexOutOfBounds";
    } catch (const IndexOutOfBounds& e) {
        EXPECT_EQ(e.axis(), "row");
    }
    try {
        cell_at(t, 0, 1);
        FAIL() << "expected IndexOutOfBounds";
    } catch (const IndexOutOfBounds& e) {
        EXPECT_EQ(e.axis(), "col");
    }
}

TEST(CellAt, FixtureTableMatchesOracle) {
    const auto cells = load_cells();
    std::string csv = "raw\n";
    std::vector<std::string> raws;
    for (const auto& c : cells) {
        if (c.raw.empty() || c.raw.find_first_of(",\"") != std::string::npos) continue;
        raws.push_back(c.raw);
        csv += c.raw + "\n";
    }
    Table t = parse_table(csv, TableFormat::csv);
    ASSERT_EQ(t.row_count(), raws.size());
    for (std::size_t r = 0; r < raws.size(); ++r) {
        SCOPED_TRACE(raws[r]);
        EXPECT_EQ(cell_kind_name(cell_at(t, r, 0)), oracle_parse(raws[r]).kind);
    }
}

TEST(Table, RaggedConstructionThrows) {
    EXPECT_THROW(Table("", {"a", "b"}, {{Number{Decimal(1)}}}), std::invalid_argument);
}

TEST(SerializeCanonical, ExactForm) {
    EXPECT_EQ(serialize_canonical(Table("", {"a"}, {{Number{Decimal(3)}}})), R"([["a"], [3]])");
    Table t("cap", {"d", "c", "p", "m", "t"},
            {{Date{*make_date(2024, 1, 2)}, Currency{*Decimal::parse("12.50"), "$"}, Percent{Decimal(45)}, Missing{},
              Text{"say \"x\""}}});
    EXPECT_EQ(serialize_canonical(t), R"([["d", "c", "p", "m", "t"], ["2024-01-02", 12.5, 45, "", "say \"x\""]])");
}

TEST(SerializeCanonical, NumbersHaveNoTrailingZeros) {
    Table t("", {"n"}, {{Number{*Decimal::parse("1.500")}}, {Number{*Decimal::parse("100")}}, {Number{*Decimal::parse("-0.050")}}});
    EXPECT_EQ(serialize_canonical(t), R"([["n"], [1.5], [100], [-0.05]])");
}

TEST(SerializeCanonical, JsonRoundTripOnRandomNumericTables) {
    gen::Rng rng(20240102);
    for (int i = 0; i < 100; ++i) {
        const Table t = gen::numeric_table(rng);
        const std::string text = serialize_canonical(t);
        const Table back = parse_table(text, TableFormat::json_rows);
        ASSERT_EQ(back, t) << text;
        ASSERT_EQ(serialize_canonical(back), text);
    }
}

TEST(SerializeCanonical, DeterministicAndRectangularOnNoisyTables) {
    gen::Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        const Table t = gen::noisy_table(rng);
        const Table copy = t;
        EXPECT_EQ(serialize_canonical(t), serialize_canonical(copy));
        for (const auto& row : t.rows()) EXPECT_EQ(row.size(), t.column_count());
    }
}
