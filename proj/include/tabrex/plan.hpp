#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tabrex/decimal.hpp"
#include "tabrex/diagnostic.hpp"
#include "tabrex/error.hpp"
#include "tabrex/pysrc.hpp"
#include "tabrex/strings.hpp"
#include "tabrex/toolkit.hpp"

namespace tabrex {

/// Name pre-bound to the formatted table in every plan.
inline constexpr std::string_view table_variable = "table_data";
inline constexpr std::string_view answer_keyword = "ANSWER";

/// Number, string, bool, or a homogeneous array of literals.
struct Literal {
    std::variant<Decimal, std::string, bool, std::vector<Literal>> value;
    friend bool operator==(const Literal&, const Literal&) = default;
};

struct VarRef {
    std::string name;
    friend bool operator==(const VarRef&, const VarRef&) = default;
};

using ArgExpr = std::variant<Literal, VarRef>;

/// One call `var = tool(args...)`; `index` is the 1-based position in the plan.
struct Step {
    std::size_t index = 0;
    std::string var;
    std::string tool;
    std::vector<ArgExpr> args;
    friend bool operator==(const Step&, const Step&) = default;
};

struct Plan {
    std::vector<Step> steps;
    ArgExpr answer;
    friend bool operator==(const Plan&, const Plan&) = default;
};

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

inline std::string quote_plan_string(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default: out.push_back(c);
        }
    }
    return out + "\"";
}

inline std::string render_literal(const Literal& lit) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Decimal>) return v.to_string();
            else if constexpr (std::is_same_v<T, std::string>) return quote_plan_string(v);
            else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
            else {
                std::string out = "[";
                for (std::size_t i = 0; i < v.size(); ++i) {
                    if (i) out += ", ";
                    out += render_literal(v[i]);
                }
                return out + "]";
            }
        },
        lit.value);
}

inline std::string render_arg(const ArgExpr& arg) {
    if (const auto* ref = std::get_if<VarRef>(&arg)) return ref->name;
    return render_literal(std::get<Literal>(arg));
}

inline std::string render_step(const Step& step) {
    std::string out = step.var + " = " + step.tool + "(";
    for (std::size_t i = 0; i < step.args.size(); ++i) {
        if (i) out += ", ";
        out += render_arg(step.args[i]);
    }
    return out + ")";
}

/// One line per step, then `ANSWER = expr`, each newline-terminated.
inline std::string render_plan(const Plan& plan) {
    std::string out;
    for (const auto& s : plan.steps) out += render_step(s) + "\n";
    out += std::string(answer_keyword) + " = " + render_arg(plan.answer) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

struct PlanToken {
    enum Kind { ident, number, string, punct } kind;
    std::string text;
};

inline std::vector<PlanToken> lex_plan_line(std::string_view line, std::size_t line_no) {
    std::vector<PlanToken> out;
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (strings::is_space(c)) { ++i; continue; }
        if (c == '#') break;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_')) ++j;
            out.push_back({PlanToken::ident, std::string(line.substr(i, j - i))});
            i = j;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '-' && i + 1 < line.size() &&
                                                           std::isdigit(static_cast<unsigned char>(line[i + 1])))) {
            std::size_t j = i + 1;
            while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
            if (j < line.size() && line[j] == '.') {
                ++j;
                const std::size_t frac = j;
                while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
                if (j == frac) throw SyntaxError(line_no, "digits expected after '.'");
            }
            out.push_back({PlanToken::number, std::string(line.substr(i, j - i))});
            i = j;
            continue;
        }
        if (c == '"') {
            std::string value;
            std::size_t j = i + 1;
            bool closed = false;
            while (j < line.size()) {
                if (line[j] == '\\' && j + 1 < line.size()) {
                    const char e = line[j + 1];
                    value.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
                    j += 2;
                } else if (line[j] == '"') {
                    closed = true;
                    ++j;
                    break;
                } else {
                    value.push_back(line[j++]);
                }
            }
            if (!closed) throw SyntaxError(line_no, "unterminated string");
            out.push_back({PlanToken::string, std::move(value)});
            i = j;
            continue;
        }
        if (c == '=' || c == '(' || c == ')' || c == '[' || c == ']' || c == ',') {
            out.push_back({PlanToken::punct, std::string(1, c)});
            ++i;
            continue;
        }
        throw SyntaxError(line_no, std::string("unexpected character '") + c + "'");
    }
    return out;
}

class PlanLineParser {
public:
    PlanLineParser(std::vector<PlanToken> toks, std::size_t line_no) : toks_(std::move(toks)), line_(line_no) {}

    bool at_end() const { return pos_ >= toks_.size(); }

    const PlanToken& expect(PlanToken::Kind kind, std::string_view what) {
        if (at_end() || toks_[pos_].kind != kind) fail(std::string(what) + " expected");
        return toks_[pos_++];
    }
    void expect_punct(char p) {
        if (at_end() || toks_[pos_].kind != PlanToken::punct || toks_[pos_].text[0] != p)
            fail(std::string("'") + p + "' expected");
        ++pos_;
    }
    bool peek_punct(char p) const {
        return !at_end() && toks_[pos_].kind == PlanToken::punct && toks_[pos_].text[0] == p;
    }

    Literal literal() {
        if (at_end()) fail("expression expected");
        const auto& t = toks_[pos_];
        if (t.kind == PlanToken::number) {
            ++pos_;
            auto d = Decimal::parse(t.text);
            if (!d) fail("bad number " + t.text);
            return Literal{*d};
        }
        if (t.kind == PlanToken::string) {
            ++pos_;
            return Literal{t.text};
        }
        if (t.kind == PlanToken::ident && (t.text == "true" || t.text == "false")) {
            ++pos_;
            return Literal{t.text == "true"};
        }
        if (peek_punct('[')) {
            ++pos_;
            std::vector<Literal> items;
            if (!peek_punct(']')) {
                items.push_back(literal());
                while (peek_punct(',')) {
                    ++pos_;
                    items.push_back(literal());
                }
            }
            expect_punct(']');
            for (const auto& item : items)
                if (item.value.index() != items.front().value.index()) fail("array literal mixes types");
            return Literal{std::move(items)};
        }
        fail("literal expected");
    }

    ArgExpr expr() {
        if (!at_end() && toks_[pos_].kind == PlanToken::ident && toks_[pos_].text != "true" &&
            toks_[pos_].text != "false") {
            std::string name = toks_[pos_++].text;
            if (peek_punct('(')) fail("nested calls are not allowed");
            return VarRef{std::move(name)};
        }
        return literal();
    }

    [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(line_, msg); }

private:
    std::vector<PlanToken> toks_;
    std::size_t pos_ = 0;
    std::size_t line_;
};

} // namespace detail

/// Parses the single-assignment plan language:
///
///     plan    := step* answer
///     step    := IDENT "=" IDENT "(" arglist? ")" NEWLINE
///     answer  := "ANSWER" "=" expr NEWLINE?
///     expr    := literal | IDENT
///     literal := NUMBER | STRING | "true" | "false" | "[" arglist? "]"
///
/// `#` starts a comment. Blank lines are ignored.
inline Plan parse_plan(std::string_view text) {
    Plan plan;
    bool have_answer = false;
    std::set<std::string> bound;
    auto lines = strings::split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const std::size_t line_no = ln + 1;
        auto toks = detail::lex_plan_line(lines[ln], line_no);
        if (toks.empty()) continue;
        if (have_answer) throw SyntaxError(line_no, "statement after ANSWER");
        detail::PlanLineParser p(std::move(toks), line_no);
        const std::string lhs = p.expect(detail::PlanToken::ident, "variable name").text;
        p.expect_punct('=');
        if (lhs == answer_keyword) {
            plan.answer = p.expr();
            if (!p.at_end()) p.fail("unexpected tokens after ANSWER expression");
            have_answer = true;
            continue;
        }
        if (lhs == table_variable) p.fail("table_data cannot be reassigned");
        if (lhs == "true" || lhs == "false") p.fail("reserved word used as variable");
        if (!bound.insert(lhs).second) p.fail("variable '" + lhs + "' is already bound");
        Step step;
        step.index = plan.steps.size() + 1;
        step.var = lhs;
        step.tool = p.expect(detail::PlanToken::ident, "tool name").text;
        p.expect_punct('(');
        if (!p.peek_punct(')')) {
            step.args.push_back(p.expr());
            while (p.peek_punct(',')) {
                p.expect_punct(',');
                step.args.push_back(p.expr());
            }
        }
        p.expect_punct(')');
        if (!p.at_end()) p.fail("unexpected tokens after call");
        plan.steps.push_back(std::move(step));
    }
    if (!have_answer) throw MissingAnswer();
    return plan;
}

// ---------------------------------------------------------------------------
// Static validation
// ---------------------------------------------------------------------------

/// Empty result (or warnings only) means the plan is statically executable.
inline std::vector<Diagnostic> validate_plan(const Plan& plan, const Registry& registry) {
    std::vector<Diagnostic> diags;
    std::map<std::string, std::size_t> defined;  // var -> step
    std::set<std::string> used;

    auto check_ref = [&](const ArgExpr& arg, std::size_t step) {
        const auto* ref = std::get_if<VarRef>(&arg);
        if (!ref) return;
        used.insert(ref->name);
        if (ref->name != table_variable && !defined.count(ref->name))
            diags.push_back({Severity::error, "UseBeforeDef", step, "'" + ref->name + "' used before definition"});
    };

    for (const auto& step : plan.steps) {
        auto canonical = registry.canonical_name(step.tool);
        const ToolSpec* spec = canonical ? registry.find(*canonical) : nullptr;
        if (!spec) {
            diags.push_back({Severity::error, "UnknownTool", step.index, "unknown tool '" + step.tool + "'"});
        } else if (spec->params.size() != step.args.size()) {
            diags.push_back({Severity::error, "ArityMismatch", step.index,
                             step.tool + " takes " + std::to_string(spec->params.size()) + " argument(s), got " +
                                 std::to_string(step.args.size())});
        }
        for (const auto& arg : step.args) check_ref(arg, step.index);
        defined.emplace(step.var, step.index);
    }
    check_ref(plan.answer, plan.steps.size() + 1);
    for (const auto& step : plan.steps)
        if (!used.count(step.var))
            diags.push_back({Severity::warning, "UnusedVar", step.index, "'" + step.var + "' is never used"});
    return diags;
}

// ---------------------------------------------------------------------------
// Linearizing tool-maker programs
// ---------------------------------------------------------------------------

/// Body lines of `def solution(...)`, or of the whole text when there is no
/// such def. `param` is the solution's first parameter name, if any.
struct SolutionBody {
    std::vector<pysrc::LogicalLine> lines;
    std::optional<std::string> param;
};

inline SolutionBody solution_body(std::string_view source) {
    SolutionBody out;
    for (const auto& fn : pysrc::top_level_functions(source)) {
        if (fn.name != "solution") continue;
        auto lines = pysrc::logical_lines(fn.source);
        if (!fn.params.empty()) out.param = fn.params.front();
        const auto& header = lines.front().tokens;
        for (std::size_t k = 0; k + 1 < header.size(); ++k)
            if (header[k].text == ")" && header[k + 1].text == ":" && k + 2 < header.size()) {
                pysrc::LogicalLine inline_body = lines.front();
                inline_body.tokens.assign(header.begin() + static_cast<std::ptrdiff_t>(k + 2), header.end());
                inline_body.indent += 4;
                out.lines.push_back(std::move(inline_body));
                break;
            }
        out.lines.insert(out.lines.end(), lines.begin() + 1, lines.end());
        return out;
    }
    out.lines = pysrc::logical_lines(source);
    return out;
}

namespace detail {

using pysrc::Token;
using pysrc::TokenKind;

class ProgramLineReader {
public:
    ProgramLineReader(const std::vector<Token>& toks, std::optional<std::string> table_param)
        : toks_(toks), table_param_(std::move(table_param)) {}

    bool at_end() const { return pos_ >= toks_.size(); }
    const Token& peek(std::size_t ahead = 0) const { return toks_[pos_ + ahead]; }
    bool peek_op(std::string_view op, std::size_t ahead = 0) const {
        return pos_ + ahead < toks_.size() && toks_[pos_ + ahead].kind == TokenKind::op &&
               toks_[pos_ + ahead].text == op;
    }
    void next() { ++pos_; }

    Literal literal() {
        if (at_end()) throw NonLinearizable("unsupported expression");
        const Token& t = peek();
        if (t.kind == TokenKind::op && t.text == "-" && pos_ + 1 < toks_.size() &&
            toks_[pos_ + 1].kind == TokenKind::number) {
            next();
            Literal lit = number_literal(peek().text);
            next();
            std::get<Decimal>(lit.value) = -std::get<Decimal>(lit.value);
            return lit;
        }
        if (t.kind == TokenKind::number) {
            next();
            return number_literal(t.text);
        }
        if (t.kind == TokenKind::string) {
            next();
            std::string value = pysrc::decode_string(t.text);
            // implicit concatenation of adjacent literals
            while (!at_end() && peek().kind == TokenKind::string) {
                value += pysrc::decode_string(peek().text);
                next();
            }
            return Literal{std::move(value)};
        }
        if (t.kind == TokenKind::name && (t.text == "True" || t.text == "False")) {
            next();
            return Literal{t.text == "True"};
        }
        if (t.kind == TokenKind::op && t.text == "[") {
            next();
            std::vector<Literal> items;
            while (!peek_op("]")) {
                if (!at_end() && peek().kind == TokenKind::name && peek().text != "True" && peek().text != "False")
                    throw NonLinearizable("name inside list literal");
                items.push_back(literal());
                if (peek_op(",")) next();
                else if (!peek_op("]")) throw NonLinearizable("unsupported expression");
            }
            next();
            for (const auto& item : items)
                if (item.value.index() != items.front().value.index())
                    throw NonLinearizable("mixed-type list literal");
            return Literal{std::move(items)};
        }
        throw NonLinearizable("unsupported expression");
    }

    ArgExpr arg() {
        if (!at_end() && peek().kind == TokenKind::name && peek().text != "True" && peek().text != "False") {
            const Token& t = peek();
            if (t.text == "None" || pysrc::is_keyword(t.text)) throw NonLinearizable("unsupported expression");
            if (peek_op("(", 1)) throw NonLinearizable("nested call");
            if (peek_op("[", 1)) throw NonLinearizable("subscript");
            if (peek_op(".", 1)) throw NonLinearizable("attribute access");
            if (peek_op("=", 1)) throw NonLinearizable("keyword argument");
            std::string name = t.text;
            next();
            if (table_param_ && name == *table_param_) name = std::string(table_variable);
            return VarRef{std::move(name)};
        }
        return literal();
    }

    std::vector<ArgExpr> call_args() {
        std::vector<ArgExpr> args;
        if (!peek_op("(")) throw NonLinearizable("unsupported expression");
        next();
        while (!peek_op(")")) {
            if (at_end()) throw NonLinearizable("unsupported expression");
            args.push_back(arg());
            if (peek_op(",")) next();
            else if (!peek_op(")")) {
                if (!at_end() && peek().kind == TokenKind::op && peek().text == "(") throw NonLinearizable("nested call");
                throw NonLinearizable("unsupported expression");
            }
        }
        next();
        return args;
    }

private:
    static Literal number_literal(const std::string& raw) {
        std::string cleaned;
        for (char c : raw)
            if (c != '_') cleaned.push_back(c);
        auto d = Decimal::parse(cleaned);
        if (!d) throw NonLinearizable("unsupported literal " + raw);
        return Literal{*d};
    }

    const std::vector<Token>& toks_;
    std::optional<std::string> table_param_;
    std::size_t pos_ = 0;
};

inline bool is_literal_or_name_return(const std::vector<pysrc::Token>& toks) {
    if (toks.empty() || toks[0].text != "return") return false;
    if (toks.size() == 1) return false;
    for (std::size_t k = 1; k < toks.size(); ++k)
        if (toks[k].kind == TokenKind::op && toks[k].text == "(") return false;
    return true;
}

} // namespace detail

/// Turns a straight-line `solution` body into a plan. Every statement must
/// be `v = f(a, ...)` with literal or previously bound name arguments; the
/// `return` expression becomes ANSWER (a returned call becomes a final step
/// bound to `answer`).
///
/// Throws NonLinearizable for loops, conditionals, nested calls,
/// re-assignment and anything else outside that shape.
inline Plan linearize_program(std::string_view source) {
    using detail::TokenKind;
    auto body = solution_body(source);
    if (body.lines.empty()) throw NonLinearizable("empty solution body");
    const std::size_t base_indent = body.lines.front().indent;

    for (const auto& line : body.lines) {
        const auto& t = line.tokens.front();
        if (t.kind != TokenKind::name) continue;
        if (t.text == "for" || t.text == "while") throw NonLinearizable("loop");
        if (t.text == "if" || t.text == "elif" || t.text == "else") throw NonLinearizable("conditional");
    }

    Plan plan;
    std::set<std::string> bound;
    bool returned = false;

    for (const auto& line : body.lines) {
        const auto& toks = line.tokens;
        if (toks.size() == 1 && toks[0].kind == TokenKind::string) continue;  // docstring
        if (returned) throw NonLinearizable("statement after return");
        const std::string& head = toks[0].text;
        if (toks[0].kind == TokenKind::name) {
            if (head == "for" || head == "while") throw NonLinearizable("loop");
            if (head == "if" || head == "elif" || head == "else") throw NonLinearizable("conditional");
            if (head == "try" || head == "except" || head == "finally" || head == "with" || head == "def" ||
                head == "class" || head == "lambda" || head == "import" || head == "from" || head == "pass" ||
                head == "global" || head == "nonlocal" || head == "del" || head == "assert" || head == "raise" ||
                head == "yield")
                throw NonLinearizable("unsupported statement '" + head + "'");
        }
        if (line.indent != base_indent) throw NonLinearizable("nested block");
        for (const auto& t : toks)
            if (t.kind == TokenKind::name && t.text == "lambda") throw NonLinearizable("lambda");

        detail::ProgramLineReader reader(toks, body.param);
        if (head == "return") {
            reader.next();
            if (reader.at_end()) throw NonLinearizable("empty return");
            if (toks.size() >= 3 && toks[1].kind == TokenKind::name && toks[2].kind == TokenKind::op &&
                toks[2].text == "(") {
                if (bound.count("answer")) throw NonLinearizable("reassignment of 'answer'");
                Step step;
                step.index = plan.steps.size() + 1;
                step.var = "answer";
                step.tool = toks[1].text;
                reader.next();
                step.args = reader.call_args();
                if (!reader.at_end()) throw NonLinearizable("unsupported expression");
                plan.steps.push_back(std::move(step));
                plan.answer = VarRef{"answer"};
            } else {
                plan.answer = reader.arg();
                if (!reader.at_end()) {
                    if (reader.peek_op(",")) throw NonLinearizable("multiple return values");
                    throw NonLinearizable("unsupported expression");
                }
            }
            returned = true;
            continue;
        }
        if (toks.size() < 2 || toks[0].kind != TokenKind::name) throw NonLinearizable("unsupported statement");
        if (toks[1].kind == TokenKind::op && toks[1].text == "(") throw NonLinearizable("expression statement");
        if (toks[1].kind == TokenKind::op && toks[1].text != "=") {
            if (detail::is_assign_op(toks[1])) throw NonLinearizable("reassignment of '" + head + "'");
            if (toks[1].text == ",") throw NonLinearizable("tuple assignment");
            throw NonLinearizable("unsupported statement");
        }
        const std::string var = head;
        if (var == answer_keyword) throw NonLinearizable("reserved name ANSWER");
        if (bound.count(var) || var == table_variable || (body.param && var == *body.param))
            throw NonLinearizable("reassignment of '" + var + "'");
        if (toks.size() < 4 || toks[2].kind != TokenKind::name || !(toks[3].kind == TokenKind::op && toks[3].text == "(")) {
            if (toks.size() >= 4 && toks[2].kind == TokenKind::name && toks[3].text == ".")
                throw NonLinearizable("method call");
            throw NonLinearizable("unsupported expression");
        }
        if (pysrc::is_keyword(toks[2].text)) throw NonLinearizable("unsupported expression");
        Step step;
        step.index = plan.steps.size() + 1;
        step.var = var;
        step.tool = toks[2].text;
        reader.next();
        reader.next();
        reader.next();
        step.args = reader.call_args();
        if (!reader.at_end()) {
            if (reader.peek_op("[")) throw NonLinearizable("subscript");
            if (reader.peek_op(".")) throw NonLinearizable("method call");
            throw NonLinearizable("unsupported expression");
        }
        // Tool makers sometimes swap get_column_cell_value's arguments.
        if (strings::to_snake_case(step.tool) == "get_column_cell_value" && step.args.size() == 2) {
            const auto* first = std::get_if<Literal>(&step.args[0]);
            if (first && std::holds_alternative<Decimal>(first->value) && std::holds_alternative<VarRef>(step.args[1]))
                std::swap(step.args[0], step.args[1]);
        }
        bound.insert(var);
        plan.steps.push_back(std::move(step));
    }
    if (!returned) throw NonLinearizable("missing return");
    return plan;
}

/// The solution function with `###k` markers appended to each line that
/// becomes plan step k; a plain `return name` line is left unnumbered.
inline std::string number_solution_lines(std::string_view program) {
    auto body = solution_body(program);
    std::string out = "def solution(" + body.param.value_or(std::string(table_variable)) + "):\n";
    std::size_t k = 0;
    for (const auto& line : body.lines) {
        if (line.tokens.size() == 1 && line.tokens[0].kind == pysrc::TokenKind::string) continue;
        out += "    " + line.text;
        if (!detail::is_literal_or_name_return(line.tokens)) out += " ###" + std::to_string(++k);
        out += "\n";
    }
    return out;
}

/// Rewrites called names through `renames`; only identifiers directly
/// followed by `(` are touched.
inline std::string rename_calls(std::string_view program, const std::map<std::string, std::string>& renames) {
    std::string out;
    std::size_t i = 0;
    char quote = 0;
    while (i < program.size()) {
        const char c = program[i];
        if (quote) {
            out.push_back(c);
            if (c == '\\' && i + 1 < program.size()) out.push_back(program[++i]);
            else if (c == quote) quote = 0;
            ++i;
            continue;
        }
        if (c == '"' || c == '\'') {
            quote = c;
            out.push_back(c);
            ++i;
            continue;
        }
        if (c == '#') {
            while (i < program.size() && program[i] != '\n') out.push_back(program[i++]);
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < program.size() && (std::isalnum(static_cast<unsigned char>(program[j])) || program[j] == '_')) ++j;
            std::string word(program.substr(i, j - i));
            std::size_t k = j;
            while (k < program.size() && program[k] == ' ') ++k;
            const bool after_dot = i > 0 && program[i - 1] == '.';
            if (!after_dot && k < program.size() && program[k] == '(') {
                if (auto it = renames.find(word); it != renames.end()) word = it->second;
            }
            out += word;
            i = j;
            continue;
        }
        out.push_back(c);
        ++i;
    }
    return out;
}

} // namespace tabrex
