#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabrex/formatter.hpp"
#include "tabrex/plan.hpp"
#include "tabrex/table.hpp"
#include "tabrex/toolkit.hpp"

namespace tabrex {

// ---------------------------------------------------------------------------
// Runtime values
// ---------------------------------------------------------------------------

struct Scalar {
    CellValue cell;
    friend bool operator==(const Scalar&, const Scalar&) = default;
};

struct Column {
    std::vector<CellValue> cells;
    std::string header;
    friend bool operator==(const Column&, const Column&) = default;
};

struct Row {
    std::vector<CellValue> cells;
    std::vector<std::string> headers;
    friend bool operator==(const Row&, const Row&) = default;
};

struct TableV {
    Table table;
    friend bool operator==(const TableV&, const TableV&) = default;
};

struct Bool {
    bool value = false;
    friend bool operator==(const Bool&, const Bool&) = default;
};

struct Str {
    std::string value;
    friend bool operator==(const Str&, const Str&) = default;
};

struct ListNum {
    std::vector<Decimal> values;
    friend bool operator==(const ListNum&, const ListNum&) = default;
};

using Value = std::variant<Scalar, Column, Row, TableV, Bool, Str, ListNum>;

inline const char* value_kind_name(const Value& v) {
    static constexpr std::array<const char*, 7> names = {"scalar", "column", "row", "table", "bool", "string",
                                                         "list_number"};
    if (const auto* s = std::get_if<Scalar>(&v)) {
        static thread_local std::string buf;
        buf = std::string("scalar:") + cell_kind_name(s->cell);
        return buf.c_str();
    }
    return names[v.index()];
}

/// Error kinds a plan run can end with.
namespace error_kind {
inline constexpr const char* unknown_tool = "UnknownTool";
inline constexpr const char* arity_mismatch = "ArityMismatch";
inline constexpr const char* type_mismatch = "TypeMismatch";
inline constexpr const char* column_not_found = "ColumnNotFound";
inline constexpr const char* row_not_found = "RowNotFound";
inline constexpr const char* index_out_of_bounds = "IndexOutOfBounds";
inline constexpr const char* div_by_zero = "DivByZero";
inline constexpr const char* unbound_variable = "UnboundVariable";
inline constexpr const char* step_budget = "StepBudgetExceeded";
inline constexpr const char* use_before_def = "UseBeforeDef";
inline constexpr const char* syntax = "SyntaxError";
inline constexpr const char* non_linearizable = "NonLinearizable";
inline constexpr const char* no_solution = "NoSolutionFound";
inline constexpr const char* gateway = "GatewayError";
} // namespace error_kind

class ExecError : public Error {
public:
    ExecError(std::string kind, const std::string& message) : Error(message), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

namespace detail {

inline std::string render_cells(const std::vector<CellValue>& cells) {
    std::string out = "[";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ", ";
        out += render_canonical(cells[i]);
    }
    return out + "]";
}

inline std::string render_decimals(const std::vector<Decimal>& values) {
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += values[i].to_string();
    }
    return out + "]";
}

} // namespace detail

/// Literal-like display used in traces: strings quoted, lists bracketed.
inline std::string render_value(const Value& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Scalar>) return render_canonical(x.cell);
            else if constexpr (std::is_same_v<T, Column> || std::is_same_v<T, Row>) return detail::render_cells(x.cells);
            else if constexpr (std::is_same_v<T, TableV>) return serialize_canonical(x.table);
            else if constexpr (std::is_same_v<T, Bool>) return x.value ? "true" : "false";
            else if constexpr (std::is_same_v<T, Str>) return json_quote(x.value);
            else return detail::render_decimals(x.values);
        },
        v);
}

/// Final-answer text: plain scalars, booleans as yes/no.
inline std::string answer_text(const Value& v) {
    if (const auto* s = std::get_if<Scalar>(&v)) return render_plain(s->cell);
    if (const auto* b = std::get_if<Bool>(&v)) return b->value ? "yes" : "no";
    if (const auto* s = std::get_if<Str>(&v)) return s->value;
    return render_value(v);
}

// ---------------------------------------------------------------------------
// Coercion
// ---------------------------------------------------------------------------

/// Number reading of a cell under the formatter's cleaning rules: Percent
/// gives its displayed magnitude, Currency its amount, Text is cleaned
/// ("$5" -> 5).
inline std::optional<Decimal> cell_as_number(const CellValue& cell) {
    if (const auto* n = std::get_if<Number>(&cell)) return n->value;
    if (const auto* p = std::get_if<Percent>(&cell)) return p->value;
    if (const auto* c = std::get_if<Currency>(&cell)) return c->amount;
    if (const auto* t = std::get_if<Text>(&cell)) {
        CellValue cleaned = parse_cell(detail::strip_footnotes(t->value));
        if (std::holds_alternative<Text>(cleaned)) return std::nullopt;
        return cell_as_number(cleaned);
    }
    return std::nullopt;
}

inline std::optional<Decimal> value_as_number(const Value& v) {
    if (const auto* s = std::get_if<Scalar>(&v)) return cell_as_number(s->cell);
    if (const auto* s = std::get_if<Str>(&v)) return cell_as_number(Text{s->value});
    return std::nullopt;
}

[[noreturn]] inline void type_mismatch(ParamKind expected, const Value& got) {
    throw ExecError(error_kind::type_mismatch,
                    std::string("expected ") + to_string(expected) + ", got " + value_kind_name(got));
}

/// Implicit conversions allowed when binding an argument to a parameter.
/// Throws ExecError(TypeMismatch) when no rule applies.
inline Value coerce(const Value& value, ParamKind kind) {
    switch (kind) {
    case ParamKind::any: return value;
    case ParamKind::number:
        if (auto n = value_as_number(value)) return Scalar{Number{*n}};
        break;
    case ParamKind::list_number:
        if (std::holds_alternative<ListNum>(value)) return value;
        if (const auto* col = std::get_if<Column>(&value)) {
            ListNum out;
            for (const auto& cell : col->cells) {
                auto n = cell_as_number(cell);
                if (!n) type_mismatch(kind, value);
                out.values.push_back(*n);
            }
            return out;
        }
        break;
    case ParamKind::string:
        if (std::holds_alternative<Str>(value)) return value;
        if (const auto* s = std::get_if<Scalar>(&value))
            if (const auto* t = std::get_if<Text>(&s->cell)) return Str{t->value};
        break;
    case ParamKind::table:
        if (std::holds_alternative<TableV>(value)) return value;
        break;
    case ParamKind::column:
        if (std::holds_alternative<Column>(value)) return value;
        break;
    case ParamKind::row:
        if (std::holds_alternative<Row>(value)) return value;
        break;
    case ParamKind::boolean:
        if (std::holds_alternative<Bool>(value)) return value;
        break;
    }
    type_mismatch(kind, value);
}

// ---------------------------------------------------------------------------
// Builtin implementations
// ---------------------------------------------------------------------------

using ToolImpl = std::function<Value(std::span<const Value>)>;

namespace detail {

inline const Decimal& num(const Value& v) { return std::get<Number>(std::get<Scalar>(v).cell).value; }
inline const std::vector<Decimal>& nums(const Value& v) { return std::get<ListNum>(v).values; }
inline Value number_value(Decimal d) { return Scalar{Number{std::move(d)}}; }

inline bool is_comparable_scalar(const Value& v) {
    return std::holds_alternative<Scalar>(v) || std::holds_alternative<Str>(v) || std::holds_alternative<Bool>(v);
}

/// -1, 0, 1. Numeric when both sides read as numbers, else string order of
/// the plain renderings.
inline int compare_values(const Value& a, const Value& b) {
    if (!is_comparable_scalar(a)) type_mismatch(ParamKind::any, a);
    if (!is_comparable_scalar(b)) type_mismatch(ParamKind::any, b);
    auto na = value_as_number(a);
    auto nb = value_as_number(b);
    if (na && nb) return *na < *nb ? -1 : (*nb < *na ? 1 : 0);
    const std::string sa(strings::trim(answer_text(a)));
    const std::string sb(strings::trim(answer_text(b)));
    return sa < sb ? -1 : (sb < sa ? 1 : 0);
}

inline std::size_t index_arg(const Value& v, std::size_t size, const char* axis) {
    const Decimal& d = num(v);
    auto i = d.to_int64();
    if (!i) throw ExecError(error_kind::type_mismatch, "index must be an integer, got " + d.to_string());
    if (*i < 0 || static_cast<std::size_t>(*i) >= size)
        throw ExecError(error_kind::index_out_of_bounds,
                        std::string(axis) + " index " + d.to_string() + " out of range (size " + std::to_string(size) + ")");
    return static_cast<std::size_t>(*i);
}

inline std::size_t find_column(const Table& table, std::string_view name) {
    const std::string wanted = strings::fold(name);
    for (std::size_t c = 0; c < table.column_count(); ++c)
        if (strings::fold(table.headers()[c]) == wanted) return c;
    throw ExecError(error_kind::column_not_found, "no column named '" + std::string(name) + "'");
}

inline std::vector<Decimal> column_numbers(const Column& col) {
    std::vector<Decimal> out;
    for (const auto& cell : col.cells) {
        auto n = cell_as_number(cell);
        if (!n) throw ExecError(error_kind::type_mismatch, std::string("non-numeric cell in column: ") + cell_kind_name(cell));
        out.push_back(*n);
    }
    return out;
}

inline std::size_t extreme_index(const Column& col, bool want_max) {
    auto values = column_numbers(col);
    if (values.empty()) throw ExecError(error_kind::index_out_of_bounds, "empty column");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (want_max ? values[i] > values[best] : values[i] < values[best]) best = i;
    return best;
}

inline Value divide(const Decimal& a, const Decimal& b) {
    if (b.is_zero()) throw ExecError(error_kind::div_by_zero, "division by zero");
    return number_value(a / b);
}

} // namespace detail

/// Implementations keyed by canonical builtin name. Arguments arrive
/// already coerced to the ToolSpec parameter kinds.
inline const std::map<std::string, ToolImpl>& builtin_implementations() {
    using namespace detail;
    static const std::map<std::string, ToolImpl> impls = {
        {"get_column_by_name",
         [](std::span<const Value> a) -> Value {
             const Table& t = std::get<TableV>(a[0]).table;
             const std::size_t c = find_column(t, std::get<Str>(a[1]).value);
             return Column{t.column(c), t.headers()[c]};
         }},
        {"get_column_by_index",
         [](std::span<const Value> a) -> Value {
             const Table& t = std::get<TableV>(a[0]).table;
             const std::size_t c = index_arg(a[1], t.column_count(), "column");
             return Column{t.column(c), t.headers()[c]};
         }},
        {"get_row_by_name",
         [](std::span<const Value> a) -> Value {
             const Table& t = std::get<TableV>(a[0]).table;
             const std::string wanted = strings::fold(std::get<Str>(a[1]).value);
             if (t.column_count() > 0)
                 for (const auto& row : t.rows())
                     if (strings::fold(render_plain(row[0])) == wanted) return Row{row, t.headers()};
             throw ExecError(error_kind::row_not_found, "no row named '" + std::get<Str>(a[1]).value + "'");
         }},
        {"get_row_index_by_value",
         [](std::span<const Value> a) -> Value {
             const auto& col = std::get<Column>(a[0]);
             for (std::size_t i = 0; i < col.cells.size(); ++i)
                 if (compare_values(Scalar{col.cells[i]}, a[1]) == 0) return number_value(Decimal(static_cast<long long>(i)));
             throw ExecError(error_kind::row_not_found, "value " + render_value(a[1]) + " not in column");
         }},
        {"get_column_cell_value",
         [](std::span<const Value> a) -> Value {
             const auto& col = std::get<Column>(a[0]);
             return Scalar{col.cells[index_arg(a[1], col.cells.size(), "row")]};
         }},
        {"extract_price",
         [](std::span<const Value> a) -> Value {
             if (auto n = value_as_number(a[0])) return number_value(*n);
             throw ExecError(error_kind::type_mismatch, "no price in " + render_value(a[0]));
         }},
        {"add", [](std::span<const Value> a) -> Value { return number_value(num(a[0]) + num(a[1])); }},
        {"subtract", [](std::span<const Value> a) -> Value { return number_value(num(a[0]) - num(a[1])); }},
        {"multiply", [](std::span<const Value> a) -> Value { return number_value(num(a[0]) * num(a[1])); }},
        {"divide", [](std::span<const Value> a) -> Value { return divide(num(a[0]), num(a[1])); }},
        {"sum",
         [](std::span<const Value> a) -> Value {
             Decimal total;
             for (const auto& v : nums(a[0])) total += v;
             return number_value(total);
         }},
        {"average",
         [](std::span<const Value> a) -> Value {
             Decimal total;
             for (const auto& v : nums(a[0])) total += v;
             return divide(total, Decimal(static_cast<long long>(nums(a[0]).size())));
         }},
        {"min",
         [](std::span<const Value> a) -> Value {
             const auto& v = nums(a[0]);
             if (v.empty()) throw ExecError(error_kind::index_out_of_bounds, "min of empty list");
             return number_value(*std::min_element(v.begin(), v.end()));
         }},
        {"max",
         [](std::span<const Value> a) -> Value {
             const auto& v = nums(a[0]);
             if (v.empty()) throw ExecError(error_kind::index_out_of_bounds, "max of empty list");
             return number_value(*std::max_element(v.begin(), v.end()));
         }},
        {"count",
         [](std::span<const Value> a) -> Value {
             std::size_t n = 0;
             if (const auto* c = std::get_if<Column>(&a[0])) n = c->cells.size();
             else if (const auto* l = std::get_if<ListNum>(&a[0])) n = l->values.size();
             else if (const auto* r = std::get_if<Row>(&a[0])) n = r->cells.size();
             else if (const auto* t = std::get_if<TableV>(&a[0])) n = t->table.row_count();
             else type_mismatch(ParamKind::column, a[0]);
             return number_value(Decimal(static_cast<long long>(n)));
         }},
        {"argmax",
         [](std::span<const Value> a) -> Value {
             return number_value(Decimal(static_cast<long long>(extreme_index(std::get<Column>(a[0]), true))));
         }},
        {"argmin",
         [](std::span<const Value> a) -> Value {
             return number_value(Decimal(static_cast<long long>(extreme_index(std::get<Column>(a[0]), false))));
         }},
        {"equal_to", [](std::span<const Value> a) -> Value { return Bool{compare_values(a[0], a[1]) == 0}; }},
        {"greater_than", [](std::span<const Value> a) -> Value { return Bool{compare_values(a[0], a[1]) > 0}; }},
        {"less_than", [](std::span<const Value> a) -> Value { return Bool{compare_values(a[0], a[1]) < 0}; }},
        {"filter_rows",
         [](std::span<const Value> a) -> Value {
             const Table& t = std::get<TableV>(a[0]).table;
             const std::size_t c = find_column(t, std::get<Str>(a[1]).value);
             std::vector<std::vector<CellValue>> kept;
             for (const auto& row : t.rows())
                 if (compare_values(Scalar{row[c]}, a[2]) == 0) kept.push_back(row);
             return TableV{Table(t.caption(), t.headers(), std::move(kept))};
         }},
        {"linear_regression",
         [](std::span<const Value> a) -> Value {
             const auto& xs = nums(a[0]);
             const auto& ys = nums(a[1]);
             if (xs.size() != ys.size())
                 throw ExecError(error_kind::type_mismatch, "xs and ys differ in length");
             if (xs.empty()) throw ExecError(error_kind::div_by_zero, "regression over no points");
             const Decimal n(static_cast<long long>(xs.size()));
             Decimal sx, sy;
             for (std::size_t i = 0; i < xs.size(); ++i) {
                 sx += xs[i];
                 sy += ys[i];
             }
             const Decimal mx = sx / n, my = sy / n;
             Decimal sxy, sxx;
             for (std::size_t i = 0; i < xs.size(); ++i) {
                 sxy += (xs[i] - mx) * (ys[i] - my);
                 sxx += (xs[i] - mx) * (xs[i] - mx);
             }
             if (sxx.is_zero()) throw ExecError(error_kind::div_by_zero, "xs have zero variance");
             const Decimal slope = sxy / sxx;
             return ListNum{{slope, my - slope * mx}};
         }},
    };
    return impls;
}

// ---------------------------------------------------------------------------
// Run outcome
// ---------------------------------------------------------------------------

struct TraceEntry {
    std::size_t step = 0;
    std::string tool;
    std::vector<std::string> args;
    std::string result;
    friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct StepError {
    std::size_t step = 0;  ///< 0 when the failure happened before execution
    std::string kind;
    std::string message;
    friend bool operator==(const StepError&, const StepError&) = default;
};

/// executable implies no error and no fallback; fallback implies not
/// executable.
struct RunOutcome {
    std::string answer;
    bool executable = false;
    bool fallback_used = false;
    std::vector<TraceEntry> trace;
    std::optional<StepError> error;
    friend bool operator==(const RunOutcome&, const RunOutcome&) = default;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["answer"] = answer;
        j["executable"] = executable;
        j["fallback_used"] = fallback_used;
        j["trace"] = nlohmann::ordered_json::array();
        for (const auto& t : trace)
            j["trace"].push_back({{"step", t.step}, {"tool", t.tool}, {"args", t.args}, {"result", t.result}});
        if (error) j["error"] = {{"step", error->step}, {"kind", error->kind}, {"message", error->message}};
        else j["error"] = nullptr;
        return j;
    }

    static RunOutcome from_json(const nlohmann::json& j) {
        RunOutcome o;
        o.answer = j.value("answer", "");
        o.executable = j.value("executable", false);
        o.fallback_used = j.value("fallback_used", false);
        for (const auto& t : j.value("trace", nlohmann::json::array()))
            o.trace.push_back({t.at("step").get<std::size_t>(), t.at("tool").get<std::string>(),
                               t.at("args").get<std::vector<std::string>>(), t.at("result").get<std::string>()});
        if (j.contains("error") && !j["error"].is_null())
            o.error = StepError{j["error"].at("step").get<std::size_t>(), j["error"].at("kind").get<std::string>(),
                                j["error"].at("message").get<std::string>()};
        return o;
    }
};

inline constexpr std::size_t max_plan_steps = 64;

namespace detail {

inline Value literal_value(const Literal& lit) {
    return std::visit(
        [](const auto& v) -> Value {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Decimal>) return Scalar{Number{v}};
            else if constexpr (std::is_same_v<T, std::string>) return Str{v};
            else if constexpr (std::is_same_v<T, bool>) return Bool{v};
            else {
                if (v.empty()) return ListNum{};
                if (std::holds_alternative<Decimal>(v.front().value)) {
                    ListNum out;
                    for (const auto& item : v) out.values.push_back(std::get<Decimal>(item.value));
                    return out;
                }
                if (std::holds_alternative<std::string>(v.front().value)) {
                    Column out;
                    for (const auto& item : v) out.cells.push_back(Text{std::get<std::string>(item.value)});
                    return out;
                }
                throw ExecError(error_kind::type_mismatch, "unsupported array literal " + render_literal(Literal{v}));
            }
        },
        lit.value);
}

inline Value eval_arg(const ArgExpr& arg, const std::map<std::string, Value>& env) {
    if (const auto* ref = std::get_if<VarRef>(&arg)) {
        auto it = env.find(ref->name);
        if (it == env.end()) throw ExecError(error_kind::unbound_variable, "'" + ref->name + "' is not bound");
        return it->second;
    }
    return literal_value(std::get<Literal>(arg));
}

} // namespace detail

/// Runs the plan against a formatted table. The first failing step halts
/// the run: the outcome is then non-executable with an empty answer and the
/// trace holds the steps that completed.
inline RunOutcome execute_plan(const Plan& plan, const Table& table, const Registry& registry) {
    RunOutcome out;
    if (plan.steps.size() > max_plan_steps) {
        out.error = StepError{max_plan_steps + 1, error_kind::step_budget,
                              "plan has " + std::to_string(plan.steps.size()) + " steps, budget is " +
                                  std::to_string(max_plan_steps)};
        return out;
    }
    std::map<std::string, Value> env;
    env.emplace(std::string(table_variable), TableV{table});
    const auto& impls = builtin_implementations();

    for (const auto& step : plan.steps) {
        try {
            auto canonical = registry.canonical_name(step.tool);
            const ToolSpec* spec = canonical ? registry.find(*canonical) : nullptr;
            auto impl = canonical ? impls.find(*canonical) : impls.end();
            if (!spec || impl == impls.end())
                throw ExecError(error_kind::unknown_tool, "unknown tool '" + step.tool + "'");
            if (spec->params.size() != step.args.size())
                throw ExecError(error_kind::arity_mismatch,
                                spec->name + " takes " + std::to_string(spec->params.size()) + " argument(s), got " +
                                    std::to_string(step.args.size()));
            std::vector<Value> args;
            std::vector<std::string> rendered;
            for (std::size_t i = 0; i < step.args.size(); ++i) {
                Value raw = detail::eval_arg(step.args[i], env);
                rendered.push_back(std::holds_alternative<VarRef>(step.args[i]) &&
                                           std::get<VarRef>(step.args[i]).name == table_variable
                                       ? std::string(table_variable)
                                       : render_value(raw));
                args.push_back(coerce(raw, spec->params[i].kind));
            }
            Value result = impl->second(args);
            out.trace.push_back({step.index, spec->name, std::move(rendered), render_value(result)});
            env.insert_or_assign(step.var, std::move(result));
        } catch (const ExecError& e) {
            out.error = StepError{step.index, e.kind(), e.what()};
            return out;
        }
    }
    try {
        out.answer = std::string(strings::trim(answer_text(detail::eval_arg(plan.answer, env))));
    } catch (const ExecError& e) {
        out.error = StepError{plan.steps.size() + 1, e.kind(), e.what()};
        out.answer.clear();
        return out;
    }
    out.executable = true;
    return out;
}

// ---------------------------------------------------------------------------
// Generated tools -> executable plan
// ---------------------------------------------------------------------------

struct PreparedPlan {
    Plan plan;
    std::map<std::string, Registration> registrations;  ///< generated def name -> outcome
};

/// Maps each generated def onto a builtin and rewrites the plan's calls to
/// canonical names. Calls to rejected defs keep their name and fail as
/// unknown tools.
inline PreparedPlan prepare_plan(Plan plan, const std::vector<ToolDef>& defs, const Registry& registry) {
    PreparedPlan out;
    for (const auto& def : defs) out.registrations.emplace(def.name, register_generated(def, registry));
    for (auto& step : plan.steps) {
        auto it = out.registrations.find(step.tool);
        if (it != out.registrations.end()) {
            if (const auto* m = std::get_if<MappedTo>(&it->second)) step.tool = m->name;
        } else if (auto canonical = registry.canonical_name(step.tool)) {
            step.tool = *canonical;
        }
    }
    out.plan = std::move(plan);
    return out;
}

} // namespace tabrex
