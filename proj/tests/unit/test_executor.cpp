#include <gtest/gtest.h>

#include "generators.hpp"
#include "oracle.hpp"
#include "tabrex/executor.hpp"
#include "tabrex/pipeline.hpp"

using namespace tabrex;

namespace {

Table numbers_table(const std::string& header, const std::vector<int>& values) {
    std::vector<std::vector<CellValue>> rows;
    for (int v : values) rows.push_back({Number{Decimal(v)}});
    return Table("", {header}, std::move(rows));
}

RunOutcome run(const std::string& plan_text, const Table& table) {
    return execute_plan(parse_plan(plan_text), table, builtin_registry());
}

const Table& toy_prices() {
    static const Table t = parse_table(R"([["Toy", "Price"], ["yo-yo", 1.25], ["kite", 4.5], ["puzzle", 3.75]])",
                                       TableFormat::json_rows);
    return t;
}

} // namespace

TEST(ExecutePlan, MatchesBruteForceOracle) {
    gen::Rng rng(8675309);
    const Registry reg = builtin_registry();
    std::size_t executable = 0, failed = 0;
    for (int i = 0; i < 1500; ++i) {
        const oracle::Case c = oracle::random_case(rng);
        const std::string text = c.plan_text();
        const oracle::Result want = oracle::run(c);
        const RunOutcome got = execute_plan(parse_plan(text), c.table, reg);
        ASSERT_EQ(got.executable, want.ok) << text << serialize_canonical(c.table);
        if (want.ok) {
            ASSERT_EQ(got.answer, want.answer) << text << serialize_canonical(c.table);
            ASSERT_EQ(got.trace.size(), c.steps.size());
            ++executable;
        } else {
            ASSERT_TRUE(got.error);
            ASSERT_EQ(got.error->kind, want.error_kind) << text;
            ASSERT_EQ(got.error->step, want.error_step) << text;
            ASSERT_EQ(got.trace.size(), want.error_step - 1);
            ASSERT_TRUE(got.answer.empty());
            ++failed;
        }
    }
    // both branches must actually be exercised
    EXPECT_GT(executable, 500u);
    EXPECT_GT(failed, 50u);
}

TEST(ExecutePlan, ArgmaxTieGoesToLowestIndex) {
    const auto out = run("c = get_column_by_name(table_data, \"x\")\nm = argmax(c)\nANSWER = m\n",
                         numbers_table("x", {3, 9, 9}));
    EXPECT_TRUE(out.executable);
    EXPECT_EQ(out.answer, "1");
    const auto low = run("c = get_column_by_name(table_data, \"x\")\nm = argmin(c)\nANSWER = m\n",
                         numbers_table("x", {4, 2, 2}));
    EXPECT_EQ(low.answer, "1");
}

TEST(ExecutePlan, DivideByZeroHaltsAtThatStep) {
    const auto out = run("a = add(1, 2)\nb = divide(a, 0)\nc = add(b, 1)\nANSWER = c\n", numbers_table("x", {1}));
    EXPECT_FALSE(out.executable);
    EXPECT_FALSE(out.fallback_used);
    EXPECT_TRUE(out.answer.empty());
    ASSERT_TRUE(out.error);
    EXPECT_EQ(out.error->kind, error_kind::div_by_zero);
    EXPECT_EQ(out.error->step, 2u);
    EXPECT_EQ(out.trace.size(), 1u);
}

TEST(ExecutePlan, IdentityPlanRendersTable) {
    const auto out = run("ANSWER = table_data\n", toy_prices());
    EXPECT_TRUE(out.executable);
    EXPECT_EQ(out.answer, serialize_canonical(toy_prices()));
    EXPECT_TRUE(out.trace.empty());
}

TEST(ExecutePlan, ErrorKinds) {
    const Table& t = toy_prices();
    auto kind = [&](const std::string& text) {
        const auto out = run(text, t);
        EXPECT_FALSE(out.executable) << text;
        return out.error ? out.error->kind : std::string();
    };
    EXPECT_EQ(kind("a = frobnicate(1)\nANSWER = a"), error_kind::unknown_tool);
    EXPECT_EQ(kind("a = add(1)\nANSWER = a"), error_kind::arity_mismatch);
    EXPECT_EQ(kind("a = add(\"abc\", 1)\nANSWER = a"), error_kind::type_mismatch);
    EXPECT_EQ(kind("a = get_column_by_name(table_data, \"Cost\")\nANSWER = a"), error_kind::column_not_found);
    EXPECT_EQ(kind("a = get_row_by_name(table_data, \"drum\")\nANSWER = a"), error_kind::row_not_found);
    EXPECT_EQ(kind("a = get_column_by_name(table_data, \"Price\")\nb = get_column_cell_value(a, 3)\nANSWER = b"),
              error_kind::index_out_of_bounds);
    EXPECT_EQ(kind("a = add(1, 2)\nANSWER = zz"), error_kind::unbound_variable);
    EXPECT_EQ(kind("a = add(q, 2)\nANSWER = a"), error_kind::unbound_variable);
}

TEST(ExecutePlan, StepBudget) {
    std::string text;
    for (std::size_t i = 1; i <= max_plan_steps + 1; ++i) text += "v" + std::to_string(i) + " = add(1, 1)\n";
    const auto out = run(text + "ANSWER = v1\n", toy_prices());
    EXPECT_FALSE(out.executable);
    ASSERT_TRUE(out.error);
    EXPECT_EQ(out.error->kind, error_kind::step_budget);
    EXPECT_TRUE(out.trace.empty());

    std::string ok;
    for (std::size_t i = 1; i <= max_plan_steps; ++i) ok += "v" + std::to_string(i) + " = add(1, 1)\n";
    EXPECT_TRUE(run(ok + "ANSWER = v1\n", toy_prices()).executable);
}

TEST(ExecutePlan, PerToolExamples) {
    const Table& t = toy_prices();
    auto answer = [&](const std::string& text) {
        const auto out = run(text, t);
        EXPECT_TRUE(out.executable) << text << (out.error ? out.error->message : "");
        return out.answer;
    };
    EXPECT_EQ(answer("c = get_column_by_index(table_data, 0)\nANSWER = c"), "[\"yo-yo\", \"kite\", \"puzzle\"]");
    EXPECT_EQ(answer("r = get_row_by_name(table_data, \"KITE\")\nANSWER = r"), "[\"kite\", 4.5]");
    EXPECT_EQ(answer("c = get_column_by_name(table_data, \"toy\")\ni = get_row_index_by_value(c, \"puzzle\")\nANSWER = i"), "2");
    EXPECT_EQ(answer("p = extract_price(\"$1,200.50\")\nANSWER = p"), "1200.5");
    EXPECT_EQ(answer("a = add(2, 3)\nANSWER = a"), "5");
    EXPECT_EQ(answer("a = subtract(2, 3.5)\nANSWER = a"), "-1.5");
    EXPECT_EQ(answer("a = multiply(1.5, 4)\nANSWER = a"), "6");
    EXPECT_EQ(answer("a = divide(10, 4)\nANSWER = a"), "2.5");
    EXPECT_EQ(answer("a = divide(1, 3)\nANSWER = a"), "0.3333333333333333333333333333");
    EXPECT_EQ(answer("c = get_column_by_name(table_data, \"Price\")\ns = sum(c)\nANSWER = s"), "9.5");
    EXPECT_EQ(answer("s = total([1, 2, 3])\nANSWER = s"), "6");
    EXPECT_EQ(answer("m = mean([2, 4])\nANSWER = m"), "3");
    EXPECT_EQ(answer("m = min([5, -2, 7])\nANSWER = m"), "-2");
    EXPECT_EQ(answer("m = max([5, -2, 7])\nANSWER = m"), "7");
    EXPECT_EQ(answer("n = count(table_data)\nANSWER = n"), "3");
    EXPECT_EQ(answer("e = equal_to(\"3.0\", 3)\nANSWER = e"), "yes");
    EXPECT_EQ(answer("e = equal_to(\"abc\", \"abd\")\nANSWER = e"), "no");
    EXPECT_EQ(answer("g = greater_than(10, 9)\nANSWER = g"), "yes");
    EXPECT_EQ(answer("g = greater_than(\"10\", \"9\")\nANSWER = g"), "yes");
    EXPECT_EQ(answer("l = less_than(\"apple\", \"banana\")\nANSWER = l"), "yes");
    EXPECT_EQ(answer("f = filter_rows(table_data, \"Toy\", \"kite\")\nn = count(f)\nANSWER = n"), "1");
    EXPECT_EQ(answer("l = linear_regression([0, 1], [0, 1])\nANSWER = l"), "[1, 0]");
    EXPECT_EQ(answer("l = linear_regression([0, 1, 2], [1, 3, 5])\nANSWER = l"), "[2, 1]");
    EXPECT_EQ(answer("c = get_column_by_name(table_data, \"Price\")\nv = get_cell(c, 1)\nANSWER = v"), "4.5");
}

TEST(ExecutePlan, DeterministicAndTraceComplete) {
    gen::Rng rng(4242);
    const Registry reg = builtin_registry();
    for (int i = 0; i < 200; ++i) {
        const oracle::Case c = oracle::random_case(rng);
        const Plan p = parse_plan(c.plan_text());
        const RunOutcome a = execute_plan(p, c.table, reg);
        const RunOutcome b = execute_plan(p, c.table, reg);
        ASSERT_EQ(a, b);
        ASSERT_EQ(a.to_json().dump(), b.to_json().dump());
        for (std::size_t k = 0; k < a.trace.size(); ++k) ASSERT_EQ(a.trace[k].step, k + 1);
        if (a.executable) {
            EXPECT_EQ(a.trace.size(), p.steps.size());
            EXPECT_FALSE(a.error);
        }
        EXPECT_FALSE(a.fallback_used);
        EXPECT_EQ(RunOutcome::from_json(nlohmann::json::parse(a.to_json().dump())), a);
    }
}

TEST(ExecutePlan, TraceRendersArgumentsAndResults) {
    const auto out = run("c = get_column_by_name(table_data, \"Price\")\nv = get_column_cell_value(c, 1)\nANSWER = v\n",
                         toy_prices());
    ASSERT_EQ(out.trace.size(), 2u);
    EXPECT_EQ(out.trace[0], (TraceEntry{1, "get_column_by_name", {"table_data", "\"Price\""}, "[1.25, 4.5, 3.75]"}));
    EXPECT_EQ(out.trace[1], (TraceEntry{2, "get_column_cell_value", {"[1.25, 4.5, 3.75]", "1"}, "4.5"}));
}

TEST(Coerce, Rules) {
    EXPECT_EQ(coerce(Scalar{Text{"$5"}}, ParamKind::number), Value(Scalar{Number{Decimal(5)}}));
    EXPECT_EQ(coerce(Scalar{Percent{Decimal(45)}}, ParamKind::number), Value(Scalar{Number{Decimal(45)}}));
    EXPECT_EQ(coerce(Column{{Number{Decimal(1)}, Number{Decimal(2)}}, "x"}, ParamKind::list_number),
              Value(ListNum{{Decimal(1), Decimal(2)}}));
    try {
        coerce(Scalar{Text{"abc"}}, ParamKind::number);
        FAIL();
    } catch (const ExecError& e) {
        EXPECT_EQ(e.kind(), error_kind::type_mismatch);
    }
    EXPECT_THROW(coerce(Column{{Text{"a"}}, "x"}, ParamKind::list_number), ExecError);
    EXPECT_THROW(coerce(Bool{true}, ParamKind::number), ExecError);
    EXPECT_THROW(coerce(Scalar{Number{Decimal(1)}}, ParamKind::column), ExecError);
}

// ---------------------------------------------------------------------------
// run_tart with a scripted gateway
// ---------------------------------------------------------------------------

namespace {

class ScriptedGateway : public Gateway {
public:
    std::optional<std::string> toolmaker, cot;
    std::vector<PromptKind> calls;

    std::string complete(const PromptBundle& bundle) override {
        calls.push_back(bundle.kind);
        const auto& reply = bundle.kind == PromptKind::toolmaker ? toolmaker : bundle.kind == PromptKind::cot ? cot
                                                                                                              : std::nullopt;
        if (!reply) throw GatewayError(GatewayError::Kind::transport, "scripted outage");
        return *reply;
    }
};

Record toy_record() {
    return parse_record(
        R"({"id": "tm-01", "task": "tqa", "dataset": "tabmwp", "query": "How much do a kite and a puzzle cost in total?", "table": [["Toy", "Price"], ["yo-yo", "$1.25"], ["kite", "$4.50"], ["puzzle", "$3.75"]], "gold": "8.25"})",
        1);
}

const char* golden_program = R"(```python
def add(a, b):
    return a + b

def solution(table_data):
    prices = get_column_by_name(table_data, "Price")
    kite = get_column_cell_value(prices, 1)
    puzzle = get_column_cell_value(prices, 2)
    return add(kite, puzzle)
```)";

} // namespace

TEST(RunTart, GoldenProgramExecutes) {
    ScriptedGateway gw;
    gw.toolmaker = golden_program;
    gw.cot = "Answer: 99";
    const RunOutcome out = run_tart(toy_record(), RunConfig{}, gw);
    EXPECT_TRUE(out.executable);
    EXPECT_FALSE(out.fallback_used);
    EXPECT_EQ(out.answer, "8.25");
    EXPECT_EQ(out.trace.size(), 4u);
    EXPECT_EQ(gw.calls, (std::vector<PromptKind>{PromptKind::toolmaker}));
}

TEST(RunTart, LoopProgramFallsBackToCot) {
    ScriptedGateway gw;
    gw.toolmaker = "def solution(table_data):\n    t = 0\n    for r in table_data:\n        t = add(t, 1)\n    return t\n";
    gw.cot = "The kite is 4.50 and the puzzle 3.75.\nAnswer: 8.25.";
    const RunOutcome out = run_tart(toy_record(), RunConfig{}, gw);
    EXPECT_FALSE(out.executable);
    EXPECT_TRUE(out.fallback_used);
    EXPECT_EQ(out.answer, "8.25");
    ASSERT_TRUE(out.error);
    EXPECT_EQ(out.error->kind, error_kind::non_linearizable);
    EXPECT_EQ(gw.calls, (std::vector<PromptKind>{PromptKind::toolmaker, PromptKind::cot}));
}

TEST(RunTart, ExecutionFailureFallsBack) {
    ScriptedGateway gw;
    gw.toolmaker = "def solution(table_data):\n    c = get_column_by_name(table_data, 'Cost')\n    return c\n";
    gw.cot = "Answer: 8.25";
    const RunOutcome out = run_tart(toy_record(), RunConfig{}, gw);
    EXPECT_TRUE(out.fallback_used);
    EXPECT_EQ(out.error->kind, error_kind::column_not_found);
    EXPECT_EQ(out.answer, "8.25");
}

TEST(RunTart, BothDownGivesEmptyAnswer) {
    ScriptedGateway gw;
    const RunOutcome out = run_tart(toy_record(), RunConfig{}, gw);
    EXPECT_FALSE(out.executable);
    EXPECT_TRUE(out.fallback_used);
    EXPECT_TRUE(out.answer.empty());
    EXPECT_EQ(out.error->kind, error_kind::gateway);
    EXPECT_EQ(gw.calls.size(), 2u);
}

TEST(RunTart, RejectedGeneratedToolIsNotExecutable) {
    ScriptedGateway gw;
    gw.toolmaker =
        "def parse_weird_format(s):\n    return s.split('|')[2]\n\n"
        "def solution(table_data):\n    v = parse_weird_format('a|b|c')\n    return v\n";
    gw.cot = "Answer: c";
    const RunOutcome out = run_tart(toy_record(), RunConfig{}, gw);
    EXPECT_TRUE(out.fallback_used);
    EXPECT_EQ(out.error->kind, "UnknownTool");
    EXPECT_EQ(out.error->step, 1u);
}
