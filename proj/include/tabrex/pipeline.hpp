#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tabrex/executor.hpp"
#include "tabrex/formatter.hpp"
#include "tabrex/gateway.hpp"
#include "tabrex/plan.hpp"
#include "tabrex/record.hpp"
#include "tabrex/toolkit.hpp"

namespace tabrex {

struct RunConfig {
    FormatMode format_mode = FormatMode::rules;
    std::size_t token_budget = default_token_budget;
    FewShotLibrary fewshots;
    Registry registry = builtin_registry();
};

/// Everything a tool-maker run produced, for callers that need more than
/// the outcome (synthesis, explanation rendering).
struct TartRun {
    RunOutcome outcome;
    Table formatted;
    std::optional<std::string> response;
    std::optional<ToolmakerOutput> parsed;
    std::optional<Plan> plan;
};

namespace detail {

inline LlmFormatter gateway_formatter(Gateway& gateway, const RunConfig& config) {
    return [&gateway, &config](const Table& table, std::string_view query) -> std::string {
        try {
            return gateway.complete(build_formatter_prompt(table, query, config.fewshots.get(PromptKind::formatter),
                                                           config.token_budget));
        } catch (const Error&) {
            return {};
        }
    };
}

inline std::string cot_answer(const Record& record, const RunConfig& config, Gateway& gateway) {
    return extract_cot_answer(
        gateway.complete(build_cot_prompt(record, config.fewshots.get(PromptKind::cot), config.token_budget)));
}

} // namespace detail

/// Formats the table, asks for a program, maps its tools, linearizes,
/// validates and executes the plan. `answer` is passed to the tool maker
/// when a teacher writes programs for a known label.
inline TartRun run_toolmaker(const Record& record, const RunConfig& config, Gateway& gateway,
                             std::optional<std::string_view> answer = std::nullopt) {
    TartRun run;
    run.formatted = format_table(record.table, record.query, config.format_mode,
                                 detail::gateway_formatter(gateway, config))
                        .first;
    auto fail = [&](std::size_t step, const char* kind, const std::string& message) {
        run.outcome.error = StepError{step, kind, message};
        return run;
    };
    try {
        run.response = gateway.complete(build_toolmaker_prompt(
            run.formatted, record.query, config.fewshots.get(PromptKind::toolmaker), config.token_budget, answer));
    } catch (const Error& e) {
        return fail(0, error_kind::gateway, e.what());
    }
    try {
        run.parsed = parse_toolmaker_output(*run.response);
    } catch (const NoSolutionFound& e) {
        return fail(0, error_kind::no_solution, e.what());
    } catch (const SyntaxError& e) {
        return fail(0, error_kind::syntax, e.what());
    }
    Plan raw;
    try {
        raw = linearize_program(run.parsed->program);
    } catch (const NonLinearizable& e) {
        return fail(0, error_kind::non_linearizable, e.what());
    } catch (const SyntaxError& e) {
        return fail(0, error_kind::syntax, e.what());
    }
    run.plan = prepare_plan(std::move(raw), run.parsed->defs, config.registry).plan;
    for (const auto& d : validate_plan(*run.plan, config.registry))
        if (d.severity == Severity::error) return fail(d.step, d.code.c_str(), d.message);
    run.outcome = execute_plan(*run.plan, run.formatted, config.registry);
    return run;
}

/// The full pipeline with CoT fallback on any non-executable outcome. A
/// failing fallback leaves the answer empty.
inline RunOutcome run_tart(const Record& record, const RunConfig& config, Gateway& gateway) {
    RunOutcome outcome = run_toolmaker(record, config, gateway).outcome;
    if (outcome.executable) return outcome;
    outcome.fallback_used = true;
    outcome.answer.clear();
    try {
        outcome.answer = detail::cot_answer(record, config, gateway);
    } catch (const Error&) {
    }
    return outcome;
}

namespace detail {

inline RunOutcome prompt_only_outcome(std::string answer) {
    RunOutcome o;
    o.answer = std::move(answer);
    return o;
}

} // namespace detail

inline RunOutcome run_cot(const Record& record, const RunConfig& config, Gateway& gateway) {
    try {
        return detail::prompt_only_outcome(detail::cot_answer(record, config, gateway));
    } catch (const Error& e) {
        RunOutcome o;
        o.error = StepError{0, error_kind::gateway, e.what()};
        return o;
    }
}

inline RunOutcome run_directqa(const Record& record, const RunConfig& config, Gateway& gateway) {
    try {
        return detail::prompt_only_outcome(extract_direct_answer(gateway.complete(
            build_directqa_prompt(record, config.fewshots.get(PromptKind::directqa), config.token_budget))));
    } catch (const Error& e) {
        RunOutcome o;
        o.error = StepError{0, error_kind::gateway, e.what()};
        return o;
    }
}

} // namespace tabrex
