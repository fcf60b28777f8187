#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"

#include "tabrex/http_transport.hpp"
#include "tabrex/tabrex.hpp"

#ifndef TABREX_DEFAULT_DATA_DIR
#define TABREX_DEFAULT_DATA_DIR "fixtures"
#endif

namespace fs = std::filesystem;
using namespace tabrex;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

std::string pretty(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

TableFormat guess_format(const fs::path& path, const std::string& flag) {
    if (!flag.empty()) {
        auto f = table_format_from_string(flag);
        if (!f) throw Error("unknown table format '" + flag + "'");
        return *f;
    }
    const auto ext = path.extension().string();
    if (ext == ".md") return TableFormat::markdown;
    if (ext == ".json") return TableFormat::json_rows;
    return TableFormat::csv;
}

struct Settings {
    GatewayConfig gateway;
    EvalConfig eval;
};

fs::path resolve_against(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

Decimal json_decimal(const nlohmann::json& j) {
    auto d = Decimal::parse(j.dump());
    if (!d) throw Error("expected a number, got " + j.dump());
    return *d;
}

/// Loads the optional config file; relative paths inside it are taken
/// from the file's directory.
Settings load_settings(const std::string& config_path) {
    Settings s;
    fs::path label_dir = fs::path(TABREX_DEFAULT_DATA_DIR) / "label_maps";
    fs::path fewshot_dir = fs::path(TABREX_DEFAULT_DATA_DIR) / "fewshot" / "v1";
    if (!config_path.empty()) {
        const fs::path base = fs::path(config_path).parent_path();
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(config_path));
        } catch (const nlohmann::json::exception& e) {
            throw Error("bad config " + config_path + ": " + e.what());
        }
        if (j.contains("gateway")) s.gateway = GatewayConfig::from_json(j["gateway"]);
        if (!s.gateway.cache_dir.empty()) s.gateway.cache_dir = resolve_against(base, s.gateway.cache_dir).string();
        if (j.contains("tolerance")) {
            const auto& t = j["tolerance"];
            if (t.contains("relative")) s.eval.tolerance.rel_tol = json_decimal(t["relative"]);
            if (t.contains("absolute")) s.eval.tolerance.abs_tol = json_decimal(t["absolute"]);
        }
        if (j.contains("label_map_dir")) label_dir = resolve_against(base, j["label_map_dir"].get<std::string>());
        if (j.contains("fewshot_dir")) fewshot_dir = resolve_against(base, j["fewshot_dir"].get<std::string>());
        if (j.contains("format_mode")) {
            auto m = format_mode_from_string(j["format_mode"].get<std::string>());
            if (!m) throw Error("unknown format_mode in " + config_path);
            s.eval.run.format_mode = *m;
        }
        s.eval.parallelism = std::max<std::size_t>(1, j.value("parallelism", std::size_t{1}));
        s.eval.run.token_budget = j.value("token_budget", default_token_budget);
        if (j.contains("registry"))
            s.eval.run.registry =
                Registry::from_json(nlohmann::json::parse(read_file(resolve_against(base, j["registry"].get<std::string>()))));
    }
    s.gateway.apply_env();
    s.eval.labels = LabelMaps::load(label_dir);
    if (fs::is_directory(fewshot_dir)) s.eval.run.fewshots = FewShotLibrary::load(fewshot_dir);
    return s;
}

/// Replay or HTTP backend, optionally behind the disk cache.
class GatewayStack {
public:
    GatewayStack(const GatewayConfig& config, const std::string& replay_path) {
        if (!replay_path.empty()) {
            replay_ = std::make_unique<ReplayGateway>(ReplayTable::load(replay_path));
            base_ = replay_.get();
        } else {
            http_ = std::make_unique<ChatCompletionGateway>(config, make_http_transport());
            base_ = http_.get();
        }
        if (!config.cache_dir.empty()) cache_ = std::make_unique<CachingGateway>(*base_, config.cache_dir, config.model_name);
    }

    Gateway& gateway() { return cache_ ? static_cast<Gateway&>(*cache_) : *base_; }

    std::size_t network_calls() const { return replay_ ? replay_->network_calls() : http_->network_calls(); }
    std::size_t cache_hits() const { return cache_ ? cache_->hits() : 0; }

    void report() const {
        std::cerr << "network_calls=" << network_calls() << " cache_hits=" << cache_hits() << "\n";
    }

private:
    std::unique_ptr<ReplayGateway> replay_;
    std::unique_ptr<ChatCompletionGateway> http_;
    std::unique_ptr<CachingGateway> cache_;
    Gateway* base_ = nullptr;
};

std::string safe_file_name(const std::string& id) {
    std::string out;
    for (char c : id) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_');
    return out;
}

void write_jsonl(const fs::path& path, const std::vector<SynthRecord>& recs) {
    std::string text;
    for (const auto& r : recs) text += r.to_json().dump() + "\n";
    write_file(path, text);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tabrex: table reasoning with tool plans"};
    app.require_subcommand(1);

    // format
    std::string fmt_in, fmt_format, fmt_mode = "rules", fmt_query, fmt_report, fmt_config;
    auto* format_cmd = app.add_subcommand("format", "clean a table and print its canonical serialization");
    format_cmd->add_option("--in", fmt_in, "table file (csv, md or json)")->required();
    format_cmd->add_option("--format", fmt_format, "csv | markdown | json_rows (default: from extension)");
    format_cmd->add_option("--mode", fmt_mode, "rules | llm")->capture_default_str();
    format_cmd->add_option("--query", fmt_query, "question the table will serve");
    format_cmd->add_option("--report", fmt_report, "write the FormatReport JSON here");
    format_cmd->add_option("--config", fmt_config, "config file (gateway for llm mode)");

    // run
    std::string run_table, run_plan, run_format, run_registry;
    bool run_raw = false;
    auto* run_cmd = app.add_subcommand("run", "execute a plan against a table and print the outcome");
    run_cmd->add_option("--table", run_table, "table file")->required();
    run_cmd->add_option("--plan", run_plan, "plan file")->required();
    run_cmd->add_option("--format", run_format, "table format (default: from extension)");
    run_cmd->add_option("--registry", run_registry, "registry JSON (default: builtins)");
    run_cmd->add_flag("--raw", run_raw, "skip rule formatting of the table");

    // explain
    std::string ex_text, ex_plan, ex_table, ex_mode = "symbolic";
    auto* explain_cmd = app.add_subcommand("explain", "validate and render an explanation against a plan");
    explain_cmd->add_option("--explanation", ex_text, "explanation text file")->required();
    explain_cmd->add_option("--plan", ex_plan, "plan file")->required();
    explain_cmd->add_option("--table", ex_table, "table file (needed for with_results)");
    explain_cmd->add_option("--mode", ex_mode, "symbolic | with_results")->capture_default_str();

    // eval
    std::string ev_records, ev_method = "tart", ev_out, ev_config, ev_replay, ev_traces;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a method on a JSONL record file");
    eval_cmd->add_option("--records", ev_records, "records JSONL")->required();
    eval_cmd->add_option("--method", ev_method, "tart | cot | directqa")->capture_default_str();
    eval_cmd->add_option("--out", ev_out, "metrics JSON output")->required();
    eval_cmd->add_option("--config", ev_config, "config file");
    eval_cmd->add_option("--replay", ev_replay, "serve model responses from a replay JSONL");
    eval_cmd->add_option("--traces", ev_traces, "write one outcome file per record here");

    // synth
    std::string sy_records, sy_out, sy_config, sy_replay;
    std::size_t sy_min_count = 2;
    auto* synth_cmd = app.add_subcommand("synth", "build verified training streams from teacher outputs");
    synth_cmd->add_option("--records", sy_records, "records JSONL")->required();
    synth_cmd->add_option("--out", sy_out, "output directory")->required();
    synth_cmd->add_option("--config", sy_config, "config file");
    synth_cmd->add_option("--replay", sy_replay, "serve teacher responses from a replay JSONL");
    synth_cmd->add_option("--min-count", sy_min_count, "abstraction threshold")->capture_default_str();

    // tools
    auto* tools_cmd = app.add_subcommand("tools", "tool inventory utilities");
    tools_cmd->require_subcommand(1);
    std::string st_traces, st_ood, st_out;
    std::size_t st_k = 10;
    auto* stats_cmd = tools_cmd->add_subcommand("stats", "tool usage statistics from trace files");
    stats_cmd->add_option("--traces", st_traces, "trace directory")->required();
    stats_cmd->add_option("--ood-traces", st_ood, "out-of-domain trace directory");
    stats_cmd->add_option("--out", st_out, "stats JSON output")->required();
    stats_cmd->add_option("--top-k", st_k, "size of the top-k table")->capture_default_str();
    std::string reg_out;
    auto* reg_cmd = tools_cmd->add_subcommand("registry", "write the builtin registry as JSON");
    reg_cmd->add_option("--out", reg_out, "registry JSON output")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*format_cmd) {
            auto mode = format_mode_from_string(fmt_mode);
            if (!mode) throw Error("unknown mode '" + fmt_mode + "'");
            auto table = parse_table(read_file(fmt_in), guess_format(fmt_in, fmt_format));
            LlmFormatter llm;
            std::unique_ptr<GatewayStack> stack;
            Settings settings;
            if (*mode == FormatMode::llm) {
                settings = load_settings(fmt_config);
                stack = std::make_unique<GatewayStack>(settings.gateway, "");
                llm = [&](const Table& t, std::string_view q) -> std::string {
                    try {
                        return stack->gateway().complete(build_formatter_prompt(
                            t, q, settings.eval.run.fewshots.get(PromptKind::formatter), settings.eval.run.token_budget));
                    } catch (const Error& e) {
                        std::cerr << "warning: " << e.what() << "\n";
                        return {};
                    }
                };
            }
            auto [formatted, report] = format_table(table, fmt_query, *mode, llm);
            std::cout << serialize_canonical(formatted) << "\n";
            if (!fmt_report.empty()) write_file(fmt_report, pretty(report.to_json()));
            return 0;
        }

        if (*run_cmd) {
            auto table = parse_table(read_file(run_table), guess_format(run_table, run_format));
            if (!run_raw) table = format_table(table, "", FormatMode::rules, {}).first;
            Registry registry = run_registry.empty() ? builtin_registry()
                                                     : Registry::from_json(nlohmann::json::parse(read_file(run_registry)));
            auto plan = parse_plan(read_file(run_plan));
            std::cout << pretty(execute_plan(plan, table, registry).to_json());
            return 0;
        }

        if (*explain_cmd) {
            auto mode = render_mode_from_string(ex_mode);
            if (!mode) throw Error("unknown mode '" + ex_mode + "'");
            auto expl = parse_explanation(read_file(ex_text));
            auto plan = parse_plan(read_file(ex_plan));
            auto diags = validate_refs(expl, plan);
            for (const auto& d : diags)
                std::cerr << (d.severity == Severity::error ? "error" : "warning") << ": " << d.code << " (step " << d.step
                          << "): " << d.message << "\n";
            RunOutcome outcome;
            if (!ex_table.empty()) {
                auto table = parse_table(read_file(ex_table), guess_format(ex_table, ""));
                outcome = execute_plan(plan, format_table(table, "", FormatMode::rules, {}).first, builtin_registry());
            }
            std::cout << render(expl, plan, outcome, *mode) << "\n";
            return has_errors(diags) ? 1 : 0;
        }

        if (*eval_cmd) {
            auto method = method_from_string(ev_method);
            if (!method) throw Error("unknown method '" + ev_method + "'");
            auto settings = load_settings(ev_config);
            auto records = load_records(ev_records);
            GatewayStack stack(settings.gateway, ev_replay);
            auto result = evaluate(records, *method, stack.gateway(), settings.eval);
            write_file(ev_out, pretty(result.metrics.to_json()));
            if (!ev_traces.empty()) {
                fs::create_directories(ev_traces);
                for (const auto& r : result.results)
                    write_file(fs::path(ev_traces) / (safe_file_name(r.id) + ".json"), pretty(r.to_json()));
            }
            stack.report();
            return 0;
        }

        if (*synth_cmd) {
            auto settings = load_settings(sy_config);
            auto records = load_records(sy_records);
            GatewayStack stack(settings.gateway, sy_replay);
            auto result = synthesize(records, stack.gateway(), settings.eval, sy_min_count);
            const fs::path out(sy_out);
            fs::create_directories(out);
            write_jsonl(out / "formatter.jsonl", result.formatter);
            write_jsonl(out / "toolmaker.jsonl", result.toolmaker);
            write_jsonl(out / "explainer.jsonl", result.explainer);
            write_file(out / "stats.json", pretty(result.stats.to_json()));
            stack.report();
            return 0;
        }

        if (*stats_cmd) {
            auto outcomes = load_trace_dir(st_traces);
            std::optional<std::vector<RunOutcome>> ood;
            if (!st_ood.empty()) ood = load_trace_dir(st_ood);
            auto stats = tool_stats(outcomes, builtin_registry(), st_k, ood ? &*ood : nullptr);
            write_file(st_out, pretty(stats.to_json()));
            return 0;
        }

        if (*reg_cmd) {
            auto reg = builtin_registry();
            auto j = reg.to_json();
            j["content_hash"] = reg.content_hash();
            write_file(reg_out, pretty(j));
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
