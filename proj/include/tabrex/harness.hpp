#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabrex/decimal.hpp"
#include "tabrex/explainer.hpp"
#include "tabrex/pipeline.hpp"
#include "tabrex/record.hpp"

namespace tabrex {

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Verdict vocabulary of one fact-verification dataset.
struct LabelMap {
    std::set<std::string> labels;
    std::map<std::string, std::string> map;  ///< folded surface form -> label

    static LabelMap from_json(const nlohmann::json& j) {
        LabelMap m;
        for (const auto& l : j.at("labels")) m.labels.insert(l.get<std::string>());
        for (const auto& [k, v] : j.at("map").items()) m.map[strings::fold(k)] = v.get<std::string>();
        return m;
    }
};

/// One `<dataset>.json` per dataset.
class LabelMaps {
public:
    static LabelMaps load(const std::filesystem::path& dir) {
        LabelMaps out;
        if (dir.empty() || !std::filesystem::is_directory(dir)) return out;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.path().extension() != ".json") continue;
            std::ifstream in(entry.path());
            try {
                out.maps_[entry.path().stem().string()] = LabelMap::from_json(nlohmann::json::parse(in));
            } catch (const nlohmann::json::exception& e) {
                throw Error("bad label map " + entry.path().string() + ": " + e.what());
            }
        }
        return out;
    }

    const LabelMap* find(const std::string& dataset) const {
        auto it = maps_.find(dataset);
        return it == maps_.end() ? nullptr : &it->second;
    }

    void set(const std::string& dataset, LabelMap m) { maps_[dataset] = std::move(m); }

private:
    std::map<std::string, LabelMap> maps_;
};

struct ScoreConfig {
    Decimal rel_tol = Decimal::parse("1e-4").value();
    Decimal abs_tol = Decimal::parse("1e-6").value();
};

/// trim, case-fold, drop currency marks, thousands commas and '%'.
inline std::string normalize_answer(std::string_view s) {
    std::string folded = strings::fold(s);
    for (const auto& sym : currency_symbols) {
        for (auto pos = folded.find(sym); pos != std::string::npos; pos = folded.find(sym)) folded.erase(pos, sym.size());
    }
    std::string out;
    for (char c : folded)
        if (c != ',' && c != '%') out.push_back(c);
    std::string trimmed(strings::trim(out));
    for (const auto& code : currency_codes) {
        const std::string lc = strings::lower(code);
        if (trimmed.size() > lc.size() && strings::ends_with(trimmed, lc) &&
            (detail::is_digit(trimmed[trimmed.size() - lc.size() - 1]) || trimmed[trimmed.size() - lc.size() - 1] == ' ')) {
            trimmed = std::string(strings::trim(std::string_view(trimmed).substr(0, trimmed.size() - lc.size())));
            break;
        }
    }
    while (!trimmed.empty() && trimmed.back() == '.') trimmed.pop_back();
    return trimmed;
}

inline bool numbers_close(const Decimal& a, const Decimal& b, const ScoreConfig& tol) {
    const Decimal diff = (a - b).abs();
    const Decimal scale = std::max(a.abs(), b.abs());
    return diff <= std::max(scale * tol.rel_tol, tol.abs_tol);
}

inline std::string map_label(std::string_view text, const LabelMap* labels) {
    std::string folded = strings::fold(text);
    while (!folded.empty() && folded.back() == '.') folded.pop_back();
    if (labels) {
        auto it = labels->map.find(folded);
        if (it != labels->map.end()) return it->second;
    }
    return folded;
}

inline bool score(std::string_view pred, std::string_view gold, Task task, const LabelMap* labels = nullptr,
                  const ScoreConfig& tol = {}) {
    if (task == Task::tfv) return map_label(pred, labels) == map_label(gold, labels);
    const std::string p = normalize_answer(pred);
    const std::string g = normalize_answer(gold);
    auto pn = Decimal::parse(p);
    auto gn = Decimal::parse(g);
    if (pn && gn) return numbers_close(*pn, *gn, tol);
    return p == g;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline Decimal percent(std::size_t part, std::size_t whole) {
    if (whole == 0) return Decimal();
    return (Decimal(static_cast<long long>(part)) * Decimal(100) / Decimal(static_cast<long long>(whole))).round(1);
}

/// Simple mean, reported to one decimal.
inline Decimal macro_average(const std::vector<Decimal>& values) {
    if (values.empty()) return Decimal();
    Decimal total;
    for (const auto& v : values) total += v;
    return (total / Decimal(static_cast<long long>(values.size()))).round(1);
}

struct DatasetMetrics {
    std::size_t n = 0;
    Decimal accuracy;
    Decimal execution_rate;
};

struct Metrics {
    std::string method;
    std::size_t n = 0;
    Decimal accuracy;
    Decimal execution_rate;
    std::map<std::string, DatasetMetrics> per_dataset;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["method"] = method;
        j["n"] = n;
        j["accuracy"] = accuracy.to_double();
        j["execution_rate"] = execution_rate.to_double();
        j["per_dataset"] = nlohmann::ordered_json::object();
        for (const auto& [name, m] : per_dataset)
            j["per_dataset"][name] = {{"n", m.n},
                                      {"accuracy", m.accuracy.to_double()},
                                      {"execution_rate", m.execution_rate.to_double()}};
        return j;
    }
};

/// Macro-averages per-dataset figures into the headline numbers.
inline Metrics aggregate_metrics(std::string method, const std::map<std::string, DatasetMetrics>& per_dataset) {
    Metrics m;
    m.method = std::move(method);
    m.per_dataset = per_dataset;
    std::vector<Decimal> acc, exe;
    for (const auto& [name, d] : per_dataset) {
        m.n += d.n;
        acc.push_back(d.accuracy);
        exe.push_back(d.execution_rate);
    }
    m.accuracy = macro_average(acc);
    m.execution_rate = macro_average(exe);
    return m;
}

/// 100 * a / b to one decimal.
inline Decimal relative_ratio(const Decimal& a, const Decimal& b) {
    if (!(b > Decimal())) throw std::invalid_argument("relative_ratio needs a positive baseline");
    return (Decimal(100) * a / b).round(1);
}

inline Decimal relative_ratio(const Metrics& a, const Metrics& b) { return relative_ratio(a.accuracy, b.accuracy); }

/// 100 * (a - base) / base to one decimal.
inline Decimal relative_improvement(const Decimal& a, const Decimal& base) {
    if (!(base > Decimal())) throw std::invalid_argument("relative_improvement needs a positive baseline");
    return (Decimal(100) * (a - base) / base).round(1);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum class Method { tart, cot, directqa };

inline const char* to_string(Method m) {
    switch (m) {
    case Method::tart: return "tart";
    case Method::cot: return "cot";
    case Method::directqa: return "directqa";
    }
    return "?";
}

inline std::optional<Method> method_from_string(std::string_view s) {
    if (s == "tart") return Method::tart;
    if (s == "cot") return Method::cot;
    if (s == "directqa") return Method::directqa;
    return std::nullopt;
}

struct EvalConfig {
    RunConfig run;
    LabelMaps labels;
    ScoreConfig tolerance;
    std::size_t parallelism = 1;
};

struct RecordResult {
    std::string id;
    std::string dataset;
    std::string gold;
    bool correct = false;
    RunOutcome outcome;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["id"] = id;
        j["dataset"] = dataset;
        j["gold"] = gold;
        j["correct"] = correct;
        j["outcome"] = outcome.to_json();
        return j;
    }
};

struct EvalResult {
    Metrics metrics;
    std::vector<RecordResult> results;  ///< ordered by record id
};

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
}

inline std::map<std::string, DatasetMetrics> per_dataset_metrics(const std::vector<RecordResult>& results) {
    std::map<std::string, std::array<std::size_t, 3>> counts;  // n, correct, executable
    for (const auto& r : results) {
        auto& c = counts[r.dataset];
        ++c[0];
        if (r.correct) ++c[1];
        if (r.outcome.executable) ++c[2];
    }
    std::map<std::string, DatasetMetrics> out;
    for (const auto& [name, c] : counts) out[name] = {c[0], percent(c[1], c[0]), percent(c[2], c[0])};
    return out;
}

inline EvalResult evaluate(const std::vector<Record>& records, Method method, Gateway& gateway,
                           const EvalConfig& config) {
    if (records.empty()) throw std::invalid_argument("evaluate needs at least one record");
    std::vector<RecordResult> results(records.size());
    parallel_for(records.size(), config.parallelism, [&](std::size_t i) {
        const Record& rec = records[i];
        RecordResult& r = results[i];
        r.id = rec.id;
        r.dataset = rec.dataset;
        r.gold = rec.gold;
        switch (method) {
        case Method::tart: r.outcome = run_tart(rec, config.run, gateway); break;
        case Method::cot: r.outcome = run_cot(rec, config.run, gateway); break;
        case Method::directqa: r.outcome = run_directqa(rec, config.run, gateway); break;
        }
        r.correct = !r.outcome.answer.empty() &&
                    score(r.outcome.answer, rec.gold, rec.task, config.labels.find(rec.dataset), config.tolerance);
    });
    std::stable_sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    EvalResult out;
    out.metrics = aggregate_metrics(to_string(method), per_dataset_metrics(results));
    out.results = std::move(results);
    return out;
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

struct SynthRecord {
    std::string module;  ///< formatter | toolmaker | explainer
    std::string input;
    std::string target;
    std::string source_record;
    bool verified = true;

    nlohmann::ordered_json to_json() const {
        return {{"module", module}, {"input", input}, {"target", target}, {"source_record", source_record},
                {"verified", verified}};
    }
};

struct SynthStats {
    std::size_t records = 0;
    std::size_t generated = 0;   ///< tool-maker responses received
    std::size_t parsed = 0;      ///< responses with a linearizable solution
    std::size_t executable = 0;
    std::size_t correct = 0;
    std::size_t dropped_at_verification = 0;
    std::size_t tools_generated = 0;
    std::size_t tools_retained = 0;
    std::vector<std::string> tools_removed;
    std::map<std::string, std::string> alias_map;
    std::size_t dropped_by_abstraction = 0;
    std::size_t dropped_at_closure = 0;
    std::size_t dropped_bad_explanation = 0;
    std::size_t formatter = 0;
    std::size_t toolmaker = 0;
    std::size_t explainer = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["records"] = records;
        j["generated"] = generated;
        j["parsed"] = parsed;
        j["executable"] = executable;
        j["correct"] = correct;
        j["dropped_at_verification"] = dropped_at_verification;
        j["tools"] = {{"generated", tools_generated},
                      {"retained", tools_retained},
                      {"removed", tools_removed},
                      {"aliases", alias_map}};
        j["dropped"] = {{"abstraction", dropped_by_abstraction},
                        {"closure", dropped_at_closure},
                        {"explanation", dropped_bad_explanation}};
        j["streams"] = {{"formatter", formatter}, {"toolmaker", toolmaker}, {"explainer", explainer}};
        return j;
    }
};

struct SynthResult {
    std::vector<SynthRecord> formatter;
    std::vector<SynthRecord> toolmaker;
    std::vector<SynthRecord> explainer;
    SynthStats stats;
};

namespace detail {

inline std::string toolmaker_target(const Table& table, const std::vector<std::string>& def_sources,
                                    const std::string& program) {
    std::string out = std::string(table_variable) + " = " + serialize_canonical(table) + "\n\n";
    for (const auto& src : def_sources) out += src + "\n\n";
    return out + program + "\n\nprint(solution(" + std::string(table_variable) + "))\n";
}

/// Re-runs a tool-maker target from scratch and scores it.
inline bool verify_toolmaker_target(const std::string& target, const Record& record, const Table& formatted,
                                    const EvalConfig& config) {
    try {
        auto parsed = parse_toolmaker_output(target);
        auto plan = prepare_plan(linearize_program(parsed.program), parsed.defs, config.run.registry).plan;
        if (has_errors(validate_plan(plan, config.run.registry))) return false;
        auto outcome = execute_plan(plan, formatted, config.run.registry);
        return outcome.executable &&
               score(outcome.answer, record.gold, record.task, config.labels.find(record.dataset), config.tolerance);
    } catch (const Error&) {
        return false;
    }
}

} // namespace detail

/// Teacher runs with the gold answer in the prompt; only verified-correct
/// records survive, tools are consolidated across the kept corpus, and the
/// three module streams are emitted in record-id order.
inline SynthResult synthesize(const std::vector<Record>& records, Gateway& gateway, const EvalConfig& config,
                              std::size_t min_count = 2) {
    SynthResult out;
    auto& stats = out.stats;
    stats.records = records.size();

    std::vector<TartRun> runs(records.size());
    parallel_for(records.size(), config.parallelism, [&](std::size_t i) {
        runs[i] = run_toolmaker(records[i], config.run, gateway, std::string_view(records[i].gold));
    });

    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return records[a].id < records[b].id; });

    std::vector<std::size_t> kept;
    std::vector<ToolDef> corpus;
    for (std::size_t i : order) {
        const auto& run = runs[i];
        if (run.response) ++stats.generated;
        if (run.plan) ++stats.parsed;
        if (run.outcome.executable) ++stats.executable;
        const bool ok = run.outcome.executable &&
                        score(run.outcome.answer, records[i].gold, records[i].task,
                              config.labels.find(records[i].dataset), config.tolerance);
        if (!ok) {
            ++stats.dropped_at_verification;
            continue;
        }
        ++stats.correct;
        kept.push_back(i);
        corpus.insert(corpus.end(), run.parsed->defs.begin(), run.parsed->defs.end());
    }

    auto tools = consolidate_tools(corpus, min_count);
    stats.tools_generated = corpus.size();
    stats.tools_retained = tools.defs.size();
    stats.tools_removed = tools.removed;
    stats.alias_map = tools.alias_map;
    std::map<std::string, const ToolDef*> retained;
    for (const auto& d : tools.defs) retained.emplace(d.name, &d);

    for (std::size_t i : kept) {
        const Record& rec = records[i];
        const TartRun& run = runs[i];
        out.formatter.push_back({"formatter",
                                 build_formatter_prompt(rec.table, rec.query, {}, SIZE_MAX).user,
                                 serialize_canonical(run.formatted), rec.id, true});

        // calls to this record's own generated defs, under their consolidated names
        std::set<std::string> defined;
        for (const auto& d : run.parsed->defs) defined.insert(d.name);
        std::map<std::string, std::string> renames;
        std::vector<std::string> used;
        bool abstracted_away = false;
        for (const auto& step : linearize_program(run.parsed->program).steps) {
            if (!defined.count(step.tool)) continue;
            const std::string canonical = canonical_tool_name(tools.alias_map, step.tool);
            if (canonical != step.tool) renames[step.tool] = canonical;
            if (!retained.count(canonical)) abstracted_away = true;
            else if (std::find(used.begin(), used.end(), canonical) == used.end()) used.push_back(canonical);
        }
        if (abstracted_away) {
            ++stats.dropped_by_abstraction;
            continue;
        }
        std::sort(used.begin(), used.end());
        std::vector<std::string> sources;
        for (const auto& name : used) {
            std::map<std::string, std::string> header_rename;
            for (const auto& [from, to] : tools.alias_map)
                if (to == name) header_rename[from] = to;
            sources.push_back(rename_calls(retained.at(name)->source_text, header_rename));
        }
        const std::string program = rename_calls(run.parsed->program, renames);
        const std::string target = detail::toolmaker_target(run.formatted, sources, program);
        if (!detail::verify_toolmaker_target(target, rec, run.formatted, config)) {
            ++stats.dropped_at_closure;
            continue;
        }
        out.toolmaker.push_back({"toolmaker",
                                 build_toolmaker_prompt(run.formatted, rec.query, {}, SIZE_MAX).user, target,
                                 rec.id, true});

        Record shown = rec;
        shown.table = run.formatted;
        try {
            const auto bundle = build_explainer_prompt(program, shown, config.run.fewshots.get(PromptKind::explainer),
                                                       config.run.token_budget);
            const std::string text = gateway.complete(bundle);
            const auto expl = parse_explanation(text);
            if (has_errors(validate_refs(expl, *run.plan))) throw MalformedRef(0, "references do not match the plan");
            out.explainer.push_back({"explainer", build_explainer_prompt(program, shown, {}, SIZE_MAX).user,
                                     serialize_explanation(expl), rec.id, true});
        } catch (const Error&) {
            ++stats.dropped_bad_explanation;
        }
    }
    stats.formatter = out.formatter.size();
    stats.toolmaker = out.toolmaker.size();
    stats.explainer = out.explainer.size();
    return out;
}

// ---------------------------------------------------------------------------
// Tool usage analytics
// ---------------------------------------------------------------------------

struct ToolStats {
    std::size_t total_calls = 0;
    std::map<std::string, std::size_t> frequencies;
    std::vector<std::pair<std::string, std::size_t>> top_k;
    std::map<std::string, Decimal> category_percent;  ///< share of calls, one decimal
    std::optional<Decimal> jaccard;                   ///< |A n B| / |A u B| over distinct names
    std::optional<Decimal> reuse_fraction;            ///< |A n B| / |B|, B = OOD set

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["total_calls"] = total_calls;
        j["frequencies"] = nlohmann::ordered_json::object();
        for (const auto& [name, n] : frequencies) j["frequencies"][name] = n;
        j["top_k"] = nlohmann::ordered_json::array();
        for (const auto& [name, n] : top_k) j["top_k"].push_back({{"tool", name}, {"calls", n}});
        j["category_percent"] = nlohmann::ordered_json::object();
        for (auto c : {ToolCategory::table_preprocess, ToolCategory::numerical, ToolCategory::logical,
                       ToolCategory::higher_level}) {
            auto it = category_percent.find(to_string(c));
            j["category_percent"][to_string(c)] = it == category_percent.end() ? 0.0 : it->second.to_double();
        }
        if (auto it = category_percent.find("unknown"); it != category_percent.end())
            j["category_percent"]["unknown"] = it->second.to_double();
        j["overlap"] = nlohmann::ordered_json::object();
        j["overlap"]["jaccard"] = jaccard ? nlohmann::ordered_json(jaccard->to_double()) : nlohmann::ordered_json();
        j["overlap"]["reuse_fraction"] =
            reuse_fraction ? nlohmann::ordered_json(reuse_fraction->to_double()) : nlohmann::ordered_json();
        return j;
    }
};

namespace detail {

inline std::set<std::string> tool_set(const std::vector<RunOutcome>& outcomes) {
    std::set<std::string> out;
    for (const auto& o : outcomes)
        for (const auto& t : o.trace) out.insert(t.tool);
    return out;
}

} // namespace detail

inline ToolStats tool_stats(const std::vector<RunOutcome>& outcomes, const Registry& registry, std::size_t k = 10,
                            const std::vector<RunOutcome>* ood = nullptr) {
    ToolStats s;
    std::map<std::string, std::size_t> by_category;
    for (const auto& o : outcomes)
        for (const auto& t : o.trace) {
            ++s.frequencies[t.tool];
            ++s.total_calls;
            const ToolSpec* spec = nullptr;
            if (auto canonical = registry.canonical_name(t.tool)) spec = registry.find(*canonical);
            ++by_category[spec ? to_string(spec->category) : "unknown"];
        }
    for (const auto& [cat, n] : by_category) s.category_percent[cat] = percent(n, s.total_calls);

    s.top_k.assign(s.frequencies.begin(), s.frequencies.end());
    std::stable_sort(s.top_k.begin(), s.top_k.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (s.top_k.size() > k) s.top_k.resize(k);

    if (ood) {
        const auto a = detail::tool_set(outcomes);
        const auto b = detail::tool_set(*ood);
        std::size_t common = 0;
        for (const auto& name : b) common += a.count(name);
        const std::size_t uni = a.size() + b.size() - common;
        s.jaccard = uni == 0 ? Decimal(1) : (Decimal(static_cast<long long>(common)) /
                                             Decimal(static_cast<long long>(uni))).round(4);
        if (!b.empty())
            s.reuse_fraction = (Decimal(static_cast<long long>(common)) / Decimal(static_cast<long long>(b.size()))).round(4);
    }
    return s;
}

/// Outcomes from a directory of per-record trace files written by `eval`.
inline std::vector<RunOutcome> load_trace_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<RunOutcome> out;
    for (const auto& f : files) {
        std::ifstream in(f);
        try {
            auto j = nlohmann::json::parse(in);
            out.push_back(RunOutcome::from_json(j.contains("outcome") ? j["outcome"] : j));
        } catch (const nlohmann::json::exception& e) {
            throw Error("bad trace file " + f.string() + ": " + e.what());
        }
    }
    return out;
}

} // namespace tabrex
