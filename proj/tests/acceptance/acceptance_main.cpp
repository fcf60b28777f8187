// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
// usage: tabrex_acceptance <path-to-tabrex-cli> <fixture-dir>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <thread>

#include "generators.hpp"
#include "oracle.hpp"
#include "support.hpp"
#include "tabrex/http_transport.hpp"
#include "tabrex/tabrex.hpp"

using namespace tabrex;
using testing_support::read_file;
using testing_support::read_json;
using testing_support::scratch_dir;
using testing_support::test_fixture;
using testing_support::write_file;
namespace fs = std::filesystem;

namespace {

fs::path g_cli;
fs::path g_fixtures;

// Thrown by `require`; carries the reason a criterion failed.
struct CheckFailed {
    std::string why;
};

void require(bool ok, const std::string& why) {
    if (!ok) throw CheckFailed{why};
}

Decimal dec(const char* s) { return Decimal::parse(s).value(); }

Decimal average_of(std::initializer_list<const char*> xs) {
    std::vector<Decimal> v;
    for (auto x : xs) v.push_back(dec(x));
    return macro_average(v);
}

// ---------------------------------------------------------------------------

void metric_arithmetic() {
    std::map<std::string, DatasetMetrics> per;
    const char* exe[] = {"76.6", "79.2", "62.4", "94.1", "71.8"};
    const char* acc[] = {"84.7", "67.8", "55.9", "94.4", "40.0"};
    const char* names[] = {"d1", "d2", "d3", "d4", "d5"};
    for (int i = 0; i < 5; ++i) per[names[i]] = {1, dec(acc[i]), dec(exe[i])};
    const Metrics m = aggregate_metrics("tart", per);
    require(m.execution_rate == dec("76.8"), "execution rate " + m.execution_rate.to_string() + " != 76.8");
    require(m.accuracy == dec("68.6"), "accuracy " + m.accuracy.to_string() + " != 68.6");
    const Decimal tart = average_of({"71.3", "69.1", "47.8", "93.1", "30.9"});
    require(tart == dec("62.4"), "average " + tart.to_string() + " != 62.4");
    const Decimal gain = relative_improvement(tart, dec("50.6"));
    require(gain == dec("23.3"), "improvement " + gain.to_string() + " != 23.3");
    const Decimal ratio = relative_ratio(dec("62.4"), dec("69.3"));
    require(ratio == dec("90.0"), "ratio " + ratio.to_string() + " != 90.0");
}

void executor_oracle() {
    gen::Rng rng(20240601);
    const Registry reg = builtin_registry();
    std::size_t ok_cases = 0, failing = 0;
    for (int i = 0; i < 1200; ++i) {
        const oracle::Case c = oracle::random_case(rng);
        require(c.table.row_count() <= 6 && c.table.column_count() <= 6 && c.steps.size() <= 8, "generator out of bounds");
        const std::string text = c.plan_text();
        const oracle::Result want = oracle::run(c);
        const RunOutcome got = execute_plan(parse_plan(text), c.table, reg);
        const std::string where = "case " + std::to_string(i) + ":\n" + text;
        require(got.executable == want.ok, "executable differs on " + where);
        if (want.ok) {
            require(got.answer == want.answer, "answer " + got.answer + " != " + want.answer + " on " + where);
            ++ok_cases;
        } else {
            require(got.error && got.error->kind == want.error_kind && got.error->step == want.error_step,
                    "error differs on " + where);
            ++failing;
        }
    }
    require(ok_cases > 0 && failing > 0, "generator did not exercise both outcomes");
}

void formatter_properties() {
    gen::Rng rng(500);
    for (int i = 0; i < 500; ++i) {
        const Table t = gen::noisy_table(rng);
        const auto [once, report] = format_table(t, "", FormatMode::rules);
        require(once.row_count() == t.row_count() && once.column_count() == t.column_count(),
                "shape changed: " + serialize_canonical(t));
        const auto [twice, again] = format_table(once, "", FormatMode::rules);
        require(twice == once && again.unchanged(), "not idempotent: " + serialize_canonical(t));
    }
    std::size_t ambiguous = 0;
    for (int y : {2019, 2020})
        for (int m = 1; m <= 12; ++m)
            for (int d = 1; d <= gen::days_in_month(y, m); ++d)
                for (int f = 0; f < 5; ++f) {
                    const std::string text = gen::date_text({y, m, d}, f);
                    const auto got = detail::parse_date_text(text);
                    if ((f == 0 || f == 1) && d <= 12 && m <= 12 && d != m) {
                        require(got.kind == detail::DateReading::ambiguous, text + " not flagged ambiguous");
                        ++ambiguous;
                    } else {
                        require(got.kind == detail::DateReading::date && format_date(got.value) == gen::iso({y, m, d}),
                                text + " misread");
                    }
                }
    require(ambiguous > 0, "no ambiguous dates generated");
    const Table slash("", {"d"}, {{Text{"01/02/2015"}}});
    const auto [kept, rep] = format_table(slash, "", FormatMode::rules);
    require(kept.at(0, 0) == CellValue(Text{"01/02/2015"}) && rep.ambiguous_dates.size() == 1,
            "ambiguous date was not rejected");
}

void plan_round_trip() {
    gen::Rng rng(4242);
    for (int i = 0; i < 200; ++i) {
        const Plan p = gen::random_plan(rng);
        const std::string text = render_plan(p);
        require(parse_plan(text) == p, "round trip failed:\n" + text);
    }
    const auto reasons = read_json(test_fixture("plans/negative/reasons.json"));
    require(reasons.size() == 10, "negative fixture set is not 10 programs");
    for (const auto& [file, reason] : reasons.items()) {
        try {
            linearize_program(read_file(test_fixture("plans/negative/" + file)));
            require(false, file + " was linearized");
        } catch (const NonLinearizable& e) {
            require(e.reason() == reason.get<std::string>(), file + ": reason " + e.reason());
        }
    }
}

void dedup_abstraction() {
    std::vector<ToolDef> corpus;
    auto add = [&](const std::string& src) { corpus.push_back(make_tool_def(src)); };
    add("def add(a, b):\n    return a + b\n");
    add("def sum(x, y):\n    return x + y\n");
    add("def add(first, second):\n    return first + second\n");
    add("def subtract(a, b):\n    return a - b\n");
    add("def minus(p, q):\n    return p - q\n");
    add("def multiply(a, b):\n    return a * b\n");
    add("def times(u, v):\n\n    return u * v\n");
    add("def mul(m, n):\n    return m * n\n");
    add("def get_last(xs):\n    return xs[-1]\n");
    add("def last_item(items):\n    return items[-1]\n");
    add("def count_rows(t):\n    return len(t) - 1\n");
    add("def countRows(table):\n    return len(table) - 1\n");
    add("def count_people_on_third_floor(t):\n    return 3\n");
    add("def parse_weird_format(s):\n    return s.split('|')[2]\n");
    add("def kite_price(t):\n    return t[2][1]\n");
    const auto out = consolidate_tools(corpus, 2);
    require(out.defs.size() == 5, std::to_string(out.defs.size()) + " canonical defs, want 5");
    std::vector<std::string> removed = out.removed;
    std::sort(removed.begin(), removed.end());
    require(removed == std::vector<std::string>{"count_people_on_third_floor", "kite_price", "parse_weird_format"},
            "singletons not removed");
    auto it = out.alias_map.find("sum");
    require(it != out.alias_map.end() && it->second == "add", "alias map lacks sum -> add");
}

void explanation_format() {
    for (std::string wire : {"First, we should get the column that ... <<<###1 ;;; ###2>>>.",
                             "Finally, we find that <<<###5>>>.",
                             "First, we should get the column that ... <<<###1 ;;; ###2>>>.\nFinally, we find that <<<###5>>>."}) {
        require(serialize_explanation(parse_explanation(wire)) == wire, "not an identity on: " + wire);
    }
    const auto cases = read_json(test_fixture("explainer/cases.json"));
    require(cases.size() == 6, "fixture suite is not 6 cases");
    for (const auto& c : cases) {
        const auto diags =
            validate_refs(parse_explanation(c["explanation"].get<std::string>()), parse_plan(c["plan"].get<std::string>()));
        std::vector<std::tuple<std::string, std::string, std::size_t>> got, want;
        for (const auto& d : diags) got.emplace_back(d.severity == Severity::error ? "error" : "warning", d.code, d.step);
        for (const auto& d : c["diagnostics"])
            want.emplace_back(d[0].get<std::string>(), d[1].get<std::string>(), d[2].get<std::size_t>());
        require(got == want, "diagnostics differ on " + c["name"].get<std::string>());
    }
}

// ---------------------------------------------------------------------------
// End-to-end through the CLI against a local chat-completions endpoint.

class ReplayServer {
public:
    explicit ReplayServer(ReplayTable table) : table_(std::move(table)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests_;
            const auto body = nlohmann::json::parse(req.body);
            const auto& messages = body.at("messages");
            const std::string system = messages.front().at("content");
            const std::string user = messages.back().at("content");
            const auto reply = table_.respond(system, user);
            if (!reply) {
                res.status = 404;
                return;
            }
            nlohmann::json out;
            out["choices"] = nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", *reply}}}}});
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        worker_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~ReplayServer() { stop(); }

    void stop() {
        if (!worker_.joinable()) return;
        server_.stop();
        worker_.join();
    }

    int port() const { return port_; }
    std::size_t requests() const { return requests_; }

private:
    ReplayTable table_;
    httplib::Server server_;
    std::thread worker_;
    std::atomic<std::size_t> requests_{0};
    int port_ = 0;
};

struct CliRun {
    int status;
    std::string err;
};

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

CliRun run_eval(const fs::path& work, const std::string& tag) {
    const fs::path err = work / (tag + ".stderr");
    const std::string cmd = quoted(g_cli) + " eval --records " + quoted(g_fixtures / "toy" / "records.jsonl") +
                            " --method tart --out " + quoted(work / (tag + "_metrics.json")) + " --config " +
                            quoted(work / "config.json") + " --traces " + quoted(work / (tag + "_traces")) + " 2> " +
                            quoted(err);
    const int status = std::system(cmd.c_str());
    return {status, fs::exists(err) ? read_file(err) : ""};
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = read_file(e.path());
    return out;
}

fs::path e2e_workdir() {
    static const fs::path dir = [] {
        const fs::path d = scratch_dir("acceptance_e2e");
        nlohmann::ordered_json cfg;
        cfg["gateway"] = {{"base_url", ""}, {"cache_dir", "cache"}, {"max_retries", 0}, {"timeout_seconds", 5}};
        cfg["label_map_dir"] = (g_fixtures / "label_maps").string();
        cfg["fewshot_dir"] = (g_fixtures / "fewshot" / "v1").string();
        write_file(d / "config.json.in", cfg.dump(2) + "\n");
        return d;
    }();
    return dir;
}

void write_config(const fs::path& work, const std::string& base_url) {
    auto cfg = nlohmann::json::parse(read_file(work / "config.json.in"));
    cfg["gateway"]["base_url"] = base_url;
    write_file(work / "config.json", cfg.dump(2) + "\n");
}

void end_to_end() {
    const fs::path work = e2e_workdir();
    const auto start = std::chrono::steady_clock::now();
    {
        ReplayServer server(ReplayTable::load((g_fixtures / "toy" / "teacher.jsonl").string()));
        write_config(work, "http://127.0.0.1:" + std::to_string(server.port()) + "/v1");
        const CliRun cold = run_eval(work, "cold");
        require(cold.status == 0, "cold eval failed: " + cold.err);
        require(server.requests() > 0, "cold eval never reached the endpoint");
    }
    const std::string golden = read_file(g_fixtures / "toy" / "golden_metrics.json");
    require(read_file(work / "cold_metrics.json") == golden, "cold metrics differ from the golden file");

    std::vector<std::string> fell_back, non_exec;
    for (const auto& [name, text] : dir_contents(work / "cold_traces")) {
        const auto j = nlohmann::json::parse(text);
        if (j["outcome"]["fallback_used"].get<bool>()) fell_back.push_back(j["id"]);
        if (!j["outcome"]["executable"].get<bool>()) non_exec.push_back(j["id"]);
    }
    const std::vector<std::string> designed = {"fq-03", "fq-04", "st-03", "tf-03", "tm-03"};
    require(fell_back == designed, "fallback_used on an unexpected record set");
    require(non_exec == designed, "non-executable on an unexpected record set");

    // endpoint gone: everything must come from the cache
    const CliRun warm = run_eval(work, "warm1");
    require(warm.status == 0, "warm eval failed: " + warm.err);
    require(warm.err.find("network_calls=0") != std::string::npos, "warm run used the network: " + warm.err);
    require(read_file(work / "warm1_metrics.json") == golden, "warm metrics differ from the golden file");
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    require(elapsed < 10.0, "took " + std::to_string(elapsed) + "s");
}

void determinism() {
    const fs::path work = e2e_workdir();
    require(fs::exists(work / "cache"), "criterion 6 did not leave a warm cache");
    const CliRun again = run_eval(work, "warm2");
    require(again.status == 0, "second warm eval failed: " + again.err);
    require(again.err.find("network_calls=0") != std::string::npos, "second warm run used the network");
    require(read_file(work / "warm1_metrics.json") == read_file(work / "warm2_metrics.json"), "metrics.json differs");
    require(dir_contents(work / "warm1_traces") == dir_contents(work / "warm2_traces"), "trace files differ");
}

struct Criterion {
    int id;
    const char* title;
    double budget_s;
    std::function<void()> check;
};

} // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: tabrex_acceptance <tabrex-cli> <fixture-dir>\n";
        return 2;
    }
    g_cli = fs::absolute(argv[1]);
    g_fixtures = fs::absolute(argv[2]);

    const std::vector<Criterion> criteria = {
        {1, "metric arithmetic", 1, metric_arithmetic},
        {2, "executor oracle equivalence", 30, executor_oracle},
        {3, "formatter idempotence and dates", 10, formatter_properties},
        {4, "plan round trip and negative programs", 10, plan_round_trip},
        {5, "deduplication and abstraction", 5, dedup_abstraction},
        {6, "end-to-end eval with mock endpoint", 10, end_to_end},
        {7, "explanation format", 5, explanation_format},
        {8, "determinism with warm cache", 10, determinism},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::optional<std::string> why;
        try {
            c.check();
        } catch (const CheckFailed& f) {
            why = f.why;
        } catch (const std::exception& e) {
            why = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!why && secs > c.budget_s) why = "over the " + std::to_string(static_cast<int>(c.budget_s)) + "s budget";
        char timing[32];
        std::snprintf(timing, sizeof timing, "%.2fs", secs);
        std::cout << (why ? "FAIL" : "PASS") << " " << c.id << " " << c.title << " (" << timing << ")";
        if (why) std::cout << ": " << *why;
        std::cout << std::endl;
        if (why) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
