#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabrex/error.hpp"
#include "tabrex/hash.hpp"
#include "tabrex/plan.hpp"
#include "tabrex/pysrc.hpp"
#include "tabrex/record.hpp"
#include "tabrex/table.hpp"
#include "tabrex/toolkit.hpp"

namespace tabrex {

// ---------------------------------------------------------------------------
// Prompt bundles
// ---------------------------------------------------------------------------

enum class PromptKind { formatter, toolmaker, explainer, cot, directqa };

inline constexpr std::array<PromptKind, 5> all_prompt_kinds = {PromptKind::formatter, PromptKind::toolmaker,
                                                              PromptKind::explainer, PromptKind::cot,
                                                              PromptKind::directqa};

inline const char* to_string(PromptKind k) {
    switch (k) {
    case PromptKind::formatter: return "formatter";
    case PromptKind::toolmaker: return "toolmaker";
    case PromptKind::explainer: return "explainer";
    case PromptKind::cot: return "cot";
    case PromptKind::directqa: return "directqa";
    }
    return "?";
}

inline std::optional<PromptKind> prompt_kind_from_string(std::string_view s) {
    for (auto k : all_prompt_kinds)
        if (s == to_string(k)) return k;
    return std::nullopt;
}

struct FewShot {
    std::string input;
    std::string output;
    friend bool operator==(const FewShot&, const FewShot&) = default;
};

struct PromptBundle {
    PromptKind kind = PromptKind::cot;
    std::string system;
    std::vector<FewShot> fewshots;
    std::string user;

    /// Stable text form; also the cache key material.
    std::string serialize() const {
        nlohmann::ordered_json j;
        j["kind"] = to_string(kind);
        j["system"] = system;
        j["fewshots"] = nlohmann::ordered_json::array();
        for (const auto& f : fewshots) j["fewshots"].push_back({{"input", f.input}, {"output", f.output}});
        j["user"] = user;
        return j.dump();
    }

    nlohmann::ordered_json messages() const {
        auto msgs = nlohmann::ordered_json::array();
        msgs.push_back({{"role", "system"}, {"content", system}});
        for (const auto& f : fewshots) {
            msgs.push_back({{"role", "user"}, {"content", f.input}});
            msgs.push_back({{"role", "assistant"}, {"content", f.output}});
        }
        msgs.push_back({{"role", "user"}, {"content", user}});
        return msgs;
    }
};

inline constexpr std::string_view prompt_separator = "------";

/// Single-text view of a bundle, laid out like the published prompts:
/// instructions, then each worked example, then the new problem.
inline std::string render_prompt_text(const PromptBundle& b) {
    std::string out = b.system + "\n" + std::string(prompt_separator) + "\n";
    for (const auto& f : b.fewshots) out += f.input + "\n" + f.output + "\n" + std::string(prompt_separator) + "\n";
    return out + b.user;
}

inline std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

inline constexpr std::size_t default_token_budget = 8192;

inline void check_budget(const PromptBundle& b, std::size_t budget) {
    const std::size_t n = estimate_tokens(render_prompt_text(b));
    if (n > budget) throw PromptTooLong(n, budget);
}

// ---------------------------------------------------------------------------
// Few-shot library
// ---------------------------------------------------------------------------

/// Worked examples per prompt kind, read from `<dir>/<kind>.json`:
/// {"version": "v1", "kind": "...", "examples": [{"input", "output"}, ...]}.
class FewShotLibrary {
public:
    FewShotLibrary() = default;

    static FewShotLibrary load(const std::filesystem::path& dir) {
        FewShotLibrary lib;
        for (auto kind : all_prompt_kinds) {
            const auto path = dir / (std::string(to_string(kind)) + ".json");
            if (!std::filesystem::exists(path)) continue;
            std::ifstream in(path);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(in);
            } catch (const nlohmann::json::exception& e) {
                throw Error("bad few-shot file " + path.string() + ": " + e.what());
            }
            for (const auto& ex : j.at("examples"))
                lib.shots_[kind].push_back({ex.at("input").get<std::string>(), ex.at("output").get<std::string>()});
        }
        return lib;
    }

    const std::vector<FewShot>& get(PromptKind kind) const {
        static const std::vector<FewShot> none;
        auto it = shots_.find(kind);
        return it == shots_.end() ? none : it->second;
    }

    void set(PromptKind kind, std::vector<FewShot> shots) { shots_[kind] = std::move(shots); }

private:
    std::map<PromptKind, std::vector<FewShot>> shots_;
};

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

namespace prompts {

inline constexpr std::string_view toolmaker_requirements =
    "Task Description: Given a table and a question, the task is to generate a python program to answer the "
    "question.\n"
    "Requirements:\n"
    "1. First define some functions to be used in the program.\n"
    "2. Try to reuse the functions defined in the previous problems if possible.\n"
    "3. When defining a new function, make sure this function is general enough to be used in other problems.\n"
    "4. Define a function called solution(table_data) that takes the table data as input and returns the answer to "
    "the question.";

inline constexpr std::string_view toolmaker_scaffold =
    "'''\n"
    "Table: <Table Content>\n"
    "Question: <Question>\n"
    "Answer: <Answer>\n"
    "'''\n"
    "table_data = <table data array>\n"
    "\n"
    "#FUNCTION1 Description\n"
    "def FUNCTION1():\n"
    "    <Function Body>\n"
    "\n"
    "#FUNCTION2 Description\n"
    "def FUNCTION2():\n"
    "    <Function Body>\n"
    "...\n"
    "\n"
    "def solution(table_data):\n"
    "    <Solution Body>\n"
    "    return answer\n"
    "\n"
    "print(solution(table_data))";

inline constexpr std::string_view explainer_requirements =
    "Task: Transform Python code used for a table question answering task into an easily understandable "
    "explanation in natural language embedded with function calls.\n"
    "Follow these requirements:\n"
    "1. The explanation should be the natural language combined with bracketed segments <<< >>> for code.\n"
    "2. The code segments in the brackets <<< >>> should indicate the line number of the code, with the format: "
    "###<line number>.\n"
    "3. Multiple lines of codes are separated with ';;;' in the brackets <<< >>>.";

inline constexpr std::string_view formatter_instructions =
    "Task: Clean a table so that questions about it can be answered by a program.\n"
    "Requirements:\n"
    "1. Remove footnote marks, currency symbols and thousands separators from numeric cells.\n"
    "2. Write dates as YYYY-MM-DD.\n"
    "3. Give every column a unique, non-empty header.\n"
    "4. Keep the number of rows and columns unchanged.\n"
    "5. Reply with the cleaned table only, as a nested array literal whose first row is the header row.";

inline constexpr std::string_view cot_instructions =
    "Task: Answer the question about the table. Reason step by step, then give the final answer on the last line "
    "in the form \"Answer: <answer>\". If the question is a claim, answer yes when the table supports it and no "
    "otherwise.";

inline constexpr std::string_view directqa_instructions =
    "Task: Answer the question about the table. Reply with the answer only. If the question is a claim, answer yes "
    "when the table supports it and no otherwise.";

inline std::string system_for(PromptKind kind) {
    switch (kind) {
    case PromptKind::formatter: return std::string(formatter_instructions);
    case PromptKind::toolmaker:
        return std::string(toolmaker_requirements) + "\n" + std::string(prompt_separator) + "\n" +
               std::string(toolmaker_scaffold);
    case PromptKind::explainer: return std::string(explainer_requirements);
    case PromptKind::cot: return std::string(cot_instructions);
    case PromptKind::directqa: return std::string(directqa_instructions);
    }
    return {};
}

inline std::optional<PromptKind> kind_of_system(std::string_view system) {
    for (auto k : all_prompt_kinds)
        if (system_for(k) == system) return k;
    return std::nullopt;
}

inline std::string table_content(const Table& table) {
    std::string out;
    if (!table.caption().empty()) out += table.caption() + "\n";
    return out + render_markdown(table);
}

inline std::string problem_block(const Table& table, std::string_view query, std::optional<std::string_view> answer,
                                 const std::optional<std::string>& context = std::nullopt) {
    std::string out = "'''\nTable: " + table_content(table) + "\n";
    if (context) out += "Context: " + *context + "\n";
    out += "Question: " + std::string(query) + "\n";
    if (answer) out += "Answer: " + std::string(*answer) + "\n";
    return out + "'''";
}

} // namespace prompts

inline PromptBundle build_formatter_prompt(const Table& table, std::string_view query,
                                           const std::vector<FewShot>& fewshots = {},
                                           std::size_t token_budget = default_token_budget) {
    PromptBundle b{PromptKind::formatter, prompts::system_for(PromptKind::formatter), fewshots, {}};
    b.user = "Caption: " + table.caption() + "\nQuestion: " + std::string(query) +
             "\nTable: " + serialize_canonical(table);
    check_budget(b, token_budget);
    return b;
}

/// `answer` is given when a teacher writes programs for a known label.
inline PromptBundle build_toolmaker_prompt(const Table& table, std::string_view query,
                                           const std::vector<FewShot>& fewshots = {},
                                           std::size_t token_budget = default_token_budget,
                                           std::optional<std::string_view> answer = std::nullopt) {
    if (strings::trim(query).empty()) throw std::invalid_argument("tool maker prompt needs a non-empty query");
    PromptBundle b{PromptKind::toolmaker, prompts::system_for(PromptKind::toolmaker), fewshots, {}};
    b.user = prompts::problem_block(table, query, answer) + "\n" + std::string(table_variable) + " = " +
             serialize_canonical(table);
    check_budget(b, token_budget);
    return b;
}

inline PromptBundle build_explainer_prompt(std::string_view program, const Record& record,
                                           const std::vector<FewShot>& fewshots = {},
                                           std::size_t token_budget = default_token_budget) {
    PromptBundle b{PromptKind::explainer, prompts::system_for(PromptKind::explainer), fewshots, {}};
    b.user = prompts::problem_block(record.table, record.query, std::string_view(record.gold)) + "\nPython Code:\n" +
             std::string(table_variable) + " = " + serialize_canonical(record.table) + "\n\n" +
             number_solution_lines(program) + "\nprint(solution(" + std::string(table_variable) +
             "))\n\nOutput Explanation:";
    check_budget(b, token_budget);
    return b;
}

inline PromptBundle build_cot_prompt(const Record& record, const std::vector<FewShot>& fewshots = {},
                                     std::size_t token_budget = default_token_budget) {
    PromptBundle b{PromptKind::cot, prompts::system_for(PromptKind::cot), fewshots, {}};
    b.user = prompts::problem_block(record.table, record.query, std::nullopt, record.context_text);
    check_budget(b, token_budget);
    return b;
}

inline PromptBundle build_directqa_prompt(const Record& record, const std::vector<FewShot>& fewshots = {},
                                          std::size_t token_budget = default_token_budget) {
    PromptBundle b{PromptKind::directqa, prompts::system_for(PromptKind::directqa), fewshots, {}};
    b.user = prompts::problem_block(record.table, record.query, std::nullopt, record.context_text);
    check_budget(b, token_budget);
    return b;
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

struct ToolmakerOutput {
    std::vector<ToolDef> defs;
    std::string program;  ///< source of `def solution(...)`
};

inline std::string strip_code_fences(std::string_view text) {
    std::string out;
    for (const auto& line : strings::split_lines(text)) {
        if (strings::starts_with(strings::trim(line), "```")) continue;
        out += line;
        out += '\n';
    }
    return out;
}

inline ToolmakerOutput parse_toolmaker_output(std::string_view text) {
    ToolmakerOutput out;
    bool found = false;
    for (const auto& fn : pysrc::top_level_functions(strip_code_fences(text))) {
        if (fn.name == "solution") {
            if (!found) out.program = fn.source;
            found = true;
        } else {
            out.defs.push_back(make_tool_def(fn));
        }
    }
    if (!found) throw NoSolutionFound();
    return out;
}

namespace detail {

inline std::string strip_answer_prefix(std::string_view line) {
    line = strings::trim(line);
    if (line.size() >= 7 && strings::lower(line.substr(0, 7)) == "answer:") line.remove_prefix(7);
    line = strings::trim(line);
    while (!line.empty() && line.back() == '.') line.remove_suffix(1);
    return std::string(strings::trim(line));
}

} // namespace detail

/// The last "Answer:" line, else the last non-empty line.
inline std::string extract_cot_answer(std::string_view text) {
    auto lines = strings::split_lines(text);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        auto t = strings::trim(*it);
        if (t.size() >= 7 && strings::lower(t.substr(0, 7)) == "answer:") return detail::strip_answer_prefix(t);
    }
    for (auto it = lines.rbegin(); it != lines.rend(); ++it)
        if (!strings::trim(*it).empty()) return detail::strip_answer_prefix(*it);
    return {};
}

/// The first non-empty line.
inline std::string extract_direct_answer(std::string_view text) {
    for (const auto& line : strings::split_lines(text))
        if (!strings::trim(line).empty()) return detail::strip_answer_prefix(line);
    return {};
}

// ---------------------------------------------------------------------------
// Gateways
// ---------------------------------------------------------------------------

class GatewayError : public Error {
public:
    enum class Kind { transport, http_status, timeout, malformed_response };

    GatewayError(Kind kind, const std::string& message)
        : Error(std::string("gateway ") + kind_name(kind) + ": " + message), kind_(kind) {}

    Kind kind() const { return kind_; }

    static const char* kind_name(Kind k) {
        switch (k) {
        case Kind::transport: return "transport";
        case Kind::http_status: return "http_status";
        case Kind::timeout: return "timeout";
        case Kind::malformed_response: return "malformed_response";
        }
        return "?";
    }

private:
    Kind kind_;
};

struct GatewayConfig {
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model_name = "teacher";
    double temperature = 0.0;
    std::size_t max_retries = 3;
    std::string cache_dir;
    std::size_t in_flight_limit = 4;
    std::string api_key;
    std::size_t timeout_seconds = 60;
    std::size_t backoff_ms = 200;

    static GatewayConfig from_json(const nlohmann::json& j) {
        GatewayConfig c;
        c.base_url = j.value("base_url", c.base_url);
        c.model_name = j.value("model_name", c.model_name);
        c.temperature = j.value("temperature", c.temperature);
        c.max_retries = j.value("max_retries", c.max_retries);
        c.cache_dir = j.value("cache_dir", c.cache_dir);
        c.in_flight_limit = std::max<std::size_t>(1, j.value("in_flight_limit", c.in_flight_limit));
        c.api_key = j.value("api_key", c.api_key);
        c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
        c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
        return c;
    }

    /// TABREX_BASE_URL, TABREX_API_KEY and TABREX_CACHE_DIR win over the file.
    void apply_env() {
        if (const char* v = std::getenv("TABREX_BASE_URL"); v && *v) base_url = v;
        if (const char* v = std::getenv("TABREX_API_KEY"); v && *v) api_key = v;
        if (const char* v = std::getenv("TABREX_CACHE_DIR"); v && *v) cache_dir = v;
    }
};

class Gateway {
public:
    virtual ~Gateway() = default;
    virtual std::string complete(const PromptBundle& bundle) = 0;
};

struct HttpRequest {
    std::string url;  ///< full endpoint URL
    std::string body;
    std::string api_key;
    std::size_t timeout_seconds = 60;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Performs one POST. Throws GatewayError(transport | timeout) when no
/// response arrives.
using Transport = std::function<HttpResponse(const HttpRequest&)>;

namespace detail {

class InFlightLimiter {
public:
    explicit InFlightLimiter(std::size_t limit) : limit_(std::max<std::size_t>(1, limit)) {}

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return active_ < limit_; });
        ++active_;
        peak_ = std::max(peak_, active_);
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            --active_;
        }
        cv_.notify_one();
    }
    std::size_t peak() const {
        std::lock_guard lock(mu_);
        return peak_;
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::size_t limit_;
    std::size_t active_ = 0;
    std::size_t peak_ = 0;
};

} // namespace detail

/// OpenAI-style chat completions over a pluggable transport.
class ChatCompletionGateway : public Gateway {
public:
    ChatCompletionGateway(GatewayConfig config, Transport transport)
        : config_(std::move(config)), transport_(std::move(transport)), limiter_(config_.in_flight_limit) {}

    std::string complete(const PromptBundle& bundle) override {
        nlohmann::ordered_json body;
        body["model"] = config_.model_name;
        body["messages"] = bundle.messages();
        body["temperature"] = config_.temperature;
        HttpRequest req{endpoint(), body.dump(), config_.api_key, config_.timeout_seconds};

        limiter_.acquire();
        struct Release {
            detail::InFlightLimiter& l;
            ~Release() { l.release(); }
        } release{limiter_};

        for (std::size_t attempt = 0;; ++attempt) {
            const bool last = attempt >= config_.max_retries;
            HttpResponse resp;
            try {
                ++network_calls_;
                resp = transport_(req);
            } catch (const GatewayError& e) {
                if (last || e.kind() == GatewayError::Kind::http_status ||
                    e.kind() == GatewayError::Kind::malformed_response)
                    throw;
                backoff(attempt);
                continue;
            }
            if (resp.status >= 500) {
                if (last)
                    throw GatewayError(GatewayError::Kind::http_status,
                                       "status " + std::to_string(resp.status) + " after " +
                                           std::to_string(attempt + 1) + " attempt(s)");
                backoff(attempt);
                continue;
            }
            if (resp.status != 200)
                throw GatewayError(GatewayError::Kind::http_status, "status " + std::to_string(resp.status));
            return parse_content(resp.body);
        }
    }

    std::size_t network_calls() const { return network_calls_; }
    std::size_t peak_in_flight() const { return limiter_.peak(); }
    const GatewayConfig& config() const { return config_; }

    static std::string parse_content(const std::string& body) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error&) {
            throw GatewayError(GatewayError::Kind::malformed_response, "response body is not JSON");
        }
        try {
            const auto& content = j.at("choices").at(0).at("message").at("content");
            if (!content.is_string()) throw GatewayError(GatewayError::Kind::malformed_response, "content is not a string");
            return content.get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw GatewayError(GatewayError::Kind::malformed_response, "no choices[0].message.content");
        }
    }

private:
    std::string endpoint() const {
        std::string url = config_.base_url;
        while (!url.empty() && url.back() == '/') url.pop_back();
        return url + "/chat/completions";
    }

    void backoff(std::size_t attempt) const {
        if (config_.backoff_ms == 0) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << std::min<std::size_t>(attempt, 10)));
    }

    GatewayConfig config_;
    Transport transport_;
    detail::InFlightLimiter limiter_;
    std::atomic<std::size_t> network_calls_{0};
};

inline std::string cache_key(std::string_view model_name, const PromptBundle& bundle) {
    return sha256_hex(std::string(model_name) + "\n" + bundle.serialize());
}

/// Disk cache in front of another gateway. One file per key; writes go
/// through a temp file and rename so readers never see partial entries.
class CachingGateway : public Gateway {
public:
    CachingGateway(Gateway& inner, std::filesystem::path dir, std::string model_name)
        : inner_(inner), dir_(std::move(dir)), model_name_(std::move(model_name)) {
        std::filesystem::create_directories(dir_);
    }

    std::string complete(const PromptBundle& bundle) override {
        const std::string key = cache_key(model_name_, bundle);
        const auto path = dir_ / (key + ".json");
        if (auto hit = read(path)) {
            ++hits_;
            return *hit;
        }
        std::string response = inner_.complete(bundle);
        ++misses_;
        write(path, key, bundle.kind, response);
        return response;
    }

    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

private:
    static std::optional<std::string> read(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) return std::nullopt;
        try {
            auto j = nlohmann::json::parse(in);
            return j.at("response").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
    }

    void write(const std::filesystem::path& path, const std::string& key, PromptKind kind, const std::string& response) {
        nlohmann::ordered_json j;
        j["key"] = key;
        j["model"] = model_name_;
        j["kind"] = to_string(kind);
        j["response"] = response;
        std::lock_guard lock(write_mu_);
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << j.dump(2) << "\n";
        }
        std::filesystem::rename(tmp, path);
    }

    Gateway& inner_;
    std::filesystem::path dir_;
    std::string model_name_;
    std::mutex write_mu_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

/// Canned responses keyed by (prompt kind, question). Lines of the source
/// JSONL look like {"kind": "toolmaker", "question": "...", "response": "..."}.
class ReplayTable {
public:
    static ReplayTable load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open replay file " + path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return parse(text);
    }

    static ReplayTable parse(std::string_view text) {
        ReplayTable t;
        std::size_t line_no = 0;
        for (const auto& line : strings::split_lines(text)) {
            ++line_no;
            if (strings::trim(line).empty()) continue;
            try {
                auto j = nlohmann::json::parse(line);
                auto kind = prompt_kind_from_string(j.at("kind").get<std::string>());
                if (!kind) throw SchemaError(line_no, "kind", "unknown prompt kind");
                t.entries_[{*kind, j.at("question").get<std::string>()}] = j.at("response").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw SchemaError(line_no, "<line>", e.what());
            }
        }
        return t;
    }

    static std::optional<std::string> question_of(std::string_view user) {
        std::optional<std::string> found;
        for (const auto& line : strings::split_lines(user))
            if (strings::starts_with(line, "Question: ")) found = line.substr(10);
        return found;
    }

    std::optional<std::string> respond(PromptKind kind, std::string_view user) const {
        auto q = question_of(user);
        if (!q) return std::nullopt;
        auto it = entries_.find({kind, *q});
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    /// Routes a raw chat request (system text identifies the prompt kind).
    std::optional<std::string> respond(std::string_view system, std::string_view user) const {
        auto kind = prompts::kind_of_system(system);
        if (!kind) return std::nullopt;
        return respond(*kind, user);
    }

    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::pair<PromptKind, std::string>, std::string> entries_;
};

/// Serves a ReplayTable in-process; unknown prompts fail like a 404.
class ReplayGateway : public Gateway {
public:
    explicit ReplayGateway(ReplayTable table) : table_(std::move(table)) {}

    std::string complete(const PromptBundle& bundle) override {
        ++calls_;
        if (auto r = table_.respond(bundle.kind, bundle.user)) return *r;
        throw GatewayError(GatewayError::Kind::http_status, std::string("status 404: no replay entry for ") +
                                                                to_string(bundle.kind) + " prompt");
    }

    std::size_t network_calls() const { return calls_; }

private:
    ReplayTable table_;
    std::atomic<std::size_t> calls_{0};
};

} // namespace tabrex
