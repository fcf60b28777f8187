#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabrex/error.hpp"
#include "tabrex/table.hpp"

namespace tabrex {

enum class Task { tqa, tfv };

inline const char* to_string(Task t) { return t == Task::tqa ? "tqa" : "tfv"; }

inline std::optional<Task> task_from_string(std::string_view s) {
    if (s == "tqa") return Task::tqa;
    if (s == "tfv") return Task::tfv;
    return std::nullopt;
}

struct Record {
    std::string id;
    Task task = Task::tqa;
    std::string dataset;
    std::string query;
    Table table;
    std::string gold;
    std::optional<std::string> context_text;
};

namespace detail {

inline const nlohmann::json& required_field(const nlohmann::json& obj, const char* field, std::size_t line) {
    auto it = obj.find(field);
    if (it == obj.end()) throw SchemaError(line, field, "missing");
    return *it;
}

inline std::string required_string(const nlohmann::json& obj, const char* field, std::size_t line) {
    const auto& v = required_field(obj, field, line);
    if (!v.is_string()) throw SchemaError(line, field, "expected a string");
    std::string s = v.get<std::string>();
    if (strings::trim(s).empty()) throw SchemaError(line, field, "empty");
    return s;
}

} // namespace detail

/// One JSONL line: {id, task, dataset, query, table, gold[, caption,
/// context_text]}; `table` is an array of rows, headers first.
inline Record parse_record(std::string_view line_text, std::size_t line_no) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(line_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(line_no, "<line>", e.what());
    }
    if (!obj.is_object()) throw SchemaError(line_no, "<line>", "expected a JSON object");

    Record r;
    r.id = detail::required_string(obj, "id", line_no);
    auto task = task_from_string(detail::required_string(obj, "task", line_no));
    if (!task) throw SchemaError(line_no, "task", "expected tqa or tfv");
    r.task = *task;
    r.dataset = detail::required_string(obj, "dataset", line_no);
    r.query = detail::required_string(obj, "query", line_no);
    r.gold = detail::required_string(obj, "gold", line_no);

    const auto& table = detail::required_field(obj, "table", line_no);
    if (!table.is_array() || table.empty()) throw SchemaError(line_no, "table", "expected a non-empty array of rows");
    try {
        r.table = parse_table(table.dump(), TableFormat::json_rows);
    } catch (const Error& e) {
        throw SchemaError(line_no, "table", e.what());
    }
    if (auto it = obj.find("caption"); it != obj.end() && it->is_string())
        r.table = with_caption(r.table, it->get<std::string>());
    if (auto it = obj.find("context_text"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) throw SchemaError(line_no, "context_text", "expected a string");
        r.context_text = it->get<std::string>();
    }
    return r;
}

inline std::vector<Record> load_records_text(std::string_view text) {
    std::vector<Record> out;
    std::size_t line_no = 0;
    for (const auto& line : strings::split_lines(text)) {
        ++line_no;
        if (strings::trim(line).empty()) continue;
        out.push_back(parse_record(line, line_no));
    }
    return out;
}

inline std::vector<Record> load_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open records file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_records_text(text);
}

} // namespace tabrex
