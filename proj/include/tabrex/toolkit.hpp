#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabrex/error.hpp"
#include "tabrex/hash.hpp"
#include "tabrex/pysrc.hpp"
#include "tabrex/strings.hpp"

namespace tabrex {

enum class ParamKind { table, column, row, number, string, boolean, list_number, any };

enum class ToolCategory { table_preprocess, numerical, logical, higher_level };

inline const char* to_string(ParamKind k) {
    switch (k) {
    case ParamKind::table: return "table";
    case ParamKind::column: return "column";
    case ParamKind::row: return "row";
    case ParamKind::number: return "number";
    case ParamKind::string: return "string";
    case ParamKind::boolean: return "bool";
    case ParamKind::list_number: return "list_number";
    case ParamKind::any: return "any";
    }
    return "?";
}

inline std::optional<ParamKind> param_kind_from_string(std::string_view s) {
    for (auto k : {ParamKind::table, ParamKind::column, ParamKind::row, ParamKind::number, ParamKind::string,
                   ParamKind::boolean, ParamKind::list_number, ParamKind::any})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

inline const char* to_string(ToolCategory c) {
    switch (c) {
    case ToolCategory::table_preprocess: return "table_preprocess";
    case ToolCategory::numerical: return "numerical";
    case ToolCategory::logical: return "logical";
    case ToolCategory::higher_level: return "higher_level";
    }
    return "?";
}

inline std::optional<ToolCategory> tool_category_from_string(std::string_view s) {
    for (auto c : {ToolCategory::table_preprocess, ToolCategory::numerical, ToolCategory::logical,
                   ToolCategory::higher_level})
        if (s == to_string(c)) return c;
    return std::nullopt;
}

struct ToolParam {
    std::string name;
    ParamKind kind;
    friend bool operator==(const ToolParam&, const ToolParam&) = default;
};

/// Signature of a builtin tool.
struct ToolSpec {
    std::string name;
    std::vector<ToolParam> params;
    ParamKind returns = ParamKind::any;
    ToolCategory category = ToolCategory::numerical;
    std::vector<std::string> aliases;
    friend bool operator==(const ToolSpec&, const ToolSpec&) = default;
};

// ---------------------------------------------------------------------------
// Generated tool definitions and structural fingerprints
// ---------------------------------------------------------------------------

/// A function the tool maker wrote. Its body is never executed.
struct ToolDef {
    std::string name;
    std::string source_text;
    std::size_t param_count = 0;
    std::string body_fingerprint;
    friend bool operator==(const ToolDef&, const ToolDef&) = default;
};

namespace detail {

inline bool is_open(const pysrc::Token& t) {
    return t.kind == pysrc::TokenKind::op && (t.text == "(" || t.text == "[" || t.text == "{");
}
inline bool is_close(const pysrc::Token& t) {
    return t.kind == pysrc::TokenKind::op && (t.text == ")" || t.text == "]" || t.text == "}");
}
inline bool is_assign_op(const pysrc::Token& t) {
    if (t.kind != pysrc::TokenKind::op) return false;
    static const std::set<std::string> ops = {"=", "+=", "-=", "*=", "/=", "//=", "%=", "**=", "&=", "|=", "^=", ":="};
    return ops.count(t.text) > 0;
}

/// Names a body line binds: assignment targets, for-targets (loops and
/// comprehensions), `as` targets, nested defs.
inline std::vector<std::string> bound_names(const std::vector<pysrc::Token>& toks) {
    using pysrc::TokenKind;
    std::vector<std::string> out;
    int depth = 0;
    std::size_t assign_at = toks.size();
    for (std::size_t k = 0; k < toks.size(); ++k) {
        if (is_open(toks[k])) ++depth;
        else if (is_close(toks[k])) --depth;
        else if (depth == 0 && is_assign_op(toks[k])) assign_at = k;
    }
    if (assign_at < toks.size()) {
        depth = 0;
        for (std::size_t k = 0; k < assign_at; ++k) {
            if (is_open(toks[k])) ++depth;
            else if (is_close(toks[k])) --depth;
            else if (depth == 0 && toks[k].kind == TokenKind::name && !pysrc::is_keyword(toks[k].text) &&
                     (k == 0 || toks[k - 1].text != ".") && (k + 1 >= assign_at || toks[k + 1].text != "."))
                out.push_back(toks[k].text);
        }
    }
    for (std::size_t k = 0; k < toks.size(); ++k) {
        if (toks[k].kind != TokenKind::name) continue;
        if (toks[k].text == "for") {
            for (std::size_t m = k + 1; m < toks.size() && toks[m].text != "in"; ++m)
                if (toks[m].kind == TokenKind::name && !pysrc::is_keyword(toks[m].text)) out.push_back(toks[m].text);
        } else if ((toks[k].text == "as" || toks[k].text == "def") && k + 1 < toks.size() &&
                   toks[k + 1].kind == TokenKind::name) {
            out.push_back(toks[k + 1].text);
        }
    }
    return out;
}

} // namespace detail

/// Whitespace-normalized, alpha-renamed body text. Parameters and locally
/// bound names become `_0`, `_1`, ... in order of first appearance; free
/// names (builtins, globals, attributes) are kept.
inline std::string normalized_body(const pysrc::FunctionBlock& fn) {
    using pysrc::TokenKind;
    auto lines = pysrc::logical_lines(fn.source);
    if (lines.empty()) return {};

    struct BodyLine {
        std::size_t indent;
        std::vector<pysrc::Token> tokens;
    };
    std::vector<BodyLine> body;
    {
        // A one-line def keeps its body after the signature's ':'.
        const auto& header = lines[0].tokens;
        int depth = 0;
        for (std::size_t k = 0; k < header.size(); ++k) {
            if (detail::is_open(header[k])) ++depth;
            else if (detail::is_close(header[k])) --depth;
            else if (depth == 0 && header[k].text == ":" && k > 0) {
                if (k + 1 < header.size())
                    body.push_back({lines[0].indent + 1, {header.begin() + static_cast<std::ptrdiff_t>(k + 1), header.end()}});
                break;
            }
        }
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& toks = lines[i].tokens;
        if (toks.size() == 1 && toks[0].kind == TokenKind::string) continue;  // docstring
        body.push_back({lines[i].indent, toks});
    }

    std::map<std::string, std::string> rename;
    auto bind = [&](const std::string& name) {
        if (!rename.count(name)) rename[name] = "_" + std::to_string(rename.size());
    };
    for (const auto& p : fn.params) bind(p);
    for (const auto& line : body)
        for (const auto& name : detail::bound_names(line.tokens)) bind(name);

    std::vector<std::size_t> indent_stack;
    std::string out;
    for (const auto& line : body) {
        while (!indent_stack.empty() && indent_stack.back() > line.indent) indent_stack.pop_back();
        if (indent_stack.empty() || indent_stack.back() < line.indent) indent_stack.push_back(line.indent);
        out += std::to_string(indent_stack.size() - 1);
        for (std::size_t k = 0; k < line.tokens.size(); ++k) {
            const auto& t = line.tokens[k];
            out += ' ';
            const bool attribute = k > 0 && line.tokens[k - 1].text == ".";
            if (t.kind == TokenKind::name && !attribute && rename.count(t.text)) out += rename.at(t.text);
            else if (t.kind == TokenKind::string) out += strings::join({"'", pysrc::decode_string(t.text), "'"}, "");
            else out += t.text;
        }
        out += '\n';
    }
    return out;
}

inline ToolDef make_tool_def(const pysrc::FunctionBlock& fn) {
    return ToolDef{fn.name, fn.source, fn.params.size(), sha256_hex(normalized_body(fn)).substr(0, 16)};
}

/// Builds a ToolDef from the text of one `def` block.
inline ToolDef make_tool_def(std::string_view source) {
    auto fns = pysrc::top_level_functions(source);
    if (fns.empty()) throw SyntaxError(1, "no function definition found");
    return make_tool_def(fns.front());
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Immutable tool inventory with alias and fingerprint indexes.
class Registry {
public:
    Registry() = default;

    /// `fingerprints` maps canonical tool name to reference body
    /// fingerprints. Throws std::invalid_argument when a name or alias
    /// collides.
    Registry(std::vector<ToolSpec> specs, std::map<std::string, std::vector<std::string>> fingerprints = {})
        : specs_(std::move(specs)), fingerprints_(std::move(fingerprints)) {
        std::sort(specs_.begin(), specs_.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
        for (const auto& spec : specs_) {
            add_alias(spec.name, spec.name);
            for (const auto& a : spec.aliases) add_alias(a, spec.name);
        }
        for (const auto& [name, fps] : fingerprints_) {
            if (!find(name)) throw std::invalid_argument("fingerprint for unknown tool " + name);
            for (const auto& fp : fps) fingerprint_index_.emplace(fp, name);
        }
    }

    const std::vector<ToolSpec>& specs() const { return specs_; }
    const std::map<std::string, std::string>& alias_index() const { return alias_index_; }
    const std::map<std::string, std::vector<std::string>>& fingerprints() const { return fingerprints_; }

    const ToolSpec* find(std::string_view canonical) const {
        auto it = std::lower_bound(specs_.begin(), specs_.end(), canonical,
                                   [](const ToolSpec& s, std::string_view n) { return s.name < n; });
        return it != specs_.end() && it->name == canonical ? &*it : nullptr;
    }

    /// Canonical name for a raw or snake_case-normalized name, if known.
    std::optional<std::string> canonical_name(std::string_view name) const {
        if (auto it = alias_index_.find(std::string(name)); it != alias_index_.end()) return it->second;
        if (auto it = alias_index_.find(strings::to_snake_case(name)); it != alias_index_.end()) return it->second;
        return std::nullopt;
    }

    std::optional<std::string> tool_for_fingerprint(std::string_view fp) const {
        if (auto it = fingerprint_index_.find(std::string(fp)); it != fingerprint_index_.end()) return it->second;
        return std::nullopt;
    }

    /// Copy with one more spec.
    Registry with_tool(ToolSpec spec) const {
        auto specs = specs_;
        specs.push_back(std::move(spec));
        return Registry(std::move(specs), fingerprints_);
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["version"] = 1;
        j["tools"] = nlohmann::ordered_json::array();
        for (const auto& s : specs_) {
            nlohmann::ordered_json t;
            t["name"] = s.name;
            t["params"] = nlohmann::ordered_json::array();
            for (const auto& p : s.params) t["params"].push_back({{"name", p.name}, {"kind", to_string(p.kind)}});
            t["returns"] = to_string(s.returns);
            t["category"] = to_string(s.category);
            t["aliases"] = s.aliases;
            if (auto it = fingerprints_.find(s.name); it != fingerprints_.end()) t["fingerprints"] = it->second;
            else t["fingerprints"] = nlohmann::ordered_json::array();
            j["tools"].push_back(std::move(t));
        }
        return j;
    }

    static Registry from_json(const nlohmann::json& j) {
        std::vector<ToolSpec> specs;
        std::map<std::string, std::vector<std::string>> fps;
        for (const auto& t : j.at("tools")) {
            ToolSpec s;
            s.name = t.at("name").get<std::string>();
            for (const auto& p : t.at("params")) {
                auto kind = param_kind_from_string(p.at("kind").get<std::string>());
                if (!kind) throw std::invalid_argument("unknown param kind in registry file");
                s.params.push_back({p.at("name").get<std::string>(), *kind});
            }
            auto ret = param_kind_from_string(t.at("returns").get<std::string>());
            auto cat = tool_category_from_string(t.at("category").get<std::string>());
            if (!ret || !cat) throw std::invalid_argument("bad returns/category in registry file for " + s.name);
            s.returns = *ret;
            s.category = *cat;
            s.aliases = t.value("aliases", std::vector<std::string>{});
            auto tool_fps = t.value("fingerprints", std::vector<std::string>{});
            if (!tool_fps.empty()) fps[s.name] = std::move(tool_fps);
            specs.push_back(std::move(s));
        }
        return Registry(std::move(specs), std::move(fps));
    }

    /// Content hash of the serialized inventory, for run manifests.
    std::string content_hash() const { return sha256_hex(to_json().dump()); }

private:
    void add_alias(const std::string& alias, const std::string& canonical) {
        auto [it, inserted] = alias_index_.emplace(alias, canonical);
        if (!inserted) throw std::invalid_argument("duplicate tool name or alias: " + alias);
    }

    std::vector<ToolSpec> specs_;
    std::map<std::string, std::string> alias_index_;
    std::map<std::string, std::vector<std::string>> fingerprints_;
    std::map<std::string, std::string> fingerprint_index_;
};

namespace detail {

struct BuiltinEntry {
    ToolSpec spec;
    std::string_view reference_source;
};

inline std::vector<BuiltinEntry> builtin_entries() {
    using K = ParamKind;
    using C = ToolCategory;
    return {
        {{"get_column_by_name", {{"table", K::table}, {"name", K::string}}, K::column, C::table_preprocess, {}},
         "def get_column_by_name(table_data, column_name):\n"
         "    column_index = table_data[0].index(column_name)\n"
         "    return [row[column_index] for row in table_data[1:]]\n"},
        {{"get_column_by_index", {{"table", K::table}, {"index", K::number}}, K::column, C::table_preprocess, {}},
         "def get_column_by_index(table_data, column_index):\n"
         "    return [row[column_index] for row in table_data[1:]]\n"},
        {{"get_row_by_name", {{"table", K::table}, {"name", K::string}}, K::row, C::table_preprocess, {}},
         "def get_row_by_name(table_data, row_name):\n"
         "    for row in table_data[1:]:\n"
         "        if row[0] == row_name:\n"
         "            return row\n"
         "    return None\n"},
        {{"get_row_index_by_value", {{"column", K::column}, {"value", K::any}}, K::number, C::table_preprocess, {}},
         "def get_row_index_by_value(column, value):\n"
         "    return column.index(value)\n"},
        {{"get_column_cell_value", {{"column", K::column}, {"index", K::number}}, K::any, C::table_preprocess,
          {"get_cell"}},
         "def get_column_cell_value(column, row_index):\n"
         "    return column[row_index]\n"},
        {{"extract_price", {{"text", K::string}}, K::number, C::table_preprocess, {}},
         "def extract_price(text):\n"
         "    return float(text.replace('$', '').replace(',', ''))\n"},
        {{"add", {{"a", K::number}, {"b", K::number}}, K::number, C::numerical, {}},
         "def add(a, b):\n    return a + b\n"},
        {{"subtract", {{"a", K::number}, {"b", K::number}}, K::number, C::numerical, {}},
         "def subtract(a, b):\n    return a - b\n"},
        {{"multiply", {{"a", K::number}, {"b", K::number}}, K::number, C::numerical, {}},
         "def multiply(a, b):\n    return a * b\n"},
        {{"divide", {{"a", K::number}, {"b", K::number}}, K::number, C::numerical, {}},
         "def divide(a, b):\n    return a / b\n"},
        {{"sum", {{"values", K::list_number}}, K::number, C::numerical, {"total"}},
         "def sum(numbers):\n"
         "    total = 0\n"
         "    for number in numbers:\n"
         "        total += number\n"
         "    return total\n"},
        {{"average", {{"values", K::list_number}}, K::number, C::numerical, {"mean"}},
         "def average(numbers):\n    return sum(numbers) / len(numbers)\n"},
        {{"min", {{"values", K::list_number}}, K::number, C::numerical, {}},
         "def min(numbers):\n    return min(numbers)\n"},
        {{"max", {{"values", K::list_number}}, K::number, C::numerical, {}},
         "def max(numbers):\n    return max(numbers)\n"},
        {{"count", {{"values", K::any}}, K::number, C::numerical, {}},
         "def count(values):\n    return len(values)\n"},
        {{"argmax", {{"column", K::column}}, K::number, C::numerical, {}},
         "def argmax(values):\n    return values.index(max(values))\n"},
        {{"argmin", {{"column", K::column}}, K::number, C::numerical, {}},
         "def argmin(values):\n    return values.index(min(values))\n"},
        {{"equal_to", {{"a", K::any}, {"b", K::any}}, K::boolean, C::logical, {}},
         "def equal_to(a, b):\n    return a == b\n"},
        {{"greater_than", {{"a", K::any}, {"b", K::any}}, K::boolean, C::logical, {}},
         "def greater_than(a, b):\n    return a > b\n"},
        {{"less_than", {{"a", K::any}, {"b", K::any}}, K::boolean, C::logical, {}},
         "def less_than(a, b):\n    return a < b\n"},
        {{"filter_rows", {{"table", K::table}, {"column", K::string}, {"value", K::any}}, K::table,
          C::table_preprocess, {}},
         "def filter_rows(table_data, column_name, value):\n"
         "    column_index = table_data[0].index(column_name)\n"
         "    return [table_data[0]] + [row for row in table_data[1:] if row[column_index] == value]\n"},
        {{"linear_regression", {{"xs", K::list_number}, {"ys", K::list_number}}, K::list_number,
          C::higher_level, {}},
         "def linear_regression(xs, ys):\n"
         "    n = len(xs)\n"
         "    mean_x = sum(xs) / n\n"
         "    mean_y = sum(ys) / n\n"
         "    slope = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys)) / sum((x - mean_x) ** 2 for x in xs)\n"
         "    intercept = mean_y - slope * mean_x\n"
         "    return [slope, intercept]\n"},
    };
}

} // namespace detail

/// Reference Python source for a builtin, used for fingerprint matching.
inline std::optional<std::string> builtin_reference_source(std::string_view name) {
    for (const auto& e : detail::builtin_entries())
        if (e.spec.name == name) return std::string(e.reference_source);
    return std::nullopt;
}

inline Registry builtin_registry() {
    std::vector<ToolSpec> specs;
    std::map<std::string, std::vector<std::string>> fps;
    for (auto& e : detail::builtin_entries()) {
        fps[e.spec.name].push_back(make_tool_def(e.reference_source).body_fingerprint);
        specs.push_back(std::move(e.spec));
    }
    return Registry(std::move(specs), std::move(fps));
}

/// Canonical spec for `name` after snake_case normalization and alias
/// lookup. Throws UnknownTool.
inline const ToolSpec& resolve(std::string_view name, const Registry& registry) {
    if (auto canonical = registry.canonical_name(name))
        if (const ToolSpec* spec = registry.find(*canonical)) return *spec;
    throw UnknownTool(std::string(name));
}

// ---------------------------------------------------------------------------
// Abstraction, deduplication, generated-tool mapping
// ---------------------------------------------------------------------------

/// Keeps defs whose (snake_case) name occurs at least `min_count` times.
inline std::vector<ToolDef> abstract_tools(const std::vector<ToolDef>& defs, std::size_t min_count = 2) {
    if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& d : defs) ++counts[strings::to_snake_case(d.name)];
    std::vector<ToolDef> out;
    for (const auto& d : defs)
        if (counts[strings::to_snake_case(d.name)] >= min_count) out.push_back(d);
    return out;
}

struct DedupResult {
    std::vector<ToolDef> defs;                     ///< one per canonical name, sorted by name
    std::map<std::string, std::string> alias_map;  ///< merged name -> canonical name
};

/// Same-name defs keep their most frequent body; then defs with equal
/// (param_count, fingerprint) merge under the lexicographically smallest
/// name.
inline DedupResult deduplicate(const std::vector<ToolDef>& defs) {
    DedupResult result;
    std::map<std::string, std::vector<const ToolDef*>> by_name;
    for (const auto& d : defs) {
        const std::string canonical = strings::to_snake_case(d.name);
        if (canonical != d.name) result.alias_map[d.name] = canonical;
        by_name[canonical].push_back(&d);
    }

    std::map<std::string, ToolDef> chosen;
    for (const auto& [name, group] : by_name) {
        std::map<std::pair<std::size_t, std::string>, std::size_t> freq;
        for (const auto* d : group) ++freq[{d->param_count, d->body_fingerprint}];
        auto best = freq.begin();
        for (auto it = freq.begin(); it != freq.end(); ++it)
            if (it->second > best->second) best = it;
        const ToolDef* rep = nullptr;
        for (const auto* d : group)
            if (d->param_count == best->first.first && d->body_fingerprint == best->first.second &&
                (!rep || d->source_text < rep->source_text))
                rep = d;
        ToolDef def = *rep;
        def.name = name;
        chosen.emplace(name, std::move(def));
    }

    std::map<std::pair<std::size_t, std::string>, std::vector<std::string>> clusters;
    for (const auto& [name, def] : chosen) clusters[{def.param_count, def.body_fingerprint}].push_back(name);
    for (auto& [key, names] : clusters) {
        std::sort(names.begin(), names.end());
        const std::string& canonical = names.front();
        for (std::size_t i = 1; i < names.size(); ++i) result.alias_map[names[i]] = canonical;
        result.defs.push_back(chosen.at(canonical));
    }
    for (auto& [from, to] : result.alias_map)
        if (auto it = result.alias_map.find(to); it != result.alias_map.end() && it->second != to) to = it->second;
    std::sort(result.defs.begin(), result.defs.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return result;
}

/// Canonical name a def ends up under after deduplication.
inline std::string canonical_tool_name(const std::map<std::string, std::string>& alias_map, const std::string& name) {
    auto it = alias_map.find(name);
    std::string out = it == alias_map.end() ? strings::to_snake_case(name) : it->second;
    if (auto again = alias_map.find(out); again != alias_map.end()) out = again->second;
    return out;
}

struct ConsolidatedTools {
    std::vector<ToolDef> defs;
    std::map<std::string, std::string> alias_map;
    std::vector<std::string> removed;  ///< canonical names dropped by abstraction
};

/// Deduplicates first, then drops canonical tools seen fewer than
/// `min_count` times across the corpus (counting every name merged into
/// them).
inline ConsolidatedTools consolidate_tools(const std::vector<ToolDef>& corpus, std::size_t min_count = 2) {
    auto dedup = deduplicate(corpus);
    std::vector<ToolDef> renamed;
    renamed.reserve(corpus.size());
    for (auto d : corpus) {
        d.name = canonical_tool_name(dedup.alias_map, d.name);
        renamed.push_back(std::move(d));
    }
    std::set<std::string> survivors;
    for (const auto& d : abstract_tools(renamed, min_count)) survivors.insert(d.name);

    ConsolidatedTools out;
    out.alias_map = std::move(dedup.alias_map);
    for (auto& d : dedup.defs) {
        if (survivors.count(d.name)) out.defs.push_back(std::move(d));
        else out.removed.push_back(d.name);
    }
    return out;
}

struct MappedTo {
    std::string name;
    friend bool operator==(const MappedTo&, const MappedTo&) = default;
};

struct Rejected {
    std::string reason;
    friend bool operator==(const Rejected&, const Rejected&) = default;
};

using Registration = std::variant<MappedTo, Rejected>;

/// Maps a generated def onto a builtin by body fingerprint, then by name.
/// The registry is never modified and generated bodies never run.
inline Registration register_generated(const ToolDef& def, const Registry& registry) {
    if (auto name = registry.tool_for_fingerprint(def.body_fingerprint)) {
        const ToolSpec* spec = registry.find(*name);
        if (spec && spec->params.size() == def.param_count) return MappedTo{*name};
    }
    if (auto canonical = registry.canonical_name(def.name)) return MappedTo{*canonical};
    return Rejected{"no builtin match"};
}

} // namespace tabrex
