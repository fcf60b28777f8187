#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tabrex/diagnostic.hpp"
#include "tabrex/error.hpp"
#include "tabrex/executor.hpp"
#include "tabrex/plan.hpp"
#include "tabrex/strings.hpp"

namespace tabrex {

struct TextSeg {
    std::string text;
    friend bool operator==(const TextSeg&, const TextSeg&) = default;
};

/// `<<<###1 ;;; ###2>>>`: 1-based line numbers, strictly increasing.
struct CallRef {
    std::vector<std::size_t> lines;
    friend bool operator==(const CallRef&, const CallRef&) = default;
};

using Segment = std::variant<TextSeg, CallRef>;

struct Explanation {
    std::vector<Segment> segments;
    friend bool operator==(const Explanation&, const Explanation&) = default;
};

inline constexpr std::string_view ref_open = "<<<";
inline constexpr std::string_view ref_close = ">>>";
inline constexpr std::string_view ref_separator = ";;;";
inline constexpr std::string_view ref_marker = "###";

namespace detail {

inline std::size_t parse_ref_number(std::string_view item, std::size_t position) {
    item = strings::trim(item);
    if (!strings::starts_with(item, ref_marker)) throw MalformedRef(position, "expected ###<line>");
    item.remove_prefix(ref_marker.size());
    if (item.empty() || item.size() > 9) throw MalformedRef(position, "bad line number");
    std::size_t k = 0;
    for (char c : item) {
        if (c < '0' || c > '9') throw MalformedRef(position, "non-numeric line number");
        k = k * 10 + static_cast<std::size_t>(c - '0');
    }
    if (k == 0) throw MalformedRef(position, "line numbers start at 1");
    return k;
}

} // namespace detail

inline Explanation parse_explanation(std::string_view text) {
    Explanation out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t open = text.find(ref_open, pos);
        if (open == std::string_view::npos) {
            out.segments.push_back(TextSeg{std::string(text.substr(pos))});
            break;
        }
        if (open > pos) out.segments.push_back(TextSeg{std::string(text.substr(pos, open - pos))});
        const std::size_t body = open + ref_open.size();
        const std::size_t close = text.find(ref_close, body);
        if (close == std::string_view::npos) throw MalformedRef(open, "unclosed <<<");
        std::string_view inner = text.substr(body, close - body);
        if (inner.find(ref_open) != std::string_view::npos) throw MalformedRef(open, "nested <<<");

        CallRef ref;
        std::size_t start = 0;
        while (true) {
            const std::size_t sep = inner.find(ref_separator, start);
            std::string_view item = inner.substr(start, sep == std::string_view::npos ? inner.size() - start : sep - start);
            const std::size_t k = detail::parse_ref_number(item, body + start);
            if (!ref.lines.empty() && k <= ref.lines.back())
                throw MalformedRef(body + start, "line numbers must increase within a reference");
            ref.lines.push_back(k);
            if (sep == std::string_view::npos) break;
            start = sep + ref_separator.size();
        }
        out.segments.push_back(std::move(ref));
        pos = close + ref_close.size();
    }
    return out;
}

inline std::string serialize_ref(const CallRef& ref) {
    std::string out(ref_open);
    for (std::size_t i = 0; i < ref.lines.size(); ++i) {
        if (i) out += " ;;; ";
        out += std::string(ref_marker) + std::to_string(ref.lines[i]);
    }
    return out + std::string(ref_close);
}

inline std::string serialize_explanation(const Explanation& expl) {
    std::string out;
    for (const auto& seg : expl.segments) {
        if (const auto* t = std::get_if<TextSeg>(&seg)) out += t->text;
        else out += serialize_ref(std::get<CallRef>(seg));
    }
    return out;
}

/// OutOfRange and NonIncreasing are errors; steps the text never points at
/// are reported as Uncovered warnings.
inline std::vector<Diagnostic> validate_refs(const Explanation& expl, const Plan& plan) {
    std::vector<Diagnostic> diags;
    const std::size_t n = plan.steps.size();
    std::vector<bool> covered(n + 1, false);
    std::size_t last = 0;
    for (const auto& seg : expl.segments) {
        const auto* ref = std::get_if<CallRef>(&seg);
        if (!ref) continue;
        for (std::size_t k : ref->lines) {
            if (k < 1 || k > n) {
                diags.push_back({Severity::error, "OutOfRange", k,
                                 "reference ###" + std::to_string(k) + " outside plan of " + std::to_string(n) + " step(s)"});
                continue;
            }
            if (k <= last)
                diags.push_back({Severity::error, "NonIncreasing", k,
                                 "reference ###" + std::to_string(k) + " after ###" + std::to_string(last)});
            last = std::max(last, k);
            covered[k] = true;
        }
    }
    for (std::size_t k = 1; k <= n; ++k)
        if (!covered[k]) diags.push_back({Severity::warning, "Uncovered", k, "step " + std::to_string(k) + " is never referenced"});
    return diags;
}

enum class RenderMode { symbolic, with_results };

inline const char* to_string(RenderMode m) { return m == RenderMode::symbolic ? "symbolic" : "with_results"; }

inline std::optional<RenderMode> render_mode_from_string(std::string_view s) {
    if (s == "symbolic") return RenderMode::symbolic;
    if (s == "with_results") return RenderMode::with_results;
    return std::nullopt;
}

/// Replaces each reference with `[step k: tool(args)]`, plus ` = result`
/// in with_results mode, and appends a final `Answer:` line.
inline std::string render(const Explanation& expl, const Plan& plan, const RunOutcome& outcome,
                          RenderMode mode = RenderMode::symbolic) {
    if (mode == RenderMode::with_results && (!outcome.executable || outcome.trace.size() != plan.steps.size()))
        throw TraceMissing();
    std::string out;
    for (const auto& seg : expl.segments) {
        if (const auto* t = std::get_if<TextSeg>(&seg)) {
            out += t->text;
            continue;
        }
        const auto& ref = std::get<CallRef>(seg);
        for (std::size_t i = 0; i < ref.lines.size(); ++i) {
            const std::size_t k = ref.lines[i];
            if (k < 1 || k > plan.steps.size())
                throw MalformedRef(k, "reference ###" + std::to_string(k) + " outside the plan");
            if (i) out += " ";
            out += "[step " + std::to_string(k) + ": ";
            if (mode == RenderMode::with_results) {
                const auto& entry = outcome.trace[k - 1];
                out += entry.tool + "(" + strings::join(entry.args, ", ") + ") = " + entry.result;
            } else {
                const auto& step = plan.steps[k - 1];
                std::vector<std::string> args;
                for (const auto& a : step.args) args.push_back(render_arg(a));
                out += step.tool + "(" + strings::join(args, ", ") + ")";
            }
            out += "]";
        }
    }
    if (!out.empty() && out.back() != '\n') out += "\n";
    out += "Answer: " + outcome.answer;
    return out;
}

} // namespace tabrex
