#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tabrex {

enum class Severity { error, warning };

struct Diagnostic {
    Severity severity = Severity::error;
    std::string code;       ///< e.g. "UnknownTool", "OutOfRange"
    std::size_t step = 0;   ///< 1-based step / line the finding refers to
    std::string message;
    friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

inline bool has_errors(const std::vector<Diagnostic>& diags) {
    return std::any_of(diags.begin(), diags.end(), [](const auto& d) { return d.severity == Severity::error; });
}

inline std::size_t error_count(const std::vector<Diagnostic>& diags) {
    return static_cast<std::size_t>(
        std::count_if(diags.begin(), diags.end(), [](const auto& d) { return d.severity == Severity::error; }));
}

inline nlohmann::ordered_json to_json(const Diagnostic& d) {
    return {{"severity", d.severity == Severity::error ? "error" : "warning"},
            {"code", d.code},
            {"step", d.step},
            {"message", d.message}};
}

} // namespace tabrex
