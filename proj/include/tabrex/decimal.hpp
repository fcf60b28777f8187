#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_dec_float.hpp>

namespace tabrex {

/// Base-10 floating point number with 50 significant digits.
///
/// Cell values, literals and tool results all use this type so that
/// `0.1 + 0.2` compares equal to `0.3` and answers render the same way on
/// every platform.
class Decimal {
public:
    using backend_type = boost::multiprecision::cpp_dec_float_50;

    /// Significant digits kept when rendering.
    static constexpr int render_digits = 28;

    Decimal() = default;
    Decimal(int v) : value_(v) {}
    Decimal(long v) : value_(v) {}
    Decimal(long long v) : value_(v) {}
    explicit Decimal(backend_type v) : value_(std::move(v)) {}

    /// Accepts `[+-]?digits[.digits][e[+-]digits]` and `[+-]?.digits`.
    /// Thousands separators are not accepted here; see parse_number_text().
    static std::optional<Decimal> parse(std::string_view text) {
        std::size_t i = 0;
        const std::size_t n = text.size();
        if (n == 0) return std::nullopt;
        if (text[i] == '+' || text[i] == '-') ++i;
        std::size_t int_digits = 0;
        while (i < n && is_digit(text[i])) { ++i; ++int_digits; }
        std::size_t frac_digits = 0;
        if (i < n && text[i] == '.') {
            ++i;
            while (i < n && is_digit(text[i])) { ++i; ++frac_digits; }
        }
        if (int_digits + frac_digits == 0) return std::nullopt;
        if (i < n && (text[i] == 'e' || text[i] == 'E')) {
            ++i;
            if (i < n && (text[i] == '+' || text[i] == '-')) ++i;
            std::size_t exp_digits = 0;
            while (i < n && is_digit(text[i])) { ++i; ++exp_digits; }
            if (exp_digits == 0 || exp_digits > 4) return std::nullopt;
        }
        if (i != n) return std::nullopt;
        std::string owned(text);
        if (owned.front() == '+') owned.erase(0, 1);
        return Decimal(backend_type(owned));
    }

    const backend_type& backend() const { return value_; }

    bool is_zero() const { return value_.is_zero(); }
    bool is_negative() const { return value_ < 0; }
    bool is_integer() const { return boost::multiprecision::trunc(value_) == value_; }

    std::optional<std::int64_t> to_int64() const {
        if (!is_integer()) return std::nullopt;
        if (value_ > backend_type(INT64_MAX) || value_ < backend_type(INT64_MIN)) return std::nullopt;
        return value_.convert_to<std::int64_t>();
    }

    double to_double() const { return value_.convert_to<double>(); }

    Decimal abs() const { return Decimal(boost::multiprecision::abs(value_)); }

    /// Rounds half away from zero to `places` digits after the point.
    Decimal round(int places) const {
        backend_type scale = boost::multiprecision::pow(backend_type(10), places);
        backend_type scaled = value_ * scale;
        backend_type half(0.5);
        backend_type r = value_ < 0 ? backend_type(boost::multiprecision::ceil(scaled - half))
                                    : backend_type(boost::multiprecision::floor(scaled + half));
        return Decimal(backend_type(r / scale));
    }

    /// Plain decimal notation: no exponent, no trailing zeros, no `+`.
    std::string to_string() const {
        if (value_.is_zero()) return "0";
        std::string sci = value_.str(render_digits - 1, std::ios_base::scientific);
        bool negative = false;
        std::size_t pos = 0;
        if (sci[pos] == '-') { negative = true; ++pos; }
        const std::size_t e = sci.find_first_of("eE", pos);
        std::string digits;
        for (std::size_t k = pos; k < e; ++k)
            if (sci[k] != '.') digits.push_back(sci[k]);
        int exponent = std::stoi(sci.substr(e + 1));
        while (digits.size() > 1 && digits.back() == '0') digits.pop_back();
        if (digits == "0") return "0";

        // value = 0.d1d2d3... * 10^(exponent + 1)
        const int point = exponent + 1;
        std::string out;
        if (point <= 0) {
            out = "0." + std::string(static_cast<std::size_t>(-point), '0') + digits;
        } else if (static_cast<std::size_t>(point) >= digits.size()) {
            out = digits + std::string(static_cast<std::size_t>(point) - digits.size(), '0');
        } else {
            out = digits.substr(0, static_cast<std::size_t>(point)) + "." +
                  digits.substr(static_cast<std::size_t>(point));
        }
        return negative ? "-" + out : out;
    }

    Decimal& operator+=(const Decimal& o) { value_ += o.value_; return *this; }
    Decimal& operator-=(const Decimal& o) { value_ -= o.value_; return *this; }
    Decimal& operator*=(const Decimal& o) { value_ *= o.value_; return *this; }
    Decimal& operator/=(const Decimal& o) { value_ /= o.value_; return *this; }

    friend Decimal operator+(Decimal a, const Decimal& b) { return a += b; }
    friend Decimal operator-(Decimal a, const Decimal& b) { return a -= b; }
    friend Decimal operator*(Decimal a, const Decimal& b) { return a *= b; }
    friend Decimal operator/(Decimal a, const Decimal& b) { return a /= b; }
    friend Decimal operator-(const Decimal& a) { return Decimal(backend_type(-a.value_)); }

    friend bool operator==(const Decimal& a, const Decimal& b) { return a.value_ == b.value_; }
    friend std::weak_ordering operator<=>(const Decimal& a, const Decimal& b) {
        if (a.value_ < b.value_) return std::weak_ordering::less;
        if (b.value_ < a.value_) return std::weak_ordering::greater;
        return std::weak_ordering::equivalent;
    }

    friend std::ostream& operator<<(std::ostream& os, const Decimal& d) { return os << d.to_string(); }

private:
    static constexpr bool is_digit(char c) { return c >= '0' && c <= '9'; }

    backend_type value_{0};
};

} // namespace tabrex
