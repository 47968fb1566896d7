#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>

#include "akd/errors.hpp"

namespace akd {

// Non-negative exact fraction. Not reduced implicitly: support values keep
// their "count/N" form, parse() reduces.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Rational parse(std::string_view text);

  Rational reduced() const {
    if (num == 0) return {0, 1};
    const auto g = std::gcd(num, den);
    return {num / g, den / g};
  }

  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend bool operator==(const Rational& a, const Rational& b) {
    return static_cast<unsigned __int128>(a.num) * b.den ==
           static_cast<unsigned __int128>(b.num) * a.den;
  }
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    const auto l = static_cast<unsigned __int128>(a.num) * b.den;
    const auto r = static_cast<unsigned __int128>(b.num) * a.den;
    return l < r ? std::strong_ordering::less
                 : (l > r ? std::strong_ordering::greater : std::strong_ordering::equal);
  }
};

namespace detail {

inline std::uint64_t parse_u64(std::string_view digits, std::string_view whole) {
  if (digits.empty()) throw ParseError("malformed rational '" + std::string(whole) + "'");
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size())
    throw ParseError("malformed rational '" + std::string(whole) + "'");
  return value;
}

}  // namespace detail

// Accepts "p/q", "d", or "d.ddd" (exact decimal).
inline Rational Rational::parse(std::string_view text) {
  if (const auto slash = text.find('/'); slash != std::string_view::npos) {
    const auto n = detail::parse_u64(text.substr(0, slash), text);
    const auto d = detail::parse_u64(text.substr(slash + 1), text);
    if (d == 0) throw ParseError("zero denominator in '" + std::string(text) + "'");
    return Rational{n, d}.reduced();
  }
  if (const auto dot = text.find('.'); dot != std::string_view::npos) {
    const auto int_part = text.substr(0, dot);
    const auto frac_part = text.substr(dot + 1);
    if (frac_part.size() > 18) throw ParseError("too many decimals in '" + std::string(text) + "'");
    std::uint64_t den = 1;
    for (std::size_t i = 0; i < frac_part.size(); ++i) den *= 10;
    const auto ip = int_part.empty() ? 0 : detail::parse_u64(int_part, text);
    const auto fp = detail::parse_u64(frac_part, text);
    return Rational{ip * den + fp, den}.reduced();
  }
  return Rational{detail::parse_u64(text, text), 1};
}

// sigma in [0, 1].
class SupportThreshold {
 public:
  explicit SupportThreshold(Rational sigma) : sigma_(sigma.reduced()) {
    if (sigma_ > Rational{1, 1}) throw ValidationError("support threshold " + sigma_.str() + " exceeds 1");
  }
  static SupportThreshold parse(std::string_view text) { return SupportThreshold(Rational::parse(text)); }

  const Rational& value() const noexcept { return sigma_; }

  // ceil(sigma * n), never below 1: itemsets with an empty cover are not reported.
  std::uint64_t min_count(std::uint64_t n) const {
    const auto prod = static_cast<unsigned __int128>(sigma_.num) * n;
    const auto c = static_cast<std::uint64_t>((prod + sigma_.den - 1) / sigma_.den);
    return c == 0 ? 1 : c;
  }

  friend bool operator==(const SupportThreshold&, const SupportThreshold&) = default;

 private:
  Rational sigma_;
};

}  // namespace akd
