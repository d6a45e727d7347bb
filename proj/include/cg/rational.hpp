#pragma once

#include <compare>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cg {

// Exact rational on 64-bit integers. Intermediates go through __int128 and
// any result that does not fit throws std::overflow_error.
class Rational {
 public:
  constexpr Rational() = default;
  constexpr Rational(std::int64_t n) : n_(n), d_(1) {}  // NOLINT
  Rational(std::int64_t n, std::int64_t d) { assign(n, d); }

  std::int64_t num() const { return n_; }
  std::int64_t den() const { return d_; }
  bool is_zero() const { return n_ == 0; }
  bool is_integer() const { return d_ == 1; }
  int sign() const { return (n_ > 0) - (n_ < 0); }

  Rational operator-() const { return from128(-static_cast<__int128>(n_), d_); }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }
  Rational& operator/=(const Rational& o) { return *this = *this / o; }

  friend Rational operator+(const Rational& a, const Rational& b) {
    __int128 g = std::gcd(a.d_, b.d_);
    __int128 n = static_cast<__int128>(a.n_) * (b.d_ / g) + static_cast<__int128>(b.n_) * (a.d_ / g);
    __int128 d = static_cast<__int128>(a.d_) * (b.d_ / g);
    return from128(n, d);
  }
  friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return from128(static_cast<__int128>(a.n_) * b.n_, static_cast<__int128>(a.d_) * b.d_);
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.n_ == 0) throw std::domain_error("rational division by zero");
    return from128(static_cast<__int128>(a.n_) * b.d_, static_cast<__int128>(a.d_) * b.n_);
  }
  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    __int128 l = static_cast<__int128>(a.n_) * b.d_;
    __int128 r = static_cast<__int128>(b.n_) * a.d_;
    return l <=> r;
  }

  double to_double() const { return static_cast<double>(n_) / static_cast<double>(d_); }

  // "p/q" always, e.g. "3/1"
  std::string str_pq() const { return std::to_string(n_) + "/" + std::to_string(d_); }
  // "p" for integers, "p/q" otherwise
  std::string str() const { return d_ == 1 ? std::to_string(n_) : str_pq(); }

  static Rational parse(const std::string& s) {
    auto slash = s.find('/');
    try {
      if (slash == std::string::npos) return Rational(std::stoll(s));
      return Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
    } catch (const std::logic_error&) {
      throw std::invalid_argument("bad rational literal '" + s + "'");
    }
  }

 private:
  static Rational from128(__int128 n, __int128 d) {
    if (d == 0) throw std::domain_error("rational with zero denominator");
    if (d < 0) { n = -n; d = -d; }
    __int128 a = n < 0 ? -n : n, b = d;
    while (b != 0) { __int128 t = a % b; a = b; b = t; }
    if (a > 1) { n /= a; d /= a; }
    constexpr __int128 lim = INT64_MAX;
    if (n > lim || n < -lim || d > lim) throw std::overflow_error("rational overflow");
    Rational r;
    r.n_ = static_cast<std::int64_t>(n);
    r.d_ = static_cast<std::int64_t>(d);
    return r;
  }
  void assign(std::int64_t n, std::int64_t d) { *this = from128(n, d); }

  std::int64_t n_ = 0;
  std::int64_t d_ = 1;
};

}  // namespace cg
