#pragma once

// Closed real intervals with outward-rounded sum and scalar product. The
// rounding is exact-aware: an endpoint is pushed one ulp outwards only when
// the floating-point result differs from the real one, so [1, 2] + [-1, 3]
// is exactly [0, 5].

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace otbot {

namespace detail {

inline double down(double v) { return std::nextafter(v, -std::numeric_limits<double>::infinity()); }
inline double up(double v) { return std::nextafter(v, std::numeric_limits<double>::infinity()); }

// Knuth two-sum: s + err == a + b exactly.
inline double sum_error(double a, double b, double s) {
  const double bb = s - a;
  return (a - (s - bb)) + (b - bb);
}

inline double add_down(double a, double b) {
  const double s = a + b;
  return std::isfinite(s) && sum_error(a, b, s) < 0.0 ? down(s) : s;
}
inline double add_up(double a, double b) {
  const double s = a + b;
  return std::isfinite(s) && sum_error(a, b, s) > 0.0 ? up(s) : s;
}
inline double mul_down(double a, double b) {
  const double p = a * b;
  return std::isfinite(p) && std::fma(a, b, -p) < 0.0 ? down(p) : p;
}
inline double mul_up(double a, double b) {
  const double p = a * b;
  return std::isfinite(p) && std::fma(a, b, -p) > 0.0 ? up(p) : p;
}

}  // namespace detail

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  /// Degenerate interval [v, v].
  Interval(double v) : lo(v), hi(v) {  // NOLINT(google-explicit-constructor)
    if (std::isnan(v)) throw std::invalid_argument("interval: NaN endpoint");
  }
  Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (std::isnan(lo) || std::isnan(hi)) throw std::invalid_argument("interval: NaN endpoint");
    if (lo > hi) throw std::invalid_argument("interval: lo > hi");
  }

  /// [-r, r].
  static Interval symmetric(double r) { return {-std::abs(r), std::abs(r)}; }
  static Interval hull(const Interval& a, const Interval& b) {
    return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
  }

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  double mag() const { return std::max(std::abs(lo), std::abs(hi)); }
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }

  friend bool operator==(const Interval&, const Interval&) = default;
};

inline Interval operator+(const Interval& a, const Interval& b) {
  return {detail::add_down(a.lo, b.lo), detail::add_up(a.hi, b.hi)};
}

inline Interval operator-(const Interval& a) { return {-a.hi, -a.lo}; }

inline Interval operator-(const Interval& a, const Interval& b) { return a + (-b); }

/// k [lo, hi] is [k lo, k hi] for k >= 0 and [k hi, k lo] for k < 0.
inline Interval operator*(double k, const Interval& a) {
  if (std::isnan(k)) throw std::invalid_argument("interval: NaN factor");
  if (k >= 0.0) return {detail::mul_down(k, a.lo), detail::mul_up(k, a.hi)};
  return {detail::mul_down(k, a.hi), detail::mul_up(k, a.lo)};
}

inline Interval operator*(const Interval& a, double k) { return k * a; }

inline Interval& operator+=(Interval& a, const Interval& b) { return a = a + b; }

inline std::ostream& operator<<(std::ostream& os, const Interval& a) {
  return os << '[' << a.lo << ", " << a.hi << ']';
}

}  // namespace otbot
