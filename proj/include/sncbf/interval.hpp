#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace sncbf {

// Slack added to both endpoints after every primitive interval operation.
// Stands in for directed rounding.
inline constexpr double kIntervalSlack = 1e-9;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  static Interval point(double v) { return {v, v}; }
  static Interval entire() {
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
  bool empty() const { return !(lo <= hi); }
  bool operator==(const Interval&) const = default;
};

using Box = std::vector<Interval>;

inline Interval widen(Interval v) {
  return {v.lo - kIntervalSlack, v.hi + kIntervalSlack};
}

inline Interval hull(const Interval& a, const Interval& b) {
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

inline Interval intersect(const Interval& a, const Interval& b) {
  return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
}

inline Interval operator+(const Interval& a, const Interval& b) {
  return widen({a.lo + b.lo, a.hi + b.hi});
}
inline Interval operator-(const Interval& a, const Interval& b) {
  return widen({a.lo - b.hi, a.hi - b.lo});
}
inline Interval operator-(const Interval& a) { return {-a.hi, -a.lo}; }

inline Interval operator*(const Interval& a, const Interval& b) {
  // 0 * inf would give NaN; treat an exact zero factor as absorbing.
  auto mul = [](double x, double y) { return (x == 0.0 || y == 0.0) ? 0.0 : x * y; };
  const double p1 = mul(a.lo, b.lo), p2 = mul(a.lo, b.hi), p3 = mul(a.hi, b.lo), p4 = mul(a.hi, b.hi);
  return widen({std::min({p1, p2, p3, p4}), std::max({p1, p2, p3, p4})});
}

// Requires 0 outside b; callers check and raise SplitRequired.
inline Interval divide_nonzero(const Interval& a, const Interval& b) {
  Interval inv{1.0 / b.hi, 1.0 / b.lo};
  return a * inv;
}

inline Interval ipow(const Interval& a, int n) {
  if (n == 0) return Interval::point(1.0);
  if (n == 1) return a;
  const double l = std::pow(a.lo, n), h = std::pow(a.hi, n);
  if (n % 2 == 1) return widen({l, h});
  if (a.lo >= 0.0) return widen({l, h});
  if (a.hi <= 0.0) return widen({h, l});
  return widen({0.0, std::max(l, h)});
}

// Range of a function that is monotone between the listed critical points.
template <class F>
Interval monotone_pieces(const Interval& a, F&& f, std::span<const double> critical) {
  double lo = std::min(f(a.lo), f(a.hi));
  double hi = std::max(f(a.lo), f(a.hi));
  for (double c : critical) {
    if (a.lo < c && c < a.hi) {
      lo = std::min(lo, f(c));
      hi = std::max(hi, f(c));
    }
  }
  return widen({lo, hi});
}

namespace detail {
inline constexpr double kPi = 3.14159265358979323846;
}

// Exact range of sin over a, up to slack.
inline Interval isin(const Interval& a) {
  if (!(a.width() < 2.0 * detail::kPi)) return widen({-1.0, 1.0});
  double lo = std::min(std::sin(a.lo), std::sin(a.hi));
  double hi = std::max(std::sin(a.lo), std::sin(a.hi));
  // Maxima at pi/2 + 2k pi, minima at -pi/2 + 2k pi.
  const double kmax = std::ceil((a.lo - detail::kPi / 2) / (2 * detail::kPi));
  if (detail::kPi / 2 + 2 * detail::kPi * kmax <= a.hi) hi = 1.0;
  const double kmin = std::ceil((a.lo + detail::kPi / 2) / (2 * detail::kPi));
  if (-detail::kPi / 2 + 2 * detail::kPi * kmin <= a.hi) lo = -1.0;
  return widen({lo, hi});
}

inline Interval icos(const Interval& a) {
  if (!(a.width() < 2.0 * detail::kPi)) return widen({-1.0, 1.0});
  double lo = std::min(std::cos(a.lo), std::cos(a.hi));
  double hi = std::max(std::cos(a.lo), std::cos(a.hi));
  const double kmax = std::ceil(a.lo / (2 * detail::kPi));
  if (2 * detail::kPi * kmax <= a.hi) hi = 1.0;
  const double kmin = std::ceil((a.lo - detail::kPi) / (2 * detail::kPi));
  if (detail::kPi + 2 * detail::kPi * kmin <= a.hi) lo = -1.0;
  return widen({lo, hi});
}

}  // namespace sncbf
