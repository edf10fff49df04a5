#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <initializer_list>
#include <limits>

namespace relboltz {

// Spacetime dimension is a runtime value, capped so small vectors stay on the stack.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline Vec vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double value : values) v[i++] = value;
  return v;
}

inline Vec zeros(int n) { return Vec::Zero(n); }

struct Interval {
  double lo = -kInf;
  double hi = kInf;

  bool contains(double v) const { return v >= lo && v <= hi; }
  bool empty() const { return !(lo <= hi); }
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
};

// Closed axis-aligned box; unbounded sides are infinite.
class Box {
 public:
  Box() = default;

  explicit Box(int dim) : dim_(dim) {}

  Box(std::initializer_list<Interval> sides) {
    for (const Interval& s : sides) sides_[dim_++] = s;
  }

  static Box unbounded(int dim) { return Box(dim); }

  static Box cube(const Vec& center, double half_width) {
    Box b(static_cast<int>(center.size()));
    for (int i = 0; i < b.dim_; ++i) b.sides_[i] = {center[i] - half_width, center[i] + half_width};
    return b;
  }

  static Box from_corners(const Vec& lo, const Vec& hi) {
    Box b(static_cast<int>(lo.size()));
    for (int i = 0; i < b.dim_; ++i) b.sides_[i] = {lo[i], hi[i]};
    return b;
  }

  int dim() const { return dim_; }
  Interval& operator[](int i) { return sides_[i]; }
  const Interval& operator[](int i) const { return sides_[i]; }

  bool contains(const Vec& v) const {
    for (int i = 0; i < dim_; ++i)
      if (!sides_[i].contains(v[i])) return false;
    return true;
  }

  bool empty() const {
    for (int i = 0; i < dim_; ++i)
      if (sides_[i].empty()) return true;
    return false;
  }

  bool bounded() const {
    for (int i = 0; i < dim_; ++i)
      if (!std::isfinite(sides_[i].lo) || !std::isfinite(sides_[i].hi)) return false;
    return true;
  }

  double volume() const {
    if (empty()) return 0.0;
    double v = 1.0;
    for (int i = 0; i < dim_; ++i) v *= sides_[i].width();
    return v;
  }

  Box intersect(const Box& other) const {
    Box b(dim_);
    for (int i = 0; i < dim_; ++i)
      b.sides_[i] = {std::max(sides_[i].lo, other.sides_[i].lo), std::min(sides_[i].hi, other.sides_[i].hi)};
    return b;
  }

  Box hull(const Box& other) const {
    Box b(dim_);
    for (int i = 0; i < dim_; ++i)
      b.sides_[i] = {std::min(sides_[i].lo, other.sides_[i].lo), std::max(sides_[i].hi, other.sides_[i].hi)};
    return b;
  }

  Box inflated(double margin) const {
    Box b = *this;
    for (int i = 0; i < dim_; ++i) b.sides_[i] = {sides_[i].lo - margin, sides_[i].hi + margin};
    return b;
  }

  Vec lo() const {
    Vec v(dim_);
    for (int i = 0; i < dim_; ++i) v[i] = sides_[i].lo;
    return v;
  }

  Vec hi() const {
    Vec v(dim_);
    for (int i = 0; i < dim_; ++i) v[i] = sides_[i].hi;
    return v;
  }

  Vec center() const {
    Vec v(dim_);
    for (int i = 0; i < dim_; ++i) v[i] = sides_[i].mid();
    return v;
  }

  bool contains_box(const Box& other) const {
    for (int i = 0; i < dim_; ++i)
      if (other.sides_[i].lo < sides_[i].lo || other.sides_[i].hi > sides_[i].hi) return false;
    return true;
  }

 private:
  int dim_ = 0;
  std::array<Interval, kMaxDim> sides_{};
};

// Support of a phase-space function: base-point box times momentum box.
struct PhaseBox {
  Box base;
  Box mom;

  static PhaseBox unbounded(int n) { return {Box::unbounded(n), Box::unbounded(n)}; }

  bool contains(const Vec& x, const Vec& p) const { return base.contains(x) && mom.contains(p); }
  PhaseBox hull(const PhaseBox& o) const { return {base.hull(o.base), mom.hull(o.mom)}; }
  PhaseBox intersect(const PhaseBox& o) const { return {base.intersect(o.base), mom.intersect(o.mom)}; }
  bool empty() const { return base.empty() || mom.empty(); }
};

struct PhaseState {
  Vec x;
  Vec p;
};

}  // namespace relboltz
