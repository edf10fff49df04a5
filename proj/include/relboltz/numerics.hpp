#pragma once

#include "relboltz/types.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace relboltz {

// Gauss-Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Cached per order; safe to call concurrently.
const GaussRule& gauss_legendre(int order);

// Composite Gauss-Legendre integral of a scalar function over [a, b].
double integrate(const std::function<double(double)>& f, double a, double b, int panels, int order = 8);

// exp(-1/(1-r^2)) on |r| < 1, zero elsewhere.
double bump(double r);

// Integral of bump over [-1, 1].
double bump_mass();

// bump(r / eps) / (eps * bump_mass()): integrates to 1, support [-eps, eps].
double mollifier(double r, double eps);

// Peak-normalised bump: 1 at r = 0.
inline double unit_bump(double r) { return std::exp(1.0) * bump(r); }

// C-infinity step: 0 for t <= 0, 1 for t >= 1.
double smooth_step(double t);

// 1 on [inner.lo, inner.hi], 0 outside the margin-widened interval, smooth between.
double plateau(double v, const Interval& inner, double margin);

// Tensor product of plateau factors over a box.
double plateau(const Vec& v, const Box& inner, double margin);

// Weighted nodes of a tensor Gauss-Legendre rule over a bounded box.
struct TensorRule {
  int dim = 0;
  std::vector<Vec> nodes;
  std::vector<double> weights;
};

TensorRule tensor_gauss(const Box& box, int order_per_dim);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace relboltz
