#include "relboltz/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace relboltz {

namespace {

constexpr int kMaxOrder = 128;

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix of the Legendre recurrence.
GaussRule build_rule(int order) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    double b = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  GaussRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  for (int k = 0; k < order; ++k) {
    rule.nodes[k] = eig.eigenvalues()[k];
    double v0 = eig.eigenvectors()(0, k);
    rule.weights[k] = 2.0 * v0 * v0;
  }
  // Symmetrise to remove eigen-solver asymmetry at the last bit.
  for (int k = 0; k < order / 2; ++k) {
    int j = order - 1 - k;
    double x = 0.5 * (rule.nodes[j] - rule.nodes[k]);
    double w = 0.5 * (rule.weights[j] + rule.weights[k]);
    rule.nodes[k] = -x;
    rule.nodes[j] = x;
    rule.weights[k] = w;
    rule.weights[j] = w;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
  return rule;
}

}  // namespace

const GaussRule& gauss_legendre(int order) {
  if (order < 1 || order > kMaxOrder) throw std::invalid_argument("gauss_legendre: order out of range");
  static std::array<GaussRule, kMaxOrder + 1> cache;
  static std::array<std::once_flag, kMaxOrder + 1> flags;
  std::call_once(flags[order], [order] { cache[order] = build_rule(order); });
  return cache[order];
}

double integrate(const std::function<double(double)>& f, double a, double b, int panels, int order) {
  const GaussRule& rule = gauss_legendre(order);
  double width = (b - a) / panels;
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    double mid = a + (k + 0.5) * width;
    double half = 0.5 * width;
    double sum = 0.0;
    for (int i = 0; i < order; ++i) sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
    total += half * sum;
  }
  return total;
}

double bump(double r) {
  double r2 = r * r;
  if (r2 >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - r2));
}

double bump_mass() {
  static const double mass = integrate(bump, -1.0, 1.0, 256, 16);
  return mass;
}

double mollifier(double r, double eps) {
  double b = bump(r / eps);
  if (b == 0.0) return 0.0;
  return b / (eps * bump_mass());
}

double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  double a = std::exp(-1.0 / t);
  double b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

double plateau(double v, const Interval& inner, double margin) {
  if (inner.contains(v)) return 1.0;
  if (margin <= 0.0) return 0.0;
  if (v < inner.lo) return smooth_step((v - (inner.lo - margin)) / margin);
  return smooth_step(((inner.hi + margin) - v) / margin);
}

double plateau(const Vec& v, const Box& inner, double margin) {
  double out = 1.0;
  for (int i = 0; i < inner.dim() && out != 0.0; ++i) out *= plateau(v[i], inner[i], margin);
  return out;
}

TensorRule tensor_gauss(const Box& box, int order_per_dim) {
  const GaussRule& rule = gauss_legendre(order_per_dim);
  TensorRule out;
  out.dim = box.dim();
  if (box.empty()) return out;
  std::size_t count = 1;
  for (int d = 0; d < out.dim; ++d) count *= static_cast<std::size_t>(order_per_dim);
  out.nodes.reserve(count);
  out.weights.reserve(count);
  std::array<int, kMaxDim> idx{};
  for (std::size_t k = 0; k < count; ++k) {
    Vec node(out.dim);
    double w = 1.0;
    for (int d = 0; d < out.dim; ++d) {
      double half = 0.5 * box[d].width();
      node[d] = box[d].mid() + half * rule.nodes[idx[d]];
      w *= half * rule.weights[idx[d]];
    }
    out.nodes.push_back(node);
    out.weights.push_back(w);
    for (int d = out.dim - 1; d >= 0; --d) {
      if (++idx[d] < order_per_dim) break;
      idx[d] = 0;
    }
  }
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double lx = std::log(x[i]);
    double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace relboltz
