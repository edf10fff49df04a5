#pragma once

#include "relboltz/types.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace relboltz {

enum class MetricKind { Minkowski, ConformalMinkowski, DiagonalWarped, CustomAnalytic };

std::string to_string(MetricKind kind);

// Gamma^a_{lm}, stored densely at the maximum dimension.
struct Christoffel {
  int n = 0;
  std::array<double, kMaxDim * kMaxDim * kMaxDim> v{};

  static Christoffel zero(int n) {
    Christoffel c;
    c.n = n;
    return c;
  }
  double& operator()(int a, int l, int m) { return v[(a * kMaxDim + l) * kMaxDim + m]; }
  double operator()(int a, int l, int m) const { return v[(a * kMaxDim + l) * kMaxDim + m]; }
};

struct ScalarField {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;  // optional
};

// Lorentzian metric of product form on a coordinate box, with d/dx0 future-pointing.
class MetricSpec {
 public:
  static Box default_chart(int n, double half_width = 10.0);

  static MetricSpec minkowski(int n, std::optional<Box> chart = {});
  // g = exp(phi) * eta.
  static MetricSpec conformal_minkowski(int n, ScalarField phi, std::optional<Box> chart = {});
  // phi(x) = phi0 + dphi . x
  static MetricSpec conformal_minkowski_affine(int n, double phi0, const Vec& dphi, std::optional<Box> chart = {});
  // g = -dt^2 + a(t)^2 * euclidean.
  static MetricSpec diagonal_warped(int n, std::function<double(double)> a, std::function<double(double)> a_prime,
                                    std::optional<Box> chart = {});
  // a(t) = sum_k coeffs[k] t^k
  static MetricSpec diagonal_warped_polynomial(int n, std::vector<double> coeffs, std::optional<Box> chart = {});
  // Componentwise g(x); gamma empty means finite differences.
  static MetricSpec custom(int n, std::function<Mat(const Vec&)> g,
                           std::function<Christoffel(const Vec&)> gamma = {}, std::optional<Box> chart = {});

  int dim() const { return n_; }
  MetricKind kind() const { return kind_; }
  const Box& chart() const { return chart_; }
  bool in_chart(const Vec& x) const { return chart_.contains(x); }

  // True when the Christoffel symbols vanish identically in the chart.
  bool flat_coordinates() const { return flat_; }
  bool has_analytic_christoffel() const;

  // exp(phi) for Minkowski (1) and constant conformal rescalings; empty otherwise.
  std::optional<double> constant_conformal_factor() const;

  // Unchecked evaluation for inner loops.
  Mat metric(const Vec& x) const;
  Christoffel christoffel_unchecked(const Vec& x) const;

  // Serialisable parameters (kind-specific); empty object for custom metrics.
  const std::string& params_json() const { return params_json_; }

 private:
  int n_ = 0;
  MetricKind kind_ = MetricKind::Minkowski;
  Box chart_;
  bool flat_ = true;
  ScalarField phi_;
  std::optional<double> constant_phi_;
  std::function<double(double)> a_, a_prime_;
  std::function<Mat(const Vec&)> g_;
  std::function<Christoffel(const Vec&)> gamma_;
  std::string params_json_ = "{}";
};

inline constexpr double kNullTolerance = 1e-9;

enum class CausalKind { Timelike, Lightlike, Spacelike };
enum class TimeDirection { Future, Past, None };

struct CausalClass {
  CausalKind kind;
  TimeDirection direction;
  double mass;  // sqrt(-g(p,p)) for causal p, else 0
};

// Checked metric evaluation: chart membership, finiteness, product-form sign.
Mat metric_at(const MetricSpec& spec, const Vec& x);

Christoffel christoffel(const MetricSpec& spec, const Vec& x);

// Central differences of the metric with relative step rel_step.
Christoffel christoffel_fd(const MetricSpec& spec, const Vec& x, double rel_step = 1e-5);

// Gamma~^k_ij = Gamma^k_ij + (d_k^j d_i phi + d_k^i d_j phi - g_ij g^kl d_l phi) / 2
Christoffel conformal_christoffel(const Christoffel& gamma, const Mat& g, const Vec& dphi);

CausalClass causal_class(const MetricSpec& spec, const Vec& x, const Vec& p);

double inner(const MetricSpec& spec, const Vec& x, const Vec& u, const Vec& v);

// Fast membership in the closed future causal cone (null band included).
bool future_causal(const MetricSpec& spec, const Vec& x, const Vec& p);
bool future_timelike(const MetricSpec& spec, const Vec& x, const Vec& p);

// Future null vector with the given spatial part.
Vec null_completion(const MetricSpec& spec, const Vec& x, const Vec& spatial);

// -Gamma^a_{lm} p^l p^m
Vec geodesic_acceleration(const MetricSpec& spec, const Vec& x, const Vec& p);

// Eigenvalue signature (-,+,...,+) at x.
bool lorentzian_signature(const MetricSpec& spec, const Vec& x);

}  // namespace relboltz
