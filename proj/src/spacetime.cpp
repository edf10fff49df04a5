#include "relboltz/spacetime.hpp"

#include "relboltz/errors.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace relboltz {

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::Minkowski: return "minkowski";
    case MetricKind::ConformalMinkowski: return "conformal_minkowski";
    case MetricKind::DiagonalWarped: return "diagonal_warped";
    case MetricKind::CustomAnalytic: return "custom";
  }
  return "unknown";
}

namespace {

Mat eta(int n) {
  Mat g = Mat::Identity(n, n);
  g(0, 0) = -1.0;
  return g;
}

std::string vec_json(const Vec& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr.dump();
}

}  // namespace

Box MetricSpec::default_chart(int n, double half_width) { return Box::cube(Vec::Zero(n), half_width); }

MetricSpec MetricSpec::minkowski(int n, std::optional<Box> chart) {
  if (n < 2 || n > kMaxDim) throw DomainError("metric dimension must lie in [2, " + std::to_string(kMaxDim) + "]");
  MetricSpec s;
  s.n_ = n;
  s.kind_ = MetricKind::Minkowski;
  s.chart_ = chart.value_or(default_chart(n));
  s.flat_ = true;
  s.constant_phi_ = 0.0;
  return s;
}

MetricSpec MetricSpec::conformal_minkowski(int n, ScalarField phi, std::optional<Box> chart) {
  MetricSpec s = minkowski(n, chart);
  s.kind_ = MetricKind::ConformalMinkowski;
  s.phi_ = std::move(phi);
  s.flat_ = false;
  s.constant_phi_.reset();
  return s;
}

MetricSpec MetricSpec::conformal_minkowski_affine(int n, double phi0, const Vec& dphi, std::optional<Box> chart) {
  Vec grad = dphi;
  ScalarField field{[phi0, grad](const Vec& x) { return phi0 + grad.dot(x); },
                    [grad](const Vec&) { return grad; }};
  MetricSpec s = conformal_minkowski(n, std::move(field), chart);
  if (grad.isZero(0.0)) {
    s.flat_ = true;
    s.constant_phi_ = phi0;
  }
  std::ostringstream os;
  os << R"({"phi0":)" << nlohmann::json(phi0).dump() << R"(,"dphi":)" << vec_json(grad) << "}";
  s.params_json_ = os.str();
  return s;
}

MetricSpec MetricSpec::diagonal_warped(int n, std::function<double(double)> a, std::function<double(double)> a_prime,
                                       std::optional<Box> chart) {
  MetricSpec s = minkowski(n, chart);
  s.kind_ = MetricKind::DiagonalWarped;
  s.a_ = std::move(a);
  s.a_prime_ = std::move(a_prime);
  s.flat_ = false;
  s.constant_phi_.reset();
  return s;
}

MetricSpec MetricSpec::diagonal_warped_polynomial(int n, std::vector<double> coeffs, std::optional<Box> chart) {
  auto a = [coeffs](double t) {
    double v = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) v = v * t + *it;
    return v;
  };
  auto ap = [coeffs](double t) {
    double v = 0.0;
    for (std::size_t k = coeffs.size(); k-- > 1;) v = v * t + static_cast<double>(k) * coeffs[k];
    return v;
  };
  MetricSpec s = diagonal_warped(n, a, ap, chart);
  s.params_json_ = std::string(R"({"a":)") + nlohmann::json(coeffs).dump() + "}";
  return s;
}

MetricSpec MetricSpec::custom(int n, std::function<Mat(const Vec&)> g, std::function<Christoffel(const Vec&)> gamma,
                              std::optional<Box> chart) {
  MetricSpec s = minkowski(n, chart);
  s.kind_ = MetricKind::CustomAnalytic;
  s.g_ = std::move(g);
  s.gamma_ = std::move(gamma);
  s.flat_ = false;
  s.constant_phi_.reset();
  return s;
}

bool MetricSpec::has_analytic_christoffel() const {
  switch (kind_) {
    case MetricKind::Minkowski:
    case MetricKind::DiagonalWarped: return true;
    case MetricKind::ConformalMinkowski: return static_cast<bool>(phi_.gradient) || flat_;
    case MetricKind::CustomAnalytic: return static_cast<bool>(gamma_);
  }
  return false;
}

std::optional<double> MetricSpec::constant_conformal_factor() const {
  if (!constant_phi_) return std::nullopt;
  return std::exp(*constant_phi_);
}

Mat MetricSpec::metric(const Vec& x) const {
  switch (kind_) {
    case MetricKind::Minkowski: return eta(n_);
    case MetricKind::ConformalMinkowski: return std::exp(phi_.value(x)) * eta(n_);
    case MetricKind::DiagonalWarped: {
      Mat g = Mat::Identity(n_, n_);
      double a = a_(x[0]);
      g *= a * a;
      g(0, 0) = -1.0;
      return g;
    }
    case MetricKind::CustomAnalytic: return g_(x);
  }
  return eta(n_);
}

Christoffel MetricSpec::christoffel_unchecked(const Vec& x) const {
  switch (kind_) {
    case MetricKind::Minkowski: return Christoffel::zero(n_);
    case MetricKind::ConformalMinkowski:
      if (flat_) return Christoffel::zero(n_);
      if (phi_.gradient) return conformal_christoffel(Christoffel::zero(n_), metric(x), phi_.gradient(x));
      return christoffel_fd(*this, x);
    case MetricKind::DiagonalWarped: {
      Christoffel c = Christoffel::zero(n_);
      double a = a_(x[0]);
      double ap = a_prime_(x[0]);
      for (int i = 1; i < n_; ++i) {
        c(0, i, i) = a * ap;
        c(i, 0, i) = ap / a;
        c(i, i, 0) = ap / a;
      }
      return c;
    }
    case MetricKind::CustomAnalytic:
      if (gamma_) return gamma_(x);
      return christoffel_fd(*this, x);
  }
  return Christoffel::zero(n_);
}

Mat metric_at(const MetricSpec& spec, const Vec& x) {
  if (x.size() != spec.dim()) throw DomainError("metric_at: coordinate dimension mismatch");
  if (!spec.in_chart(x)) throw DomainError("metric_at: point outside the chart box");
  Mat g = spec.metric(x);
  if (!g.allFinite()) throw EvaluationError("metric_at: non-finite metric component");
  if (!(g(0, 0) < 0.0)) throw EvaluationError("metric_at: g00 must be negative");
  return g;
}

Christoffel christoffel(const MetricSpec& spec, const Vec& x) {
  Mat g = metric_at(spec, x);
  Eigen::FullPivLU<Mat> lu(g);
  if (!lu.isInvertible()) throw SingularMetricError("christoffel: metric not invertible");
  return spec.christoffel_unchecked(x);
}

Christoffel christoffel_fd(const MetricSpec& spec, const Vec& x, double rel_step) {
  const int n = spec.dim();
  Mat g = spec.metric(x);
  Eigen::FullPivLU<Mat> lu(g);
  if (!lu.isInvertible()) throw SingularMetricError("christoffel_fd: metric not invertible");
  Mat ginv = lu.inverse();
  std::array<Mat, kMaxDim> dg;
  for (int m = 0; m < n; ++m) {
    double h = rel_step * std::max(1.0, std::abs(x[m]));
    Vec xp = x, xm = x;
    xp[m] += h;
    xm[m] -= h;
    dg[m] = (spec.metric(xp) - spec.metric(xm)) / (2.0 * h);
  }
  Christoffel c = Christoffel::zero(n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += ginv(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
        c(k, i, j) = 0.5 * s;
      }
  return c;
}

Christoffel conformal_christoffel(const Christoffel& gamma, const Mat& g, const Vec& dphi) {
  const int n = static_cast<int>(g.rows());
  Eigen::FullPivLU<Mat> lu(g);
  if (!lu.isInvertible()) throw SingularMetricError("conformal_christoffel: metric not invertible");
  Vec raised = lu.inverse() * dphi;
  Christoffel out = gamma;
  out.n = n;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double corr = -g(i, j) * raised[k];
        if (k == j) corr += dphi[i];
        if (k == i) corr += dphi[j];
        out(k, i, j) += 0.5 * corr;
      }
  return out;
}

double inner(const MetricSpec& spec, const Vec& x, const Vec& u, const Vec& v) {
  return u.dot(spec.metric(x) * v);
}

CausalClass causal_class(const MetricSpec& spec, const Vec& x, const Vec& p) {
  if (p.isZero(0.0)) throw ZeroVectorError("causal_class: zero vector");
  Mat g = metric_at(spec, x);
  double norm = p.dot(g * p);
  double band = kNullTolerance * p.squaredNorm();
  CausalClass c{};
  if (norm > band) {
    c.kind = CausalKind::Spacelike;
    c.direction = TimeDirection::None;
    c.mass = 0.0;
    return c;
  }
  c.kind = norm < -band ? CausalKind::Timelike : CausalKind::Lightlike;
  c.mass = c.kind == CausalKind::Timelike ? std::sqrt(-norm) : 0.0;
  double time_pairing = g.row(0).dot(p);
  c.direction = time_pairing < 0.0 ? TimeDirection::Future : TimeDirection::Past;
  return c;
}

bool future_causal(const MetricSpec& spec, const Vec& x, const Vec& p) {
  Mat g = spec.metric(x);
  double norm = p.dot(g * p);
  if (norm > kNullTolerance * p.squaredNorm()) return false;
  return g.row(0).dot(p) < 0.0 && !p.isZero(0.0);
}

bool future_timelike(const MetricSpec& spec, const Vec& x, const Vec& p) {
  Mat g = spec.metric(x);
  double norm = p.dot(g * p);
  if (norm >= -kNullTolerance * p.squaredNorm()) return false;
  return g.row(0).dot(p) < 0.0;
}

Vec null_completion(const MetricSpec& spec, const Vec& x, const Vec& spatial) {
  const int n = spec.dim();
  Mat g = spec.metric(x);
  Vec k = Vec::Zero(n);
  k.tail(n - 1) = spatial;
  // g00 k0^2 + 2 b k0 + c = 0
  double g00 = g(0, 0);
  double b = g.row(0).tail(n - 1).dot(spatial);
  double c = spatial.dot(g.bottomRightCorner(n - 1, n - 1) * spatial);
  double disc = b * b - g00 * c;
  if (disc < 0.0) throw EvaluationError("null_completion: no real root");
  // Future-directed root: g(d0, k) = g00 k0 + b < 0.
  k[0] = (-b - std::sqrt(disc)) / g00;
  return k;
}

Vec geodesic_acceleration(const MetricSpec& spec, const Vec& x, const Vec& p) {
  const int n = spec.dim();
  Vec a = Vec::Zero(n);
  if (spec.flat_coordinates()) return a;
  Christoffel c = spec.christoffel_unchecked(x);
  for (int k = 0; k < n; ++k) {
    double s = 0.0;
    for (int l = 0; l < n; ++l)
      for (int m = 0; m < n; ++m) s += c(k, l, m) * p[l] * p[m];
    a[k] = -s;
  }
  return a;
}

bool lorentzian_signature(const MetricSpec& spec, const Vec& x) {
  Mat g = metric_at(spec, x);
  if ((g - g.transpose()).cwiseAbs().maxCoeff() != 0.0) return false;
  Eigen::SelfAdjointEigenSolver<Mat> eig(g);
  const auto& ev = eig.eigenvalues();
  int negative = 0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < 0.0) ++negative;
    if (ev[i] == 0.0) return false;
  }
  return negative == 1;
}

}  // namespace relboltz
