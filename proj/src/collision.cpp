#include "relboltz/collision.hpp"

#include "relboltz/errors.hpp"
#include "relboltz/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace relboltz {

namespace {

// Composite Gauss-Legendre nodes along one axis.
struct AxisRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

AxisRule axis_rule(const Interval& side, int order, int panels) {
  const GaussRule& rule = gauss_legendre(order);
  AxisRule out;
  double width = side.width() / panels;
  for (int k = 0; k < panels; ++k) {
    double mid = side.lo + (k + 0.5) * width;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      out.nodes.push_back(mid + 0.5 * width * rule.nodes[q]);
      out.weights.push_back(0.5 * width * rule.weights[q]);
    }
  }
  return out;
}

// Tensor rule over a box, nodes enumerated with the last axis fastest.
struct BoxRule {
  std::vector<AxisRule> axes;
  std::size_t size() const {
    std::size_t s = 1;
    for (const auto& a : axes) s *= a.nodes.size();
    return s;
  }
  // Node and weight of flat index k.
  double node(std::size_t k, Vec& out) const {
    const int n = static_cast<int>(axes.size());
    double w = 1.0;
    for (int a = n - 1; a >= 0; --a) {
      std::size_t m = axes[a].nodes.size();
      std::size_t i = k % m;
      k /= m;
      out[a] = axes[a].nodes[i];
      w *= axes[a].weights[i];
    }
    return w;
  }
};

BoxRule box_rule(const Box& box, int order, int panels) {
  BoxRule r;
  for (int a = 0; a < box.dim(); ++a) r.axes.push_back(axis_rule(box[a], order, panels));
  return r;
}

// sum_{i,j} a[i] b[j] prod_k T_k[i_k][j_k] for tensors a, b over two tensor grids, by
// contracting one axis at a time. T_k is row-major with shape (m_k, l_k).
double separable_pair_sum(std::vector<double> a, const std::vector<double>& b, const std::vector<int>& m,
                          const std::vector<int>& l, const std::vector<std::vector<double>>& tables) {
  const int n = static_cast<int>(m.size());
  std::size_t outer = 1;
  for (int k = 0; k < n; ++k) {
    std::size_t inner = 1;
    for (int r = k + 1; r < n; ++r) inner *= static_cast<std::size_t>(m[r]);
    std::vector<double> next(outer * l[k] * inner, 0.0);
    const std::vector<double>& t = tables[k];
    for (std::size_t p = 0; p < outer; ++p)
      for (int i = 0; i < m[k]; ++i) {
        const double* src = &a[(p * m[k] + i) * inner];
        for (int j = 0; j < l[k]; ++j) {
          double tij = t[i * l[k] + j];
          if (tij == 0.0) continue;
          double* dst = &next[(p * l[k] + j) * inner];
          for (std::size_t r = 0; r < inner; ++r) dst[r] += tij * src[r];
        }
      }
    a = std::move(next);
    outer *= static_cast<std::size_t>(l[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) total += a[k] * b[k];
  return total;
}

std::vector<int> axis_sizes(const BoxRule& r) {
  std::vector<int> s;
  for (const auto& a : r.axes) s.push_back(static_cast<int>(a.nodes.size()));
  return s;
}

bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// Rule over the panels of a fixed lattice on the kernel box that meet the density's
// momentum support. Shared lattice nodes keep the operator exactly bilinear.
BoxRule snapped_rule(const Box& kernel_box, const PhaseDensity& u, const CollisionOptions& opts) {
  const Box& mom = u.support().mom;
  const GaussRule& rule = gauss_legendre(opts.order);
  BoxRule r;
  for (int a = 0; a < kernel_box.dim(); ++a) {
    AxisRule axis;
    const Interval& side = kernel_box[a];
    double width = side.width() / opts.panels;
    for (int k = 0; k < opts.panels; ++k) {
      double lo = side.lo + k * width, hi = lo + width;
      if (hi <= mom[a].lo || lo >= mom[a].hi) continue;
      double mid = 0.5 * (lo + hi);
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        axis.nodes.push_back(mid + 0.5 * width * rule.nodes[q]);
        axis.weights.push_back(0.5 * width * rule.weights[q]);
      }
    }
    if (axis.nodes.empty()) return {};
    r.axes.push_back(std::move(axis));
  }
  return r;
}

bool density_active(const PhaseDensity& u, const Vec& x) {
  return !u.is_zero() && u.support().base.contains(x) && u.may_be_nonzero_at(x);
}

double kernel_prefactor(const CollisionKernel& A, const Vec& x, const Vec& p) {
  if (A.is_zero()) return 0.0;
  double s = A.spatial(x);
  if (s == 0.0) return 0.0;
  double b = A.shell(p);
  if (b == 0.0) return 0.0;
  return A.params().amplitude * s * b;
}

}  // namespace

CollisionKernel CollisionKernel::builtin(const MetricSpec& spec, const KernelParams& params) {
  const int n = spec.dim();
  if (!(params.r0 < params.r1)) throw KernelParamError("builtin_kernel: need r0 < r1");
  if (params.r0 < 0.0) throw KernelParamError("builtin_kernel: r0 must be nonnegative");
  if (params.W.dim() != n || !params.W.bounded() || params.W.empty())
    throw KernelParamError("builtin_kernel: W must be a bounded nonempty box of the spacetime dimension");
  for (const Box* b : {&params.q_box, &params.pp_box, &params.qp_box})
    if (b->dim() != n || !b->bounded() || b->empty())
      throw KernelParamError("builtin_kernel: momentum boxes must be bounded and nonempty");
  if (params.spatial_margin <= 0.0 || params.momentum_margin <= 0.0)
    throw KernelParamError("builtin_kernel: margins must be positive");
  if (!(params.amplitude >= 0.0)) throw KernelParamError("builtin_kernel: amplitude must be nonnegative");
  Box outer = params.W.inflated(params.spatial_margin);
  for (int i = 0; i < n; ++i)
    if (!spec.chart()[i].contains(params.W[i].lo) || !spec.chart()[i].contains(params.W[i].hi))
      throw DomainError("builtin_kernel: W must lie inside the chart");

  CollisionKernel k;
  k.dim_ = n;
  k.params_ = params;
  k.spatial_support_ = outer.intersect(spec.chart());
  k.l1_bound_ = params.amplitude * k.q_support().volume() * k.pp_support().volume();
  return k;
}

CollisionKernel CollisionKernel::zero(const MetricSpec& spec) {
  const int n = spec.dim();
  KernelParams params;
  params.W = Box::cube(zeros(n), 0.5);
  params.q_box = params.pp_box = params.qp_box = Box::cube(zeros(n), 0.5);
  params.amplitude = 0.0;
  return builtin(spec, params);
}

CollisionKernel CollisionKernel::with_spatial_weight(std::function<double(const Vec&)> w) const {
  CollisionKernel k = *this;
  if (weight_) {
    auto prev = weight_;
    k.weight_ = [prev, w = std::move(w)](const Vec& x) { return prev(x) * w(x); };
  } else {
    k.weight_ = std::move(w);
  }
  return k;
}

double CollisionKernel::spatial(const Vec& x) const {
  if (!spatial_support_.contains(x)) return 0.0;
  double c = plateau(x, params_.W, params_.spatial_margin);
  if (c != 0.0 && weight_) c *= weight_(x);
  return c;
}

double CollisionKernel::shell(const Vec& p) const {
  return smooth_step((p.norm() - params_.r0) / (params_.r1 - params_.r0));
}

double CollisionKernel::operator()(const Vec& x, const Vec& p, const Vec& q, const Vec& pp, const Vec& qp) const {
  double v = params_.amplitude;
  if (v == 0.0) return 0.0;
  v *= spatial(x);
  if (v == 0.0) return 0.0;
  v *= shell(p);
  if (v == 0.0) return 0.0;
  return v * gamma_q(q) * gamma_pp(pp) * gamma_qp(qp);
}

double sigma_quadrature(const SigmaQuadRule& rule, const Vec& p,
                        const std::function<double(const Vec&, const Vec&, const Vec&)>& integrand) {
  const int n = static_cast<int>(p.size());
  if (rule.nodes_q < 2 || rule.nodes_pp < 2 || rule.panels < 1)
    throw EvaluationError("sigma_quadrature: need at least 2 nodes per dimension");
  if (rule.q_box.dim() != n || rule.pp_box.dim() != n || !rule.q_box.bounded() || !rule.pp_box.bounded())
    throw EvaluationError("sigma_quadrature: integration boxes must be bounded");
  if (rule.q_box.empty() || rule.pp_box.empty()) return 0.0;
  BoxRule qr = box_rule(rule.q_box, rule.nodes_q, rule.panels);
  BoxRule pr = box_rule(rule.pp_box, rule.nodes_pp, rule.panels);
  Vec q(n), pp(n), qp(n);
  double total = 0.0;
  for (std::size_t i = 0; i < qr.size(); ++i) {
    double wq = qr.node(i, q);
    for (std::size_t j = 0; j < pr.size(); ++j) {
      double wp = pr.node(j, pp);
      qp = (p + q) - pp;
      total += wq * wp * integrand(q, pp, qp);
    }
  }
  return total;
}

double q_gain(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& u1, const PhaseDensity& u2,
              const Vec& x, const Vec& p, const CollisionOptions& opts) {
  double pre = kernel_prefactor(A, x, p);
  if (pre == 0.0 || !density_active(u1, x) || !density_active(u2, x)) return 0.0;
  const int n = static_cast<int>(p.size());
  // Chart (p', q') with q = p' + q' - p; the change from (q, p') has unit Jacobian.
  BoxRule pr = snapped_rule(A.pp_support(), u1, opts);
  BoxRule qr = snapped_rule(A.qp_support(), u2, opts);
  if (pr.axes.empty() || qr.axes.empty()) return 0.0;
  std::vector<double> a(pr.size()), b(qr.size());
  std::vector<Vec> pp_nodes(pr.size()), qp_nodes(qr.size());
  Vec v(n);
  for (std::size_t i = 0; i < pr.size(); ++i) {
    double w = pr.node(i, v);
    pp_nodes[i] = v;
    double g = A.gamma_pp(v);
    a[i] = g == 0.0 ? 0.0 : w * g * u1(x, v);
  }
  if (all_zero(a)) return 0.0;
  for (std::size_t j = 0; j < qr.size(); ++j) {
    double w = qr.node(j, v);
    qp_nodes[j] = v;
    double g = A.gamma_qp(v);
    b[j] = g == 0.0 ? 0.0 : w * g * u2(x, v);
  }
  if (all_zero(b)) return 0.0;

  double total = 0.0;
  if (opts.causal_filter) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == 0.0 || !future_causal(spec, x, pp_nodes[i])) continue;
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (b[j] == 0.0 || !future_causal(spec, x, qp_nodes[j])) continue;
        Vec q = pp_nodes[i] + qp_nodes[j] - p;
        if (!future_causal(spec, x, q)) continue;
        total += a[i] * b[j] * A.gamma_q(q);
      }
    }
  } else {
    const KernelParams& kp = A.params();
    std::vector<std::vector<double>> tables(n);
    for (int k = 0; k < n; ++k) {
      const auto& pn = pr.axes[k].nodes;
      const auto& qn = qr.axes[k].nodes;
      tables[k].resize(pn.size() * qn.size());
      for (std::size_t i = 0; i < pn.size(); ++i)
        for (std::size_t j = 0; j < qn.size(); ++j)
          tables[k][i * qn.size() + j] = plateau(pn[i] + qn[j] - p[k], kp.q_box[k], kp.momentum_margin);
    }
    total = separable_pair_sum(std::move(a), b, axis_sizes(pr), axis_sizes(qr), tables);
  }
  return -pre * total;
}

double q_loss(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& u1, const PhaseDensity& u2,
              const Vec& x, const Vec& p, const CollisionOptions& opts) {
  double pre = kernel_prefactor(A, x, p);
  if (pre == 0.0 || !density_active(u1, x) || !density_active(u2, x)) return 0.0;
  double lead = u1(x, p);
  if (lead == 0.0) return 0.0;
  const int n = static_cast<int>(p.size());
  BoxRule qr = snapped_rule(A.q_support(), u2, opts);
  if (qr.axes.empty()) return 0.0;
  BoxRule pr = box_rule(A.pp_support(), opts.order, opts.panels);
  std::vector<double> a(qr.size()), b(pr.size());
  std::vector<Vec> q_nodes(qr.size()), pp_nodes(pr.size());
  Vec v(n);
  for (std::size_t i = 0; i < qr.size(); ++i) {
    double w = qr.node(i, v);
    q_nodes[i] = v;
    double g = A.gamma_q(v);
    a[i] = g == 0.0 ? 0.0 : w * g * u2(x, v);
  }
  if (all_zero(a)) return 0.0;
  for (std::size_t j = 0; j < pr.size(); ++j) {
    double w = pr.node(j, v);
    pp_nodes[j] = v;
    b[j] = w * A.gamma_pp(v);
  }

  double total = 0.0;
  if (opts.causal_filter) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == 0.0 || !future_causal(spec, x, q_nodes[i])) continue;
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (b[j] == 0.0 || !future_causal(spec, x, pp_nodes[j])) continue;
        Vec qp = (p + q_nodes[i]) - pp_nodes[j];
        if (!future_causal(spec, x, qp)) continue;
        total += a[i] * b[j] * A.gamma_qp(qp);
      }
    }
  } else {
    const KernelParams& kp = A.params();
    std::vector<std::vector<double>> tables(n);
    for (int k = 0; k < n; ++k) {
      const auto& qn = qr.axes[k].nodes;
      const auto& pn = pr.axes[k].nodes;
      tables[k].resize(qn.size() * pn.size());
      for (std::size_t i = 0; i < qn.size(); ++i)
        for (std::size_t j = 0; j < pn.size(); ++j)
          tables[k][i * pn.size() + j] = plateau((p[k] + qn[i]) - pn[j], kp.qp_box[k], kp.momentum_margin);
    }
    total = separable_pair_sum(std::move(a), b, axis_sizes(qr), axis_sizes(pr), tables);
  }
  return pre * lead * total;
}

double q_full(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& u1, const PhaseDensity& u2,
              const Vec& x, const Vec& p, const CollisionOptions& opts) {
  return q_loss(spec, A, u1, u2, x, p, opts) + q_gain(spec, A, u1, u2, x, p, opts);
}

double q_along_flow(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& u, const PhaseDensity& v,
                    const Vec& x, const Vec& p, const CollisionOptions& opts) {
  if (A.is_zero() || u.is_zero() || v.is_zero()) return 0.0;
  if (!future_causal(spec, x, p)) return 0.0;
  BackwardTrace trace(spec, x, p, A.spatial_support());
  const GaussRule& rule = gauss_legendre(8);
  double total = 0.0;
  for (const Interval& iv : trace.inside()) {
    std::vector<double> bps = trace.breakpoints(iv, 4);
    for (std::size_t k = 0; k + 1 < bps.size(); ++k) {
      double mid = 0.5 * (bps[k] + bps[k + 1]);
      double half = 0.5 * (bps[k + 1] - bps[k]);
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        PhaseState st = trace.at(mid + half * rule.nodes[q]);
        total += half * rule.weights[q] * q_full(spec, A, u, v, st.x, st.p, opts);
      }
    }
  }
  return total;
}

namespace {

class CollisionSourceImpl final : public DensityImpl {
 public:
  CollisionSourceImpl(MetricSpec spec, CollisionKernel A, PhaseDensity u, PhaseDensity v, bool symmetrise,
                      CollisionOptions opts)
      : spec_(std::move(spec)), A_(std::move(A)), u_(std::move(u)), v_(std::move(v)), sym_(symmetrise), opts_(opts) {}

  double eval(const Vec& x, const Vec& p) const override {
    double out = q_full(spec_, A_, u_, v_, x, p, opts_);
    if (sym_) out += q_full(spec_, A_, v_, u_, x, p, opts_);
    return out;
  }

  bool may_be_nonzero_at(const Vec& x) const override {
    return A_.spatial(x) != 0.0 && u_.may_be_nonzero_at(x) && v_.may_be_nonzero_at(x);
  }

 private:
  MetricSpec spec_;
  CollisionKernel A_;
  PhaseDensity u_, v_;
  bool sym_;
  CollisionOptions opts_;
};

// Momenta where Q[u1,u2](x,.) can be nonzero: loss needs p in supp u1, gain needs
// p = p' + q' - q with each factor in its box.
Box source_momenta(const CollisionKernel& A, const PhaseDensity& u1, const PhaseDensity& u2) {
  const int n = A.dim();
  Box loss = u1.support().mom;
  Box pp = A.pp_support().intersect(u1.support().mom);
  Box qp = A.qp_support().intersect(u2.support().mom);
  Box q = A.q_support();
  Box gain(n);
  for (int i = 0; i < n; ++i) gain[i] = {pp[i].lo + qp[i].lo - q[i].hi, pp[i].hi + qp[i].hi - q[i].lo};
  if (pp.empty() || qp.empty()) return loss;
  return loss.hull(gain);
}

}  // namespace

PhaseDensity collision_source(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& u,
                              const PhaseDensity& v, bool symmetrise, const CollisionOptions& opts) {
  const int n = spec.dim();
  if (A.is_zero() || u.is_zero() || v.is_zero()) return PhaseDensity::zero(n);
  Box base = A.spatial_support().intersect(u.support().base).intersect(v.support().base);
  if (base.empty()) return PhaseDensity::zero(n);
  Box mom = source_momenta(A, u, v);
  if (symmetrise) mom = mom.hull(source_momenta(A, v, u));
  return {n, DensityRep::CollisionSource,
          std::make_shared<CollisionSourceImpl>(spec, A, u, v, symmetrise, opts), {base, mom}, false};
}

double kernel_l1(const CollisionKernel& A, const Vec& x, const Vec& p, int nodes) {
  if (A.is_zero()) return 0.0;
  double pre = A.params().amplitude * A.spatial(x) * A.shell(p);
  if (pre == 0.0) return 0.0;
  SigmaQuadRule rule{nodes, nodes, 1, A.q_support(), A.pp_support()};
  return pre * sigma_quadrature(rule, p, [&](const Vec& q, const Vec& pp, const Vec& qp) {
           return A.gamma_q(q) * A.gamma_pp(pp) * A.gamma_qp(qp);
         });
}

namespace {

Vec sample_in(const Box& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec v(b.dim());
  for (int i = 0; i < b.dim(); ++i) v[i] = b[i].lo + b[i].width() * unit(rng);
  return v;
}

Vec random_unit(int m, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Vec v(m);
  do {
    for (int i = 0; i < m; ++i) v[i] = gauss(rng);
  } while (v.norm() < 1e-8);
  return v / v.norm();
}

// Future null vector at x with Euclidean norm `size`.
Vec null_of_size(const MetricSpec& spec, const Vec& x, const Vec& spatial_dir, double size) {
  Vec k = null_completion(spec, x, spatial_dir);
  return k * (size / k.norm());
}

// Future timelike vector at x: null direction tilted inward, Euclidean norm `size`.
Vec timelike_of_size(const MetricSpec& spec, const Vec& x, const Vec& spatial_dir, double tilt, double size) {
  Vec k = null_completion(spec, x, spatial_dir);
  k[0] *= 1.0 + tilt;
  return k * (size / k.norm());
}

}  // namespace

AdmissibilityReport check_admissible(const MetricSpec& spec, const CollisionKernel& A, std::uint64_t seed) {
  const int n = spec.dim();
  const KernelParams& kp = A.params();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AdmissibilityReport rep;
  rep.declared_l1 = A.l1_bound();

  // Condition 2: compact spatial support containing W.
  bool ok = A.spatial_support().bounded();
  Box chart = spec.chart();
  for (int k = 0, hits = 0; k < 200000 && hits < 500; ++k) {
    Vec x = sample_in(chart, rng);
    if (A.spatial_support().contains(x)) continue;
    ++hits;
    Vec p = timelike_of_size(spec, x, random_unit(n - 1, rng), 0.5, kp.r1 * 2.0);
    if (A(x, p, sample_in(kp.q_box, rng), sample_in(kp.pp_box, rng), sample_in(kp.qp_box, rng)) != 0.0) ok = false;
  }
  for (int k = 0; k < 500; ++k)
    if (A.spatial(sample_in(kp.W, rng)) != 1.0) ok = false;
  rep.cond2 = ok && !A.is_zero();

  // Condition 3: lightlike p over W with timelike p', q' and causal q, all in the inner boxes.
  rep.cond3_min_value = kInf;
  for (int k = 0; k < 400000 && rep.cond3_samples < 300; ++k) {
    Vec x = sample_in(kp.W, rng);
    Vec p = null_of_size(spec, x, random_unit(n - 1, rng), kp.r1 * (1.0 + 2.0 * unit(rng)));
    Vec pp = sample_in(kp.pp_box, rng);
    Vec qp = sample_in(kp.qp_box, rng);
    if (!future_timelike(spec, x, pp) || !future_timelike(spec, x, qp)) continue;
    Vec q = pp + qp - p;
    if (!kp.q_box.contains(q) || !future_causal(spec, x, q)) continue;
    ++rep.cond3_samples;
    rep.cond3_min_value = std::min(rep.cond3_min_value, A(x, p, q, pp, qp));
  }
  if (rep.cond3_samples == 0) rep.cond3_min_value = 0.0;

  // Condition 4: numerical L1 norms over random (x, p), including large momenta.
  for (int k = 0; k < 200; ++k) {
    Vec x = sample_in(A.spatial_support(), rng);
    double size = kp.r0 * std::pow(100.0 / std::max(kp.r0, 1e-3), unit(rng));
    Vec dir = random_unit(n - 1, rng);
    Vec p = k % 2 ? null_of_size(spec, x, dir, size) : timelike_of_size(spec, x, dir, unit(rng), size);
    rep.cond4_max_l1 = std::max(rep.cond4_max_l1, kernel_l1(A, x, p));
  }

  // Condition 5: F(lambda) = |A(x, lambda p, .)|_L1 vanishes identically near 0.
  Vec x = kp.W.center();
  Vec p = null_of_size(spec, x, random_unit(n - 1, rng), 1.0);
  rep.cond5_vanishes = true;
  const int steps = 40;
  double lambda_max = 2.0 * kp.r1;
  for (int k = 0; k <= steps; ++k) {
    double lambda = lambda_max * k / steps;
    double f = kernel_l1(A, x, lambda * p);
    rep.cond5_profile.push_back({lambda, f});
    if (lambda * p.norm() < kp.r0 && f != 0.0) rep.cond5_vanishes = false;
  }
  return rep;
}

double measure_collision_constant(const MetricSpec& spec, const CollisionKernel& A, std::uint64_t seed, int samples) {
  if (A.is_zero()) return 0.0;
  const int n = spec.dim();
  const KernelParams& kp = A.params();
  const Box& K = A.spatial_support();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const GaussRule& rule = gauss_legendre(8);
  // |Q[u,v](y,q)| <= 2 |u| |v| C chi(y) beta(|q|_e), so C_A is 2C times the sup of the
  // flow integral of chi * beta.
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    Vec x = sample_in(K, rng);
    if (k % 2 == 0) x[0] = K[0].hi;
    double size = kp.r0 + (3.0 * kp.r1 - kp.r0) * unit(rng);
    Vec dir = random_unit(n - 1, rng);
    Vec p = k % 3 == 0 ? null_of_size(spec, x, dir, size) : timelike_of_size(spec, x, dir, 2.0 * unit(rng), size);
    BackwardTrace trace(spec, x, p, K);
    double total = 0.0;
    for (const Interval& iv : trace.inside()) {
      std::vector<double> bps = trace.breakpoints(iv, 4);
      for (std::size_t b = 0; b + 1 < bps.size(); ++b) {
        double mid = 0.5 * (bps[b] + bps[b + 1]);
        double half = 0.5 * (bps[b + 1] - bps[b]);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
          PhaseState st = trace.at(mid + half * rule.nodes[q]);
          total += half * rule.weights[q] * A.spatial(st.x) * A.shell(st.p);
        }
      }
    }
    worst = std::max(worst, total);
  }
  return 2.0 * A.l1_bound() * worst * 1.05;
}

}  // namespace relboltz
