#include "relboltz/causal.hpp"

#include "relboltz/errors.hpp"
#include "relboltz/geodesics.hpp"
#include "relboltz/numerics.hpp"
#include "relboltz/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace relboltz {

namespace {

// Scale factor a(t) of a warped product, read back from g_11.
double warp(const MetricSpec& spec, double t) {
  Vec x = Vec::Zero(spec.dim());
  x[0] = t;
  return std::sqrt(spec.metric(x)(1, 1));
}

// Compare the conformal time gap with the coordinate distance.
CausalRelation classify(double time_gap, double distance) {
  double scale = std::max({1.0, std::abs(time_gap), distance});
  if (time_gap <= 0.0 && distance == 0.0) return CausalRelation::None;
  if (std::abs(time_gap - distance) <= 1e-12 * scale) return CausalRelation::Null;
  return time_gap > distance ? CausalRelation::Chronological : CausalRelation::None;
}

// Fixed fan of initial rapidity vectors in the unit ball of R^(n-1).
std::vector<Vec> unit_fan(int n, int count) {
  std::vector<Vec> out;
  const int dof = n - 1;
  if (dof == 1) {
    for (int k = 0; k < count; ++k) out.push_back(vec({-1.0 + 2.0 * k / std::max(1, count - 1)}));
    return out;
  }
  const int rings = 8;
  const int per_ring = std::max(1, count / rings);
  for (int r = 0; r < rings; ++r) {
    double radius = (r + 1.0) / rings;
    for (int j = 0; j < per_ring; ++j) {
      Vec d(dof);
      if (dof == 2) {
        double ang = 2.0 * std::numbers::pi * (j + 0.5 * (r % 2)) / per_ring;
        d << std::cos(ang), std::sin(ang);
      } else {
        // Fibonacci sphere
        double z = 1.0 - 2.0 * (j + 0.5) / per_ring;
        double ang = std::numbers::pi * (3.0 - std::sqrt(5.0)) * (j + r);
        double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        d << rho * std::cos(ang), rho * std::sin(ang), z;
      }
      out.push_back(radius * d);
    }
  }
  return out;
}

struct Shot {
  bool ok = false;
  Vec miss;
  double tau = 0.0;
};

class GeodesicShooter {
 public:
  GeodesicShooter(const MetricSpec& spec, const Vec& x, const Vec& y, const FanOptions& opts)
      : spec_(spec), x_(x), y_(y), opts_(opts) {}

  // Convex combination of d/dx0 and the null direction along r/|r|, weighted by tanh|r|.
  Vec velocity(const Vec& r) const {
    const int n = spec_.dim();
    Vec v = Vec::Zero(n);
    v[0] = 1.0;
    double rho = r.norm();
    if (rho == 0.0) return v;
    Vec k = null_completion(spec_, x_, r / rho);
    k /= k[0];
    double t = std::tanh(rho);
    return (1.0 - t) * v + t * k;
  }

  Shot shoot(const Vec& r) const {
    const int n = spec_.dim();
    Shot out;
    Vec v = velocity(r);
    double norm2 = -inner(spec_, x_, v, v);
    if (!(norm2 > 0.0)) return out;
    auto arrival = flow_to_time(spec_, x_, v, y_[0], (y_[0] - x_[0]) / opts_.steps);
    if (!arrival) return out;
    const Vec& pos = arrival->state.x;
    const double s = arrival->s;
    out.ok = true;
    out.miss = pos.tail(n - 1) - y_.tail(n - 1);
    out.tau = std::sqrt(norm2) * s;
    return out;
  }

  double miss_norm(const Vec& r) const {
    Shot s = shoot(r);
    return s.ok ? s.miss.norm() : kInf;
  }

  // Best of a scaled fan around centre.
  Vec zoom(const Vec& centre, double scale, const std::vector<Vec>& fan) const {
    Vec best = centre;
    double best_miss = miss_norm(centre);
    for (const Vec& d : fan) {
      Vec r = centre + scale * d;
      double m = miss_norm(r);
      if (m < best_miss) {
        best_miss = m;
        best = r;
      }
    }
    return best;
  }

  // Damped Newton on the spatial miss with a central-difference Jacobian.
  std::optional<Shot> polish(Vec r, double tol) const {
    const int dof = static_cast<int>(r.size());
    Shot cur = shoot(r);
    if (!cur.ok) return std::nullopt;
    for (int it = 0; it < 50; ++it) {
      if (cur.miss.norm() < tol) return cur;
      Mat J(dof, dof);
      for (int j = 0; j < dof; ++j) {
        double h = 1e-6 * std::max(1.0, r.norm());
        Vec rp = r, rm = r;
        rp[j] += h;
        rm[j] -= h;
        Shot a = shoot(rp), b = shoot(rm);
        if (!a.ok || !b.ok) return std::nullopt;
        J.col(j) = (a.miss - b.miss) / (2.0 * h);
      }
      Vec step = J.colPivHouseholderQr().solve(-cur.miss);
      if (!step.allFinite()) return std::nullopt;
      bool improved = false;
      for (double alpha = 1.0; alpha > 1e-9; alpha *= 0.5) {
        Vec trial = r + alpha * step;
        Shot t = shoot(trial);
        if (t.ok && t.miss.norm() < cur.miss.norm()) {
          r = trial;
          cur = t;
          improved = true;
          break;
        }
      }
      if (!improved) break;
    }
    if (cur.miss.norm() < tol) return cur;
    return std::nullopt;
  }

 private:
  const MetricSpec& spec_;
  Vec x_, y_;
  FanOptions opts_;
};

TimeSeparation fan_shooting(const MetricSpec& spec, const Vec& x, const Vec& y, const FanOptions& opts) {
  const int n = spec.dim();
  GeodesicShooter shooter(spec, x, y, opts);
  const std::vector<Vec> fan = unit_fan(n, opts.directions);

  struct Scored {
    Vec r;
    double miss;
  };
  std::vector<Scored> coarse;
  coarse.push_back({Vec::Zero(n - 1), shooter.miss_norm(Vec::Zero(n - 1))});
  for (const Vec& d : fan) {
    Vec r = opts.max_rapidity * d;
    coarse.push_back({r, shooter.miss_norm(r)});
  }
  std::sort(coarse.begin(), coarse.end(), [](const Scored& a, const Scored& b) { return a.miss < b.miss; });

  // Well-separated starting points.
  const double separation = opts.max_rapidity / 8.0;
  std::vector<Vec> starts;
  for (const Scored& c : coarse) {
    if (!std::isfinite(c.miss)) break;
    bool far = std::all_of(starts.begin(), starts.end(), [&](const Vec& s) { return (s - c.r).norm() > separation; });
    if (far) starts.push_back(c.r);
    if (static_cast<int>(starts.size()) >= opts.candidates) break;
  }

  TimeSeparation out;
  out.lower_bound = true;
  out.miss = coarse.empty() ? kInf : coarse.front().miss;
  const double tol = opts.miss_tolerance * (1.0 + (y - x).norm());
  for (Vec r : starts) {
    double scale = separation;
    for (int k = 0; k < opts.refinements; ++k, scale /= 8.0) r = shooter.zoom(r, scale, fan);
    auto hit = shooter.polish(r, tol);
    if (!hit) continue;
    if (out.lower_bound || hit->tau > out.value) {
      out.value = hit->tau;
      out.miss = hit->miss.norm();
      out.lower_bound = false;
    }
  }
  if (out.lower_bound) out.value = 0.0;
  // A miss of tol moves the target across the null cone by about tol, which changes tau by
  // about sqrt(2 tol |y - x|); anything smaller is indistinguishable from a null connection.
  out.resolution = std::sqrt(2.0 * tol * (y - x).norm());
  if (!out.lower_bound && out.value <= out.resolution) out.value = 0.0;
  return out;
}

}  // namespace

std::optional<CausalRelation> causal_relation(const MetricSpec& spec, const Vec& x, const Vec& y) {
  const int n = spec.dim();
  const double distance = (y.tail(n - 1) - x.tail(n - 1)).norm();
  switch (spec.kind()) {
    case MetricKind::Minkowski:
    case MetricKind::ConformalMinkowski: return classify(y[0] - x[0], distance);
    case MetricKind::DiagonalWarped: {
      // Conformal time: d(eta) = dt / a(t).
      double gap = 0.0;
      if (y[0] != x[0]) {
        double lo = std::min(x[0], y[0]), hi = std::max(x[0], y[0]);
        gap = integrate([&](double t) { return 1.0 / warp(spec, t); }, lo, hi, 8, 8);
        if (y[0] < x[0]) gap = -gap;
      }
      return classify(gap, distance);
    }
    case MetricKind::CustomAnalytic: return std::nullopt;
  }
  return std::nullopt;
}

TimeSeparation measure_time_separation(const MetricSpec& spec, const Vec& x, const Vec& y, const CausalOptions& opts) {
  if (!spec.in_chart(x) || !spec.in_chart(y)) throw DomainError("time_separation: points must lie in the chart");
  auto relation = causal_relation(spec, x, y);
  if (relation && *relation != CausalRelation::Chronological) return {};
  if (y[0] <= x[0]) return {};

  TauBackend backend = opts.backend;
  if (backend == TauBackend::Auto)
    backend = spec.constant_conformal_factor() ? TauBackend::Analytic : TauBackend::FanShooting;
  if (backend == TauBackend::Analytic) {
    auto c = spec.constant_conformal_factor();
    if (!c) throw DomainError("time_separation: analytic backend needs a constant conformal factor");
    const int n = spec.dim();
    Vec d = y - x;
    double q = d[0] * d[0] - d.tail(n - 1).squaredNorm();
    return {q > 0.0 ? std::sqrt(*c * q) : 0.0, false, 0.0};
  }
  return fan_shooting(spec, x, y, opts.fan);
}

bool chronological(const MetricSpec& spec, const Vec& x, const Vec& y, const CausalOptions& opts) {
  if (auto rel = causal_relation(spec, x, y)) return *rel == CausalRelation::Chronological;
  return measure_time_separation(spec, x, y, opts).value > opts.tau_tol;
}

Vec ObserverFamily::event(const Vec& a, double s) {
  Vec x(a.size() + 1);
  x[0] = s;
  x.tail(a.size()) = a;
  return x;
}

ObserverFamily ObserverFamily::from_params(int n, std::vector<Vec> params) {
  if (n < 2 || n > kMaxDim) throw DomainError("ObserverFamily: unsupported dimension");
  ObserverFamily f;
  f.n_ = n;
  bool found = false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != n - 1) throw DomainError("ObserverFamily: parameter has the wrong size");
    if (!found && params[i].norm() == 0.0) {
      f.hat_ = i;
      found = true;
    }
  }
  if (!found) throw DomainError("ObserverFamily: the parameter grid must contain a = 0");
  f.params_ = std::move(params);
  return f;
}

ObserverFamily ObserverFamily::grid(int n, const Box& a_box, const std::vector<int>& counts) {
  if (a_box.dim() != n - 1 || static_cast<int>(counts.size()) != n - 1)
    throw DomainError("ObserverFamily: grid box and counts need n-1 axes");
  std::vector<std::vector<double>> axes(n - 1);
  for (int i = 0; i < n - 1; ++i) {
    if (counts[i] < 1) throw DomainError("ObserverFamily: counts must be positive");
    if (counts[i] == 1) {
      axes[i].push_back(a_box[i].mid());
      continue;
    }
    for (int k = 0; k < counts[i]; ++k) {
      double v = a_box[i].lo + a_box[i].width() * k / (counts[i] - 1);
      // Symmetric grids: land exactly on 0.
      if (std::abs(v) < 1e-14 * std::max(1.0, a_box[i].width())) v = 0.0;
      axes[i].push_back(v);
    }
  }
  std::vector<Vec> params;
  std::vector<std::size_t> idx(n - 1, 0);
  while (true) {
    Vec a(n - 1);
    for (int i = 0; i < n - 1; ++i) a[i] = axes[i][idx[i]];
    params.push_back(a);
    int i = n - 2;
    while (i >= 0 && ++idx[i] == axes[i].size()) idx[i--] = 0;
    if (i < 0) break;
  }
  return from_params(n, std::move(params));
}

ObserverFamily ObserverFamily::standard(int n, double half_width, int per_axis) {
  Box b(n - 1);
  std::vector<int> counts(n - 1, 1);
  for (int i = 0; i < n - 1; ++i) b[i] = {-half_width, half_width};
  for (int i = 0; i < n - 2; ++i) counts[i] = per_axis;
  if (n == 2) b[0] = {0.0, 0.0};
  return grid(n, b, counts);
}

CausalDiamond CausalDiamond::on(const ObserverFamily& family, double s_minus, double s_plus) {
  if (!(-1.0 < s_minus && s_minus < s_plus && s_plus < 1.0))
    throw DomainError("CausalDiamond: need -1 < s- < s+ < 1");
  CausalDiamond d;
  d.s_minus = s_minus;
  d.s_plus = s_plus;
  d.x_minus = family.at(family.hat(), s_minus);
  d.x_plus = family.at(family.hat(), s_plus);
  return d;
}

bool CausalDiamond::contains(const MetricSpec& spec, const Vec& w, const CausalOptions& opts) const {
  return chronological(spec, x_minus, w, opts) && chronological(spec, w, x_plus, opts);
}

void validate_observers(const MetricSpec& spec, const ObserverFamily& family, const CausalDiamond& diamond,
                        const CausalOptions& opts) {
  if (family.dim() != spec.dim()) throw DomainError("observers: family dimension does not match the metric");
  const int n = spec.dim();
  Vec e0 = Vec::Zero(n);
  e0[0] = 1.0;
  for (std::size_t i = 0; i < family.size(); ++i) {
    for (int k = 0; k <= 20; ++k) {
      Vec x = family.at(i, -1.0 + 0.1 * k);
      if (!spec.in_chart(x)) throw DomainError("observers: curve " + std::to_string(i) + " leaves the chart");
      if (!(inner(spec, x, e0, e0) < 0.0))
        throw DomainError("observers: curve " + std::to_string(i) + " is not timelike");
    }
    if (!chronological(spec, family.at(i, -1.0), diamond.x_minus, opts))
      throw DomainError("observers: mu_a(-1) is not in the past of x- for curve " + std::to_string(i));
    if (!chronological(spec, diamond.x_plus, family.at(i, 1.0), opts))
      throw DomainError("observers: mu_a(1) is not in the future of x+ for curve " + std::to_string(i));
  }
}

double observation_time_plus(const MetricSpec& spec, const Vec& a, const Vec& x, const CausalOptions& opts) {
  auto sees = [&](double s) { return chronological(spec, x, ObserverFamily::event(a, s), opts); };
  double lo = -1.0, hi = 1.0;
  if (!sees(hi)) return 1.0;
  if (sees(lo)) return -1.0;
  while (hi - lo > opts.s_resolution) {
    double mid = 0.5 * (lo + hi);
    (sees(mid) ? hi : lo) = mid;
  }
  return hi;
}

double observation_time_minus(const MetricSpec& spec, const Vec& a, const Vec& x, const CausalOptions& opts) {
  auto seen = [&](double s) { return chronological(spec, ObserverFamily::event(a, s), x, opts); };
  double lo = -1.0, hi = 1.0;
  if (!seen(lo)) return -1.0;
  if (seen(hi)) return 1.0;
  while (hi - lo > opts.s_resolution) {
    double mid = 0.5 * (lo + hi);
    (seen(mid) ? lo : hi) = mid;
  }
  return lo;
}

std::vector<ObservationEvent> earliest_obs_set(const MetricSpec& spec, const ObserverFamily& family, const Vec& w,
                                               const CausalOptions& opts) {
  std::vector<ObservationEvent> out(family.size());
  parallel_for(family.size(), [&](std::size_t i) {
    const Vec& a = family.param(i);
    double f = observation_time_plus(spec, a, w, opts);
    out[i] = {a, f, ObserverFamily::event(a, f)};
  });
  return out;
}

namespace {

bool null_related(const MetricSpec& spec, const Vec& from, const Vec& to) {
  if (auto rel = causal_relation(spec, from, to)) return *rel == CausalRelation::Null;
  // Stationary observer through `to`; the earliest null arrival must be `to` itself.
  const int n = spec.dim();
  Vec spatial = to.tail(n - 1);
  Worldline line{[spatial, n](double t) {
                   Vec p(n);
                   p[0] = t;
                   p.tail(n - 1) = spatial;
                   return p;
                 },
                 {from[0], to[0] + 1.0}};
  try {
    NullConnection c = null_connect(spec, from, line);
    return std::abs(c.arrival - to[0]) < 1e-6 * std::max(1.0, std::abs(to[0]));
  } catch (const NoConnection&) {
    return false;
  }
}

}  // namespace

bool shortcut_check(const MetricSpec& spec, const Vec& x, const Vec& y, const Vec& z, const CausalOptions& opts) {
  const double scale = std::max(1.0, std::max(x.norm(), z.norm()));
  if ((y - x).norm() <= 1e-12 * scale || (z - y).norm() <= 1e-12 * scale)
    throw DegenerateInput("shortcut_check: the middle event coincides with an endpoint");
  if (!null_related(spec, x, y) || !null_related(spec, y, z))
    throw DomainError("shortcut_check: segments must be future null geodesics");
  return measure_time_separation(spec, x, z, opts).value > opts.tau_tol;
}

}  // namespace relboltz
