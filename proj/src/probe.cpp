#include "relboltz/probe.hpp"

#include "relboltz/boltzmann.hpp"
#include "relboltz/errors.hpp"
#include "relboltz/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace relboltz {

namespace {

Worldline stationary_line(const Vec& spatial) {
  const int n = static_cast<int>(spatial.size()) + 1;
  return {[spatial, n](double t) {
            Vec p(n);
            p[0] = t;
            p.tail(n - 1) = spatial;
            return p;
          },
          Interval{-1.0, 1.0}};
}

Vec unit(const Vec& v, const char* what) {
  double norm = v.norm();
  if (!(norm > 0.0)) throw ZeroVectorError(std::string(what) + ": zero direction");
  return v / norm;
}

TimeArrival arrive(const MetricSpec& spec, const Vec& x, const Vec& p, double t, double step, const char* what) {
  auto a = flow_to_time(spec, x, p, t, step);
  if (!a) throw IntegrationError(std::string(what) + ": geodesic leaves the chart");
  return *a;
}

NullLeg null_leg(const MetricSpec& spec, const ProbeScenario& sc, const Vec& a, const Vec& w) {
  const int n = spec.dim();
  NullLeg leg;
  leg.observer = a;
  leg.start = observation_time_minus(spec, a, w, sc.causal);
  if (leg.start <= -1.0) throw DomainError("build_probe_plan: w is not in the future of an observer");
  leg.origin = ObserverFamily::event(a, leg.start);
  if ((leg.origin.tail(n - 1) - w.tail(n - 1)).norm() < 1e-12)
    throw TangencyError("build_probe_plan: w lies on the observer, so its leg degenerates");
  NullConnection c;
  try {
    c = null_connect(spec, leg.origin, stationary_line(w.tail(n - 1)), sc.connect);
  } catch (const DegenerateTargetError&) {
    throw TangencyError("build_probe_plan: degenerate null leg");
  }
  if (std::abs(c.arrival - w[0]) > 1e-4)
    throw IntegrationError("build_probe_plan: null leg does not reach w (arrival " + std::to_string(c.arrival) +
                           ")");
  TimeArrival at_w = arrive(spec, leg.origin, c.direction, w[0], sc.step, "build_probe_plan");
  leg.direction = at_w.state.p / at_w.state.p[0];
  return leg;
}

// Euclidean orthonormal basis of the spatial complement of `along`.
Frame complement_frame(int n, const Vec& along) {
  const int m = n - 2;
  Frame frame = Frame::Zero(2 * n, m);
  Vec u = unit(along, "complement_frame");
  std::vector<Vec> basis{u};
  int col = 0;
  for (int i = 0; i < n - 1 && col < m; ++i) {
    Vec c = Vec::Zero(n - 1);
    c[i] = 1.0;
    for (const Vec& b : basis) c -= c.dot(b) * b;
    if (c.norm() < 1e-6) continue;
    c.normalize();
    basis.push_back(c);
    frame.block(1, col, n - 1, 1) = c;
    ++col;
  }
  return frame;
}

// Crossings of the point beam with the base flowout of the patch inside region, by
// multi-start Newton in (sigma, t) on the spatial positions at coordinate time t.
std::vector<Vec> beam_crossings(const MetricSpec& spec, const SourcePatch& patch, const SourcePatch& point,
                                const Box& region, double step) {
  const int n = spec.dim();
  const int m = patch.parameters();
  const double t_lo = std::max(region[0].lo, patch.slice_time());
  const double t_hi = region[0].hi;
  std::vector<Vec> found;
  if (!(t_hi > t_lo)) return found;

  auto residual = [&](const Vec& u, Vec* where) -> std::optional<Vec> {
    PhaseState member = patch.at(u.head(m));
    auto a = flow_to_time(spec, member.x, member.p, u[m], step);
    auto b = flow_to_time(spec, point.x, point.p, u[m], step);
    if (!a || !b) return std::nullopt;
    if (where) *where = b->state.x;
    return Vec(a->state.x.tail(n - 1) - b->state.x.tail(n - 1));
  };

  std::vector<Vec> starts;
  const int per = m == 0 ? 1 : 3;
  int combos = 1;
  for (int k = 0; k < m; ++k) combos *= per;
  for (int c = 0; c < combos; ++c)
    for (int j = 0; j < 5; ++j) {
      Vec u(m + 1);
      int rest = c;
      for (int k = 0; k < m; ++k) {
        u[k] = (rest % per - 1) * 0.5 * patch.extent;
        rest /= per;
      }
      u[m] = t_lo + (t_hi - t_lo) * (j + 0.5) / 5.0;
      starts.push_back(u);
    }

  for (Vec u : starts) {
    bool converged = false;
    Vec where;
    for (int it = 0; it < 40; ++it) {
      auto F = residual(u, &where);
      if (!F) break;
      if (F->lpNorm<Eigen::Infinity>() < 1e-12) {
        converged = true;
        break;
      }
      Mat J(n - 1, m + 1);
      for (int k = 0; k <= m; ++k) {
        Vec v = u;
        double h = 1e-7 * std::max(1.0, std::abs(u[k]));
        v[k] += h;
        auto Fk = residual(v, nullptr);
        if (!Fk) break;
        J.col(k) = (*Fk - *F) / h;
      }
      Vec delta = J.colPivHouseholderQr().solve(*F);
      if (!delta.allFinite()) break;
      u -= delta;
    }
    if (!converged) continue;
    if (m > 0 && u.head(m).lpNorm<Eigen::Infinity>() > patch.extent) continue;
    if (!region.contains(where)) continue;
    bool duplicate = std::any_of(found.begin(), found.end(), [&](const Vec& f) { return (f - where).norm() < 1e-7; });
    if (!duplicate) found.push_back(where);
  }
  std::vector<std::size_t> order(found.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return found[i][0] < found[j][0]; });
  std::vector<Vec> sorted;
  for (std::size_t i : order) sorted.push_back(found[i]);
  return sorted;
}

}  // namespace

// ---- detector grid ----

DetectorGrid DetectorGrid::plane(const Vec& centre, const Vec& u, const Vec& v, int count, double spacing) {
  Vec a = unit(u, "DetectorGrid::plane");
  Vec b = v - v.dot(a) * a;
  return {centre, {a, unit(b, "DetectorGrid::plane")}, {count, count}, spacing};
}

DetectorGrid DetectorGrid::line(const Vec& centre, const Vec& u, int count, double spacing) {
  return {centre, {unit(u, "DetectorGrid::line")}, {count}, spacing};
}

std::size_t DetectorGrid::size() const {
  std::size_t s = 1;
  for (int c : counts) s *= static_cast<std::size_t>(c);
  return s;
}

std::vector<int> DetectorGrid::unflatten(std::size_t index) const {
  std::vector<int> out(counts.size());
  for (int k = rank() - 1; k >= 0; --k) {
    out[k] = static_cast<int>(index % counts[k]);
    index /= counts[k];
  }
  return out;
}

std::size_t DetectorGrid::flatten(const std::vector<int>& index) const {
  std::size_t out = 0;
  for (int k = 0; k < rank(); ++k) out = out * counts[k] + index[k];
  return out;
}

Vec DetectorGrid::node(std::size_t index) const {
  auto idx = unflatten(index);
  Vec x = centre;
  for (int k = 0; k < rank(); ++k) x += (idx[k] - 0.5 * (counts[k] - 1)) * spacing * axes[k];
  return x;
}

std::vector<double> DetectorGrid::coordinates(const Vec& x) const {
  std::vector<double> out(axes.size());
  for (int k = 0; k < rank(); ++k) out[k] = (x - centre).dot(axes[k]) / spacing + 0.5 * (counts[k] - 1);
  return out;
}

double DetectorGrid::offset(const Vec& x) const {
  Vec d = x - centre;
  for (const Vec& a : axes) d -= d.dot(a) * a;
  return d.norm();
}

// ---- plan ----

ProbePlan build_probe_plan(const MetricSpec& spec, const ProbeScenario& sc, const Vec& w, double eps, double R,
                           const Box& kernel_support) {
  const int n = spec.dim();
  if (n < 3) throw DomainError("build_probe_plan: probe scenarios need n >= 3");
  if (w.size() != n) throw DomainError("build_probe_plan: target dimension does not match the metric");
  if (!sc.diamond.contains(spec, w, sc.causal)) throw DomainError("build_probe_plan: w is outside the diamond");
  if (!(sc.source_time < w[0])) throw DomainError("build_probe_plan: source slice must precede w");
  if (!(sc.tilt > 0.0 && sc.tilt < std::numbers::pi / 4)) throw DomainError("build_probe_plan: tilt must be in (0, pi/4)");

  ProbePlan plan;
  plan.w = w;
  const Vec& a_hat = sc.family.param(sc.family.hat());
  plan.leg_hat = null_leg(spec, sc, a_hat, w);
  plan.leg_other = null_leg(spec, sc, sc.source_observer, w);

  // Timelike beams: the spatial part of each null leg shrunk by tan(pi/4 - tilt).
  const double shrink = std::tan(std::numbers::pi / 4 - sc.tilt);
  auto beam_velocity = [&](const NullLeg& leg) {
    Vec v = leg.direction;
    v.tail(n - 1) *= shrink;
    if (!future_timelike(spec, w, v)) throw DomainError("build_probe_plan: tilted leg is not future timelike");
    return Vec(sc.beam_energy * v);
  };
  Vec p_w = beam_velocity(plan.leg_hat);
  Vec q_w = beam_velocity(plan.leg_other);
  if ((p_w - q_w).lpNorm<Eigen::Infinity>() < 1e-9 * sc.beam_energy)
    throw TangencyError("build_probe_plan: both beams are tangent to the same geodesic at w");

  // Aim backwards from w, then check the forward re-shoot.
  TimeArrival back_p = arrive(spec, w, p_w, sc.source_time, sc.step, "build_probe_plan");
  TimeArrival back_q = arrive(spec, w, q_w, sc.source_time, sc.step, "build_probe_plan");
  plan.beam_point = back_p.state;
  plan.beam_patch = back_q.state;
  TimeArrival fwd_p = arrive(spec, back_p.state.x, back_p.state.p, w[0], sc.step, "build_probe_plan");
  TimeArrival fwd_q = arrive(spec, back_q.state.x, back_q.state.p, w[0], sc.step, "build_probe_plan");
  plan.aim_residual = std::max((fwd_p.state.x - w).norm(), (fwd_q.state.x - w).norm());
  if (plan.aim_residual > sc.aim_tolerance)
    throw IntegrationError("build_probe_plan: re-shot beams miss w by " + std::to_string(plan.aim_residual));

  plan.s2 = SourcePatch::point(plan.beam_point.x, plan.beam_point.p, eps);
  plan.s1 = SourcePatch::patch(plan.beam_patch.x, plan.beam_patch.p,
                               complement_frame(n, plan.beam_patch.p.tail(n - 1)), R, eps);
  plan.s1.validate(spec);
  plan.s2.validate(spec);

  const double s_w = fwd_q.s;
  CrossingEvent event{Vec::Zero(plan.s1.parameters()), s_w, fwd_p.state.p};
  FlowoutSample fo = flowout(spec, plan.s1, Interval{0.0, 1.25 * s_w}, std::span(&event, 1), sc.flowout);
  plan.transversality = fo.transversality.front();

  plan.intersections = beam_crossings(spec, plan.s1, plan.s2, kernel_support, sc.step);
  if (plan.intersections.empty())
    throw IntegrationError("build_probe_plan: beams do not cross inside the kernel support");
  plan.z1 = plan.intersections.front();
  plan.intersection_residual = (plan.z1 - w).norm();

  // Optimal return geodesic to the receiving observer.
  Vec a_e = sc.detector_observer.size() == n - 1 ? sc.detector_observer : Vec(Vec::Zero(n - 1));
  NullConnection back = null_connect(spec, plan.z1, stationary_line(a_e), sc.connect);
  ReturnGeodesic& g = plan.gamma;
  g.z = plan.z1;
  g.momentum = null_completion(spec, plan.z1, sc.section_energy * back.direction.tail(n - 1));
  TimeArrival at_e = arrive(spec, g.z, g.momentum, back.arrival, sc.step, "build_probe_plan");
  g.e = at_e.state.x;
  g.T = at_e.s;
  g.velocity = at_e.state.p;
  g.null_defect = std::abs(inner(spec, g.e, g.velocity, g.velocity));

  Vec time_axis = Vec::Zero(n);
  time_axis[0] = 1.0;
  Vec along = Vec::Zero(n);
  along.tail(n - 1) = g.velocity.tail(n - 1);
  plan.detector = DetectorGrid::plane(g.e, time_axis, along, sc.detector_count, sc.detector_spacing);
  LightlikeSection section(spec, g.z, g.momentum, sc.step);
  plan.section = lightlike_section(spec, section, plan.detector);
  return plan;
}

// ---- lightlike section ----

LightlikeSection::LightlikeSection(const MetricSpec& spec, const Vec& z, const Vec& momentum, double step)
    : spec_(spec), z_(z), spatial_(momentum.tail(spec.dim() - 1)), step_(step) {
  if (spatial_.norm() == 0.0) throw ZeroVectorError("LightlikeSection: momentum has no spatial part");
}

std::optional<TimeArrival> LightlikeSection::follow(const Vec& xi, double t) const {
  const int n = spec_.dim();
  Vec start = z_;
  start.tail(n - 1) += xi;
  if (!spec_.in_chart(start)) return std::nullopt;
  return flow_to_time(spec_, start, null_completion(spec_, start, spatial_), t, step_);
}

LightlikeSection::Member LightlikeSection::member(const Vec& x) const {
  const int n = spec_.dim();
  const int m = n - 1;
  Vec k = null_completion(spec_, z_, spatial_);
  Vec xi = x.tail(m) - z_.tail(m) - (x[0] - z_[0]) / k[0] * spatial_;
  const double scale = 1.0 + x.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < 50; ++it) {
    auto a = follow(xi, x[0]);
    if (!a) throw CausticError("lightlike_section: congruence member leaves the chart");
    Vec F = a->state.x.tail(m) - x.tail(m);
    Mat J(m, m);
    for (int c = 0; c < m; ++c) {
      Vec v = xi;
      v[c] += 1e-6;
      auto b = follow(v, x[0]);
      if (!b) throw CausticError("lightlike_section: congruence member leaves the chart");
      J.col(c) = (b->state.x.tail(m) - a->state.x.tail(m)) / 1e-6;
    }
    if (F.lpNorm<Eigen::Infinity>() <= 1e-13 * scale) return {xi, a->state.p, J.determinant()};
    Vec delta = J.partialPivLu().solve(F);
    if (!delta.allFinite()) break;
    xi -= delta;
  }
  throw CausticError("lightlike_section: no congruence member through the point; use a smaller detector grid");
}

std::vector<Vec> lightlike_section(const MetricSpec&, const LightlikeSection& section, const DetectorGrid& grid) {
  std::vector<LightlikeSection::Member> members(grid.size());
  parallel_for(grid.size(), [&](std::size_t k) { members[k] = section.member(grid.node(k)); });
  double top = 0.0;
  for (const auto& m : members) top = std::max(top, std::abs(m.jacobian));
  const double sign = members.front().jacobian >= 0.0 ? 1.0 : -1.0;
  std::vector<Vec> out;
  out.reserve(members.size());
  for (const auto& m : members) {
    if (sign * m.jacobian <= 1e-3 * top)
      throw CausticError("lightlike_section: congruence focuses inside the detector grid; use a smaller grid");
    out.push_back(m.velocity);
  }
  return out;
}

// ---- measurement ----

Measurement measure_on(const MetricSpec& spec, const CollisionKernel& A, const ProbePlan& plan,
                       const DetectorGrid& grid, const std::vector<Vec>& section, const MeasureOptions& opts) {
  if (section.size() != grid.size()) throw DomainError("measure: section does not match the grid");
  Measurement m;
  m.grid = grid;
  m.momenta = section;
  m.epsilon = plan.s2.epsilon;
  m.extent = plan.s1.extent;
  m.kernel = A.params();
  m.values.assign(grid.size(), 0.0);

  PhaseDensity h1 = mollified_delta_source(plan.s1);
  PhaseDensity h2 = mollified_delta_source(plan.s2);
  if (opts.swap_sources) std::swap(h1, h2);
  PhaseDensity phi = phi_second_direct(spec, A, h1, h2, opts.collision, opts.beams, opts.outer);
  if (!phi.is_zero())
    parallel_for(grid.size(), [&](std::size_t k) { m.values[k] = phi(grid.node(k), section[k]); });

  // Q_loss along the backward rays through the kernel support.
  if (A.is_zero() || opts.loss_samples <= 0) return m;
  PhaseDensity vf = vlasov_solve(spec, h1, opts.beams);
  PhaseDensity vh = vlasov_solve(spec, h2, opts.beams);
  std::vector<double> loss(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t k) {
    Vec x = grid.node(k);
    double l = exit_time(spec, x, section[k], A.spatial_support());
    if (!(l > 0.0)) return;
    GeodesicPath ray = geodesic_flow(spec, x, section[k], -l, std::min(l / opts.loss_samples, 1e-2));
    for (int j = 0; j < opts.loss_samples; ++j) {
      PhaseState st = ray.at(-l * (j + 0.5) / opts.loss_samples);
      double q = std::abs(q_loss(spec, A, vf, vh, st.x, st.p, opts.collision)) +
                 std::abs(q_loss(spec, A, vh, vf, st.x, st.p, opts.collision));
      loss[k] = std::max(loss[k], q);
    }
  });
  for (double q : loss) m.loss_sup = std::max(m.loss_sup, q);
  return m;
}

double interaction_radius(const MetricSpec& spec, const ProbePlan& plan, const MeasureOptions& opts) {
  const int n = spec.dim();
  PhaseDensity vf = vlasov_solve(spec, mollified_delta_source(plan.s1), opts.beams);
  PhaseDensity vh = vlasov_solve(spec, mollified_delta_source(plan.s2), opts.beams);
  const double h = 0.5 * plan.s2.epsilon;
  for (int half = 12; half <= 384; half *= 2) {
    double radius = 0.0;
    bool touches = false;
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(2 * half + 1);
    for (std::size_t k = 0; k < total; ++k) {
      Vec y = plan.z1;
      std::size_t rest = k;
      bool edge = false;
      for (int i = 0; i < n; ++i) {
        int c = static_cast<int>(rest % (2 * half + 1)) - half;
        rest /= 2 * half + 1;
        y[i] += c * h;
        edge = edge || std::abs(c) == half;
      }
      if (!vf.may_be_nonzero_at(y) || !vh.may_be_nonzero_at(y)) continue;
      radius = std::max(radius, (y - plan.z1).norm());
      touches = touches || edge;
    }
    // One lattice cell of slack for overlap between the samples.
    if (!touches) return radius + h * std::sqrt(static_cast<double>(n));
  }
  return kInf;
}

double causal_deficit(const MetricSpec& spec, const Vec& z, const Vec& x, const CausalOptions& opts) {
  auto reached = [&](double d) {
    Vec y = x;
    y[0] += d;
    if (auto rel = causal_relation(spec, z, y)) return *rel != CausalRelation::None;
    return chronological(spec, z, y, opts);
  };
  if (reached(0.0)) return 0.0;
  double lo = 0.0, hi = 2.0;
  if (!reached(hi)) return kInf;
  while (hi - lo > 1e-9) {
    double mid = 0.5 * (lo + hi);
    (reached(mid) ? hi : lo) = mid;
  }
  return hi;
}

// ---- detection ----

Detection detect_singular_support(const Measurement& m, double kappa) {
  const DetectorGrid& g = m.grid;
  if (m.values.size() != g.size()) throw DomainError("detect_singular_support: values do not match the grid");
  std::vector<int> active;
  for (int a = 0; a < g.rank(); ++a) {
    if (g.counts[a] == 1) continue;
    if (g.counts[a] - 1 < 16) throw DomainError("detect_singular_support: need at least 16 cells per axis");
    active.push_back(a);
  }
  double top = 0.0;
  for (double v : m.values) top = std::max(top, std::abs(v));
  if (top == 0.0) throw EmptyDetection("detect_singular_support: measurement is identically zero");

  // Undivided second differences, compared against the amplitude of S: a smooth profile
  // resolved over many cells stays far below kappa, a ridge of cell width does not. Only
  // crest nodes count (Laplacian opposite in sign to S); the stencil's side lobes beside a
  // thin ridge carry the sign of S.
  Detection d;
  d.laplacian.assign(g.size(), 0.0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    auto idx = g.unflatten(k);
    bool interior = std::all_of(active.begin(), active.end(),
                                [&](int a) { return idx[a] > 0 && idx[a] < g.counts[a] - 1; });
    if (!interior) continue;
    double lap = 0.0;
    for (int a : active) {
      auto lo = idx, hi = idx;
      --lo[a];
      ++hi[a];
      lap += m.values[g.flatten(hi)] - 2.0 * m.values[k] + m.values[g.flatten(lo)];
    }
    d.laplacian[k] = lap;
    d.max_laplacian = std::max(d.max_laplacian, std::abs(lap));
  }
  for (std::size_t k = 0; k < g.size(); ++k)
    if (d.laplacian[k] * m.values[k] < 0.0 && std::abs(d.laplacian[k]) > kappa * top) d.cells.push_back(k);
  return d;
}

std::vector<std::vector<double>> predicted_ridge(const MetricSpec& spec, const ProbePlan& plan, int samples) {
  const DetectorGrid& g = plan.detector;
  const Vec& v = plan.gamma.velocity;
  double extent = 0.0;
  for (int c : g.counts) extent += (c - 1) * g.spacing;
  // Parameter span that crosses the whole grid in either direction.
  const double span = extent / v.norm();
  const double step = std::min(1e-3, span / samples);
  GeodesicPath fwd = geodesic_flow(spec, plan.gamma.e, v, span, step);
  GeodesicPath bwd = geodesic_flow(spec, plan.gamma.e, v, -span, step);
  std::vector<std::vector<double>> out;
  for (int k = 0; k < samples; ++k) {
    double s = -span + 2.0 * span * k / (samples - 1);
    PhaseState st = s >= 0.0 ? fwd.at(s) : bwd.at(s);
    if (g.offset(st.x) > 0.5 * g.spacing) continue;
    auto c = g.coordinates(st.x);
    bool inside = true;
    for (int a = 0; a < g.rank(); ++a) inside = inside && c[a] >= -0.5 && c[a] <= g.counts[a] - 0.5;
    if (inside) out.push_back(std::move(c));
  }
  return out;
}

double ridge_distance(const std::vector<std::vector<double>>& ridge, const std::vector<double>& c) {
  double best = kInf;
  for (const auto& r : ridge) {
    double d2 = 0.0;
    for (std::size_t a = 0; a < c.size(); ++a) d2 += (r[a] - c[a]) * (r[a] - c[a]);
    best = std::min(best, std::sqrt(d2));
  }
  return best;
}

// ---- recovery ----

std::vector<Measurement> measure_observers(const MetricSpec& spec, const CollisionKernel& A, const ProbePlan& plan,
                                           const ProbeScenario& sc, const RecoveryOptions& opts) {
  const int n = spec.dim();
  const int count = static_cast<int>(std::lround(opts.window.width() / opts.spacing)) + 1;
  Vec time_axis = Vec::Zero(n);
  time_axis[0] = 1.0;
  std::vector<Measurement> out;
  for (std::size_t i = 0; i < sc.family.size(); ++i) {
    const Vec& a = sc.family.param(i);
    Vec centre = ObserverFamily::event(a, opts.window.lo + 0.5 * (count - 1) * opts.spacing);
    DetectorGrid line = DetectorGrid::line(centre, time_axis, count, opts.spacing);
    std::optional<NullConnection> back;
    try {
      back = null_connect(spec, plan.z1, stationary_line(a), sc.connect);
    } catch (const NoConnection&) {
    } catch (const DegenerateTargetError&) {
    }
    if (!back) {
      Measurement m;
      m.grid = line;
      m.values.assign(line.size(), 0.0);
      m.epsilon = plan.s2.epsilon;
      m.extent = plan.s1.extent;
      m.kernel = A.params();
      out.push_back(std::move(m));
      continue;
    }
    Vec momentum = null_completion(spec, plan.z1, sc.section_energy * back->direction.tail(n - 1));
    LightlikeSection section(spec, plan.z1, momentum, sc.step);
    MeasureOptions mo = opts.measure;
    mo.loss_samples = 0;
    out.push_back(measure_on(spec, A, plan, line, lightlike_section(spec, section, line), mo));
  }
  return out;
}

std::vector<RecoveredObservation> recover_observation_times(const MetricSpec& spec, const ProbeScenario& sc,
                                                            const Vec& w, const std::vector<Measurement>& lines,
                                                            const RecoveryOptions& opts) {
  if (lines.size() != sc.family.size()) throw DomainError("recover_observation_times: one line per observer");
  std::vector<RecoveredObservation> out(lines.size());
  parallel_for(lines.size(), [&](std::size_t i) {
    RecoveredObservation& r = out[i];
    r.a = sc.family.param(i);
    r.step = lines[i].grid.spacing;
    r.truth = observation_time_plus(spec, r.a, w, sc.causal);
    try {
      Detection d = detect_singular_support(lines[i], opts.kappa);
      for (std::size_t k : d.cells) {
        double s = lines[i].grid.node(k)[0];
        if (!r.detected || s < r.recovered) r.recovered = s;
        r.detected = true;
      }
    } catch (const EmptyDetection&) {
    }
    if (!r.detected) r.recovered = 1.0;
  });
  return out;
}

// ---- conformal consistency ----

ConformalReport conformal_consistency_check(const MetricSpec& spec, const MetricSpec& spec_prime, const Vec& w,
                                            const std::vector<Vec>& directions, double duration, double step) {
  ConformalReport report;
  for (const Vec& p : directions) {
    GeodesicPath ref = geodesic_flow(spec, w, p, duration, step);
    // The rescaled path may move slower in its own parameter; follow it long enough to
    // pass the reference end point.
    GeodesicPath other = geodesic_flow(spec_prime, w, p, 4.0 * duration, step);
    const auto& a = ref.samples;
    const auto& b = other.samples;
    double length = 0.0;
    for (std::size_t i = 1; i < a.size(); ++i) length += (a[i].x - a[i - 1].x).norm();

    // Greedy monotone matching: each reference sample projects onto the first segment at
    // or after the previous match that minimises the distance.
    std::size_t seg = 0;
    double last_t = 0.0, worst = 0.0;
    for (const auto& sample : a) {
      double best = kInf, best_t = last_t;
      std::size_t best_seg = seg;
      for (std::size_t j = seg; j + 1 < b.size(); ++j) {
        Vec d = b[j + 1].x - b[j].x;
        double t = d.squaredNorm() > 0.0 ? std::clamp((sample.x - b[j].x).dot(d) / d.squaredNorm(), 0.0, 1.0) : 0.0;
        if (j == seg) t = std::max(t, last_t);
        double dist = (b[j].x + t * d - sample.x).norm();
        if (dist < best) {
          best = dist;
          best_seg = j;
          best_t = t;
        }
      }
      if (best_seg < seg || (best_seg == seg && best_t < last_t)) report.monotone = false;
      seg = best_seg;
      last_t = best_t;
      worst = std::max(worst, best);
    }
    report.residual.push_back(worst);
    report.length.push_back(length);
    report.per_length.push_back(length > 0.0 ? worst / length : 0.0);
    report.max_residual = std::max(report.max_residual, worst);
    report.max_per_length = std::max(report.max_per_length, report.per_length.back());
  }
  return report;
}

}  // namespace relboltz
