#include "relboltz/geodesics.hpp"

#include "relboltz/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace relboltz {

namespace {

PhaseState hermite(const GeodesicSample& a, const GeodesicSample& b, double s) {
  double h = b.s - a.s;
  double t = (s - a.s) / h;
  double t2 = t * t, t3 = t2 * t;
  double h00 = 2 * t3 - 3 * t2 + 1;
  double h10 = t3 - 2 * t2 + t;
  double h01 = -2 * t3 + 3 * t2;
  double h11 = t3 - t2;
  return {h00 * a.x + h10 * h * a.p + h01 * b.x + h11 * h * b.p,
          h00 * a.p + h10 * h * a.accel + h01 * b.p + h11 * h * b.accel};
}

GeodesicSample make_sample(const MetricSpec& spec, double s, const Vec& x, const Vec& p) {
  return {s, x, p, geodesic_acceleration(spec, x, p)};
}

void check_finite(const Vec& x, const Vec& p) {
  if (!x.allFinite() || !p.allFinite()) throw IntegrationError("geodesic integration produced a non-finite state");
}

double smallest_finite_side(const Box& box) {
  double w = kInf;
  for (int i = 0; i < box.dim(); ++i)
    if (std::isfinite(box[i].width()) && box[i].width() > 0.0) w = std::min(w, box[i].width());
  return w;
}

// Parameter interval over which the ray x - s p stays in the box, intersected with s >= 0.
Interval ray_interval(const Vec& x, const Vec& p, const Box& box) {
  Interval out{0.0, kInf};
  for (int i = 0; i < box.dim(); ++i) {
    if (p[i] == 0.0) {
      if (!box[i].contains(x[i])) return {1.0, 0.0};
      continue;
    }
    double a = (x[i] - box[i].hi) / p[i];
    double b = (x[i] - box[i].lo) / p[i];
    if (a > b) std::swap(a, b);
    out.lo = std::max(out.lo, a);
    out.hi = std::min(out.hi, b);
  }
  return out;
}

}  // namespace

PhaseState GeodesicPath::at(double s) const {
  if (samples.size() == 1) return {samples.front().x, samples.front().p};
  const double lo = std::min(s_first(), s_last());
  const double hi = std::max(s_first(), s_last());
  s = std::clamp(s, lo, hi);
  auto k = static_cast<std::ptrdiff_t>(std::floor((s - s_first()) / step));
  k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(samples.size()) - 2);
  return hermite(samples[k], samples[k + 1], s);
}

PhaseState rk4_step(const MetricSpec& spec, const Vec& x, const Vec& p, double h) {
  Vec k1x = p;
  Vec k1p = geodesic_acceleration(spec, x, p);
  Vec x2 = x + 0.5 * h * k1x, p2 = p + 0.5 * h * k1p;
  Vec k2x = p2;
  Vec k2p = geodesic_acceleration(spec, x2, p2);
  Vec x3 = x + 0.5 * h * k2x, p3 = p + 0.5 * h * k2p;
  Vec k3x = p3;
  Vec k3p = geodesic_acceleration(spec, x3, p3);
  Vec x4 = x + h * k3x, p4 = p + h * k3p;
  Vec k4x = p4;
  Vec k4p = geodesic_acceleration(spec, x4, p4);
  return {x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x), p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)};
}

GeodesicPath geodesic_flow(const MetricSpec& spec, const Vec& x, const Vec& p, double duration, double step) {
  if (p.isZero(0.0)) throw ZeroVectorError("geodesic_flow: zero initial vector");
  if (!spec.in_chart(x)) throw DomainError("geodesic_flow: start point outside the chart");
  if (!(step > 0.0)) throw IntegrationError("geodesic_flow: step must be positive");
  const double dir = duration < 0.0 ? -1.0 : 1.0;
  const double length = std::abs(duration);
  GeodesicPath path;
  path.step = dir * step;
  path.samples.push_back(make_sample(spec, 0.0, x, p));
  const double norm0 = inner(spec, x, p, p);
  const auto steps = static_cast<std::size_t>(std::ceil(length / step - 1e-9));
  Vec xc = x, pc = p;
  double s = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    double h = std::min(step, length - static_cast<double>(k) * step);
    PhaseState next = rk4_step(spec, xc, pc, dir * h);
    check_finite(next.x, next.p);
    if (!spec.in_chart(next.x)) {
      path.left_chart = true;
      break;
    }
    xc = next.x;
    pc = next.p;
    s = k + 1 == steps ? dir * length : s + dir * h;
    path.samples.push_back(make_sample(spec, s, xc, pc));
    path.mass_shell_drift = std::max(path.mass_shell_drift, std::abs(inner(spec, xc, pc, pc) - norm0));
  }
  return path;
}

PhaseState flow_to(const MetricSpec& spec, const Vec& x, const Vec& p, double duration, double step) {
  if (p.isZero(0.0)) throw ZeroVectorError("flow_to: zero initial vector");
  const double dir = duration < 0.0 ? -1.0 : 1.0;
  const double length = std::abs(duration);
  const auto steps = static_cast<std::size_t>(std::ceil(length / step - 1e-9));
  PhaseState st{x, p};
  for (std::size_t k = 0; k < steps; ++k) {
    double h = std::min(step, length - static_cast<double>(k) * step);
    st = rk4_step(spec, st.x, st.p, dir * h);
    check_finite(st.x, st.p);
  }
  return st;
}

std::optional<TimeArrival> flow_to_time(const MetricSpec& spec, const Vec& x, const Vec& p, double t, double step) {
  if (!(p[0] > 0.0)) return std::nullopt;
  if (t == x[0]) return TimeArrival{{x, p}, 0.0};
  if (spec.flat_coordinates()) {
    double s = (t - x[0]) / p[0];
    Vec end = x + s * p;
    if (!spec.in_chart(end)) return std::nullopt;
    return TimeArrival{{end, p}, s};
  }
  const double dir = t > x[0] ? 1.0 : -1.0;
  const double h = dir * std::abs(step);
  auto before = [&](const Vec& y) { return dir * (t - y[0]) > 0.0; };
  Vec cx = x, cp = p;
  double s = 0.0;
  for (std::size_t it = 0; it < 10'000'000; ++it) {
    PhaseState next = rk4_step(spec, cx, cp, h);
    if (!next.x.allFinite() || !spec.in_chart(next.x) || next.p[0] <= 0.0) return std::nullopt;
    if (!before(next.x)) {
      double lo = 0.0, hi = h;
      for (int b = 0; b < 60; ++b) {
        double mid = 0.5 * (lo + hi);
        (before(rk4_step(spec, cx, cp, mid).x) ? lo : hi) = mid;
      }
      double part = 0.5 * (lo + hi);
      PhaseState end = rk4_step(spec, cx, cp, part);
      return TimeArrival{end, s + part};
    }
    cx = next.x;
    cp = next.p;
    s += h;
  }
  return std::nullopt;
}

BackwardTrace::BackwardTrace(const MetricSpec& spec, const Vec& x, const Vec& p, const Box& region,
                             const TraceOptions& opts)
    : x_(x), p_(p) {
  if (p.isZero(0.0)) throw ZeroVectorError("backward trace: zero vector");
  if (!spec.in_chart(x)) throw DomainError("backward trace: start point outside the chart");
  double length = std::min(opts.step_length, 0.25 * smallest_finite_side(region));
  knot_spacing_ = length / p.norm();
  straight_ = spec.flat_coordinates();
  if (straight_)
    trace_straight(spec, region);
  else
    trace_curved(spec, region, {length, opts.max_steps});
}

void BackwardTrace::trace_straight(const MetricSpec& spec, const Box& region) {
  Interval chart = ray_interval(x_, p_, spec.chart());
  double stop = chart.hi;
  if (std::isfinite(region[0].lo) && p_[0] > 0.0) stop = std::min(stop, (x_[0] - region[0].lo) / p_[0]);
  Interval in = ray_interval(x_, p_, region);
  if (!in.empty()) {
    if (in.hi > chart.hi) {
      unresolved_ = true;
      in.hi = chart.hi;
    }
    if (!in.empty()) inside_.push_back(in);
  }
  resolved_ = std::max(stop, exit_time());
  if (!std::isfinite(resolved_)) resolved_ = exit_time();
}

void BackwardTrace::trace_curved(const MetricSpec& spec, const Box& region, const TraceOptions& opts) {
  const double h = knot_spacing_;
  path_.step = -h;
  path_.samples.push_back(make_sample(spec, 0.0, x_, p_));
  auto inside_at = [&](double s) { return region.contains(path_.at(-s).x); };
  bool inside = region.contains(x_);
  double entered = 0.0;
  // Refine a crossing inside the last step by bisection on the dense output.
  auto crossing = [&](double a, double b, bool inside_a) {
    for (int it = 0; it < 80 && b - a > 1e-12 * std::max(1.0, b); ++it) {
      double m = 0.5 * (a + b);
      (inside_at(m) == inside_a ? a : b) = m;
    }
    return 0.5 * (a + b);
  };
  for (std::size_t k = 0;; ++k) {
    if (k >= opts.max_steps) throw IntegrationError("backward trace: step limit reached");
    const GeodesicSample& cur = path_.samples.back();
    PhaseState next = rk4_step(spec, cur.x, cur.p, -h);
    check_finite(next.x, next.p);
    double s_cur = -cur.s;
    if (!spec.in_chart(next.x)) {
      unresolved_ = cur.x[0] >= region[0].lo;
      if (inside) inside_.push_back({entered, s_cur});
      resolved_ = s_cur;
      return;
    }
    path_.samples.push_back(make_sample(spec, -(s_cur + h), next.x, next.p));
    double s_next = s_cur + h;
    bool inside_next = region.contains(next.x);
    if (inside_next != inside) {
      double c = crossing(s_cur, s_next, inside);
      if (inside_next)
        entered = c;
      else
        inside_.push_back({entered, c});
      inside = inside_next;
    }
    if (next.x[0] < region[0].lo) {
      if (inside) inside_.push_back({entered, s_next});
      resolved_ = s_next;
      return;
    }
  }
}

PhaseState BackwardTrace::at(double s) const {
  if (straight_) return {x_ - s * p_, p_};
  return path_.at(-s);
}

std::vector<double> BackwardTrace::knots() const {
  std::vector<double> out;
  if (straight_) {
    if (!std::isfinite(resolved_)) return {0.0};
    auto count = static_cast<std::size_t>(std::ceil(resolved_ / knot_spacing_));
    out.reserve(count + 1);
    for (std::size_t k = 0; k < count; ++k) out.push_back(static_cast<double>(k) * knot_spacing_);
    out.push_back(resolved_);
    return out;
  }
  out.reserve(path_.samples.size());
  for (const auto& smp : path_.samples) out.push_back(-smp.s);
  return out;
}

std::vector<double> BackwardTrace::breakpoints(const Interval& iv, int min_panels) const {
  std::vector<double> out;
  if (iv.empty() || iv.width() <= 0.0) return out;
  if (straight_) {
    auto count = std::max<std::size_t>(min_panels, static_cast<std::size_t>(std::ceil(iv.width() / knot_spacing_)));
    for (std::size_t k = 0; k <= count; ++k) out.push_back(iv.lo + iv.width() * k / count);
    out.back() = iv.hi;
    return out;
  }
  out.push_back(iv.lo);
  for (const auto& smp : path_.samples)
    if (-smp.s > iv.lo && -smp.s < iv.hi) out.push_back(-smp.s);
  out.push_back(iv.hi);
  if (static_cast<int>(out.size()) - 1 < min_panels) {
    out.clear();
    for (int k = 0; k <= min_panels; ++k) out.push_back(iv.lo + iv.width() * k / min_panels);
    out.back() = iv.hi;
  }
  return out;
}

double exit_time(const MetricSpec& spec, const Vec& x, const Vec& p, const Box& region, const TraceOptions& opts) {
  BackwardTrace trace(spec, x, p, region, opts);
  if (trace.unresolved())
    throw ChartExitError("exit_time: backward geodesic left the chart before leaving the region's past",
                         trace.exit_time());
  return trace.exit_time();
}

Vec sphere_direction(int n, const Vec& angles) {
  Vec w(n - 1);
  switch (n) {
    case 2: w[0] = std::cos(angles[0]) >= 0.0 ? 1.0 : -1.0; break;
    case 3: w << std::cos(angles[0]), std::sin(angles[0]); break;
    case 4:
      w << std::sin(angles[0]) * std::cos(angles[1]), std::sin(angles[0]) * std::sin(angles[1]),
          std::cos(angles[0]);
      break;
    default: throw DomainError("sphere_direction: unsupported dimension");
  }
  return w;
}

namespace {

// Future null geodesic from a fixed event, queried by coordinate time.
class NullRay {
 public:
  NullRay(const MetricSpec& spec, const Vec& x, const Vec& spatial, double t_end, double step) : x_(x) {
    p_ = null_completion(spec, x, spatial);
    p_ /= p_[0];
    straight_ = spec.flat_coordinates();
    if (straight_) return;
    path_.step = step;
    path_.samples.push_back(make_sample(spec, 0.0, x, p_));
    while (path_.samples.back().x[0] < t_end) {
      const auto& cur = path_.samples.back();
      PhaseState next = rk4_step(spec, cur.x, cur.p, step);
      check_finite(next.x, next.p);
      if (!spec.in_chart(next.x) || next.p[0] <= 0.0) break;
      path_.samples.push_back(make_sample(spec, cur.s + step, next.x, next.p));
    }
  }

  const Vec& direction() const { return p_; }

  std::optional<Vec> position(double t) const {
    if (straight_) return Vec(x_ + (t - x_[0]) * p_);
    const auto& smp = path_.samples;
    if (t < smp.front().x[0] || t > smp.back().x[0]) return std::nullopt;
    // x0 increases along the sampled path; locate the bracketing step.
    auto it = std::lower_bound(smp.begin(), smp.end(), t, [](const GeodesicSample& a, double v) { return a.x[0] < v; });
    std::size_t k = it == smp.begin() ? 0 : static_cast<std::size_t>(it - smp.begin()) - 1;
    if (k + 1 >= smp.size()) return smp.back().x;
    double a = smp[k].s, b = smp[k + 1].s;
    for (int i = 0; i < 60; ++i) {
      double m = 0.5 * (a + b);
      (hermite(smp[k], smp[k + 1], m).x[0] < t ? a : b) = m;
    }
    return hermite(smp[k], smp[k + 1], 0.5 * (a + b)).x;
  }

 private:
  Vec x_, p_;
  bool straight_ = true;
  GeodesicPath path_;
};

struct Candidate {
  Vec angles;
  double t;
  double miss;
};

}  // namespace

NullConnection null_connect(const MetricSpec& spec, const Vec& x, const Worldline& worldline,
                            const NullConnectOptions& opts) {
  const int n = spec.dim();
  const int nang = n == 2 ? 0 : n - 2;
  const double t_lo = std::max(worldline.window.lo, x[0]);
  const double t_hi = worldline.window.hi;
  if (t_lo <= worldline.window.hi && x[0] >= worldline.window.lo) {
    Vec here = worldline.at(x[0]);
    if ((here - x).norm() < 1e-12) throw DegenerateTargetError("null_connect: event lies on the worldline");
  }
  if (!(t_lo < t_hi)) throw NoConnection("null_connect: worldline window lies in the past of the event");

  auto spatial_for = [&](const Vec& angles, double sign) -> Vec {
    if (n == 2) return Vec::Constant(1, sign);
    return sphere_direction(n, angles);
  };
  auto miss_vector = [&](const NullRay& ray, double t) -> std::optional<Vec> {
    auto pos = ray.position(t);
    if (!pos) return std::nullopt;
    return Vec((*pos - worldline.at(t)).tail(n - 1));
  };

  // Angle ranges: theta in [0, 2pi) for n = 3; polar (0, pi) and azimuth [0, 2pi) for n = 4.
  const double two_pi = 2.0 * std::numbers::pi;
  auto scan = [&](const Vec& center, const Vec& half, Interval twin, double sign, std::vector<Candidate>& out,
                  bool keep_local_minima) {
    const int m = nang == 0 ? 1 : opts.directions_per_angle;
    const int total = nang == 2 ? m * m : m;
    const int nt = opts.time_samples;
    std::vector<Candidate> cells(total);
    for (int c = 0; c < total; ++c) {
      Vec angles(std::max(nang, 1));
      angles.setZero();
      for (int d = 0; d < nang; ++d) {
        int idx = d == 0 ? c % m : c / m;
        angles[d] = center[d] - half[d] + (idx + 0.5) * 2.0 * half[d] / m;
      }
      NullRay ray(spec, x, spatial_for(angles, sign), twin.hi, opts.step);
      Candidate best{angles, twin.lo, kInf};
      for (int j = 0; j < nt; ++j) {
        double t = twin.lo + (twin.hi - twin.lo) * j / (nt - 1);
        auto d = miss_vector(ray, t);
        if (!d) continue;
        double v = d->norm();
        if (v < best.miss) best = {angles, t, v};
      }
      cells[c] = best;
    }
    if (!keep_local_minima) {
      auto it = std::min_element(cells.begin(), cells.end(), [](auto& a, auto& b) { return a.miss < b.miss; });
      out.push_back(*it);
      return;
    }
    auto at = [&](int i, int j) -> const Candidate& {
      i = (i % m + m) % m;
      if (nang == 2) j = std::clamp(j, 0, m - 1);
      return cells[nang == 2 ? j * m + i : i];
    };
    for (int c = 0; c < total; ++c) {
      int i = nang == 0 ? 0 : c % m;
      int j = nang == 2 ? c / m : 0;
      double v = cells[c].miss;
      if (!std::isfinite(v)) continue;
      bool local = true;
      if (nang >= 1) local = v <= at(i - 1, j).miss && v <= at(i + 1, j).miss;
      if (nang == 2) local = local && v <= at(i, j - 1).miss && v <= at(i, j + 1).miss;
      if (local) out.push_back(cells[c]);
    }
  };

  std::vector<std::pair<Candidate, double>> seeds;  // candidate and ray sign (n = 2)
  {
    Vec center(std::max(nang, 1)), half(std::max(nang, 1));
    center.setZero();
    half.setZero();
    if (nang == 1) {
      center[0] = std::numbers::pi;
      half[0] = std::numbers::pi;
    } else if (nang == 2) {
      center << 0.5 * std::numbers::pi, std::numbers::pi;
      half << 0.5 * std::numbers::pi, std::numbers::pi;
    }
    for (double sign : n == 2 ? std::vector<double>{1.0, -1.0} : std::vector<double>{1.0}) {
      std::vector<Candidate> found;
      scan(center, half, {t_lo, t_hi}, sign, found, true);
      for (auto& c : found) seeds.push_back({c, sign});
    }
  }
  std::sort(seeds.begin(), seeds.end(), [](auto& a, auto& b) { return a.first.miss < b.first.miss; });
  if (seeds.size() > 8) seeds.resize(8);

  const double dt0 = (t_hi - t_lo) / (opts.time_samples - 1);
  std::optional<NullConnection> best;
  for (auto& [seed, sign] : seeds) {
    Candidate cur = seed;
    Vec half(std::max(nang, 1));
    half.setConstant(nang == 2 ? std::numbers::pi / opts.directions_per_angle
                               : two_pi / opts.directions_per_angle);
    if (nang == 2) half[1] = two_pi / opts.directions_per_angle;
    half *= 2.0;
    double dt = dt0;
    for (int r = 0; r < opts.refinements; ++r) {
      std::vector<Candidate> found;
      Interval twin{std::max(t_lo, cur.t - 2 * dt), std::min(t_hi, cur.t + 2 * dt)};
      scan(cur.angles, half, twin, sign, found, false);
      cur = found.front();
      half *= 4.0 / opts.directions_per_angle;
      dt = (twin.hi - twin.lo) / (opts.time_samples - 1);
    }
    // Newton on (angles, t) for the spatial miss vector.
    const int unknowns = nang + 1;
    auto residual = [&](const Vec& u) -> std::optional<Vec> {
      Vec angles = nang == 0 ? Vec::Zero(1) : Vec(u.head(nang));
      NullRay ray(spec, x, spatial_for(angles, sign), u[nang] + 1e-3, opts.step);
      return miss_vector(ray, u[nang]);
    };
    Vec u(unknowns);
    if (nang > 0) u.head(nang) = cur.angles.head(nang);
    u[nang] = cur.t;
    auto f = residual(u);
    if (!f) continue;
    for (int it = 0; it < 40 && f->norm() > 1e-13; ++it) {
      Eigen::MatrixXd jac(n - 1, unknowns);
      bool ok = true;
      for (int k = 0; k < unknowns; ++k) {
        Vec up = u, um = u;
        double h = 1e-7;
        up[k] += h;
        um[k] -= h;
        auto fp = residual(up), fm = residual(um);
        if (!fp || !fm) {
          ok = false;
          break;
        }
        jac.col(k) = (*fp - *fm) / (2 * h);
      }
      if (!ok) break;
      Eigen::VectorXd delta = jac.colPivHouseholderQr().solve(Eigen::VectorXd(*f));
      // Damped update: halve until the miss decreases.
      double lambda = 1.0;
      bool improved = false;
      for (int ls = 0; ls < 20; ++ls) {
        Vec trial = u - lambda * Vec(delta);
        auto ft = residual(trial);
        if (ft && ft->norm() < f->norm()) {
          u = trial;
          f = ft;
          improved = true;
          break;
        }
        lambda *= 0.5;
      }
      if (!improved) break;
    }
    double miss = f->norm();
    double t = u[nang];
    if (miss >= opts.miss_tolerance || t < t_lo - 1e-12 || t > t_hi + 1e-12) continue;
    Vec angles = nang == 0 ? Vec::Zero(1) : Vec(u.head(nang));
    NullRay ray(spec, x, spatial_for(angles, sign), t, opts.step);
    if (!best || t < best->arrival) best = NullConnection{ray.direction(), t, miss};
  }
  if (!best) throw NoConnection("null_connect: no null geodesic reaches the worldline inside its window");
  return *best;
}

std::vector<Vec> flowout_tangents(const MetricSpec& spec, const SourcePatch& source, const Vec& sigma, double s,
                                  double step) {
  PhaseState base = source.at(sigma);
  std::vector<Vec> out;
  out.push_back(flow_to(spec, base.x, base.p, s, step).p);
  const double delta = 1e-5 * std::max(1.0, source.extent);
  for (int c = 0; c < source.parameters(); ++c) {
    Vec sp = sigma, sm = sigma;
    sp[c] += delta;
    sm[c] -= delta;
    PhaseState a = source.at(sp), b = source.at(sm);
    Vec xp = flow_to(spec, a.x, a.p, s, step).x;
    Vec xm = flow_to(spec, b.x, b.p, s, step).x;
    out.push_back((xp - xm) / (2 * delta));
  }
  return out;
}

double transversality_metric(std::span<const Vec> tangents, const Vec& direction) {
  const auto n = direction.size();
  Eigen::MatrixXd t(n, static_cast<Eigen::Index>(tangents.size()));
  for (std::size_t c = 0; c < tangents.size(); ++c) t.col(static_cast<Eigen::Index>(c)) = tangents[c];
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(t);
  qr.setThreshold(1e-12);
  const auto rank = qr.rank();
  Eigen::MatrixXd q = Eigen::MatrixXd(qr.householderQ()).leftCols(rank);
  Eigen::VectorXd v = Eigen::VectorXd(direction) / direction.norm();
  return (v - q * (q.transpose() * v)).norm();
}

FlowoutSample flowout(const MetricSpec& spec, const SourcePatch& source, const Interval& time_window,
                      std::span<const CrossingEvent> events, const FlowoutOptions& opts) {
  FlowoutSample out;
  const int params = source.parameters();
  if (params == 0) {
    out.sigmas.push_back(Vec::Zero(0));
  } else {
    const int m = opts.samples_per_parameter;
    int total = 1;
    for (int c = 0; c < params; ++c) total *= m;
    for (int idx = 0; idx < total; ++idx) {
      Vec sigma(params);
      int rest = idx;
      for (int c = 0; c < params; ++c) {
        sigma[c] = -source.extent + 2.0 * source.extent * (rest % m) / std::max(1, m - 1);
        rest /= m;
      }
      if (sigma.norm() <= source.extent * (1 + 1e-12)) out.sigmas.push_back(sigma);
    }
  }
  for (int k = 0; k < opts.time_samples; ++k)
    out.times.push_back(time_window.lo + time_window.width() * k / std::max(1, opts.time_samples - 1));

  for (const Vec& sigma : out.sigmas) {
    PhaseState start = source.at(sigma);
    if (!future_timelike(spec, start.x, start.p))
      throw DomainError("flowout: initial vector is not future-directed timelike");
    std::optional<GeodesicPath> fwd, bwd;
    if (time_window.hi > 0.0) fwd = geodesic_flow(spec, start.x, start.p, time_window.hi, opts.step);
    if (time_window.lo < 0.0) bwd = geodesic_flow(spec, start.x, start.p, time_window.lo, opts.step);
    std::vector<PhaseState> row;
    for (double s : out.times) {
      if (s >= 0.0)
        row.push_back(fwd ? fwd->at(s) : PhaseState{start.x, start.p});
      else
        row.push_back(bwd->at(s));
    }
    out.states.push_back(std::move(row));
  }

  for (const CrossingEvent& ev : events) {
    auto tangents = flowout_tangents(spec, source, ev.sigma, ev.s, opts.step);
    double metric = transversality_metric(tangents, ev.direction);
    out.transversality.push_back(metric);
    if (metric < opts.threshold)
      throw TransversalityError("flowout: crossing geodesic is nearly tangent to the flowout (metric " +
                                std::to_string(metric) + ")");
  }
  return out;
}

}  // namespace relboltz
