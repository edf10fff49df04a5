#include "relboltz/errors.hpp"
#include "relboltz/numerics.hpp"
#include "relboltz/probe.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace relboltz;

namespace {

// Minkowski 1+2 with w = (0.5, 0.3, 0): one beam leaves the distinguished observer along
// +x1, the other leaves the observer at (0.3, 0.3) along -x2.
struct Scenario {
  MetricSpec spec = MetricSpec::minkowski(3);
  ProbeScenario sc;
  Vec w = vec({0.5, 0.3, 0.0});
  KernelParams kp;
  double eps = 0.01;
  double R = 0.1;

  Scenario() {
    sc.family = ObserverFamily::standard(3, 0.12, 33);
    sc.diamond = CausalDiamond::on(sc.family, -0.5, 0.85);
    sc.source_observer = vec({0.3, 0.3});
    kp.W = Box{{0.45, 0.55}, {0.25, 0.35}, {-0.05, 0.05}};
    kp.spatial_margin = 0.05;
    kp.r0 = 0.2;
    kp.r1 = 0.35;
    kp.q_box = Box{{0.8, 2.2}, {-2.0, 2.0}, {-2.0, 2.0}};
    kp.momentum_margin = 0.04;
  }

  Box kernel_support() const { return Box{{0.4, 0.6}, {0.2, 0.4}, {-0.1, 0.1}}; }

  ProbePlan plan() const { return build_probe_plan(spec, sc, w, eps, R, kernel_support()); }

  CollisionKernel kernel(const ProbePlan& plan) const {
    KernelParams k = kp;
    k.pp_box = Box::cube(plan.beam_patch.p, 0.03);
    k.qp_box = Box::cube(plan.beam_point.p, 0.03);
    return CollisionKernel::builtin(spec, k);
  }
};

// Line through e across gamma inside the detector plane.
DetectorGrid cross_line(const ProbePlan& plan, int count, double spacing) {
  const DetectorGrid& g = plan.detector;
  return DetectorGrid::line(g.centre, g.axes[0] - g.axes[1], count, spacing);
}

std::vector<Vec> section_on(const MetricSpec& spec, const ProbePlan& plan, const DetectorGrid& grid) {
  return lightlike_section(spec, LightlikeSection(spec, plan.gamma.z, plan.gamma.momentum), grid);
}

double sup(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

}  // namespace

TEST_CASE("probe plan aims both beams at w") {
  Scenario s;
  ProbePlan plan = s.plan();
  // Null legs along +x1 from mu_hat(0.2) and along -x2 from mu_(0.3,0.3)(0.2).
  CHECK(std::abs(plan.leg_hat.start - 0.2) < 2e-6);
  CHECK((plan.leg_hat.direction - vec({1.0, 1.0, 0.0})).norm() < 1e-6);
  CHECK((plan.leg_other.direction - vec({1.0, 0.0, -1.0})).norm() < 1e-6);

  const double speed = std::tan(std::numbers::pi / 4 - 0.05);
  Vec p = vec({1.0, speed, 0.0}), q = vec({1.0, 0.0, -speed});
  CHECK((plan.beam_point.x - (s.w - 0.25 * p)).norm() < 1e-6);
  CHECK((plan.beam_patch.x - (s.w - 0.25 * q)).norm() < 1e-6);
  CHECK(plan.aim_residual < 1e-6);
  REQUIRE(plan.intersections.size() == 1);
  CHECK(plan.intersection_residual < 1e-6);

  // G_S1 is the plane spanned by q and the frame direction e1; sine of the angle to p.
  Vec normal = vec({speed, 0.0, 1.0});
  double sine = std::abs(p.dot(normal)) / (p.norm() * normal.norm());
  MESSAGE("transversality " << plan.transversality << " analytic " << sine);
  CHECK(plan.transversality > 1e-4);
  CHECK(std::abs(plan.transversality - sine) < 1e-6);
}

TEST_CASE("probe plan rejects tangent legs and targets outside the diamond") {
  Scenario s;
  s.sc.source_observer = vec({-0.3, 0.0});
  CHECK_THROWS_AS(s.plan(), TangencyError);

  Scenario on_axis;
  on_axis.w = vec({0.5, 0.0, 0.0});
  CHECK_THROWS_AS(on_axis.plan(), TangencyError);

  Scenario late;
  late.w = vec({0.8, 0.3, 0.0});
  CHECK_THROWS_AS(late.plan(), DomainError);
}

TEST_CASE("return geodesic and lightlike section") {
  Scenario s;
  ProbePlan plan = s.plan();
  const ReturnGeodesic& g = plan.gamma;
  CHECK((g.e - vec({0.8, 0.0, 0.0})).norm() < 1e-6);
  CHECK(g.T > 0.0);
  CHECK(g.null_defect < 1e-12);

  const DetectorGrid& grid = plan.detector;
  REQUIRE(plan.section.size() == grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Vec& P = plan.section[k];
    CHECK(std::abs(inner(s.spec, grid.node(k), P, P)) < kNullTolerance * P.squaredNorm());
  }
  // The centre node is e and carries gamma's velocity.
  const std::size_t centre = grid.size() / 2;
  CHECK(grid.node(centre) == g.e);
  CHECK(plan.section[centre] == g.velocity);

  LightlikeSection section(s.spec, g.z, g.momentum);
  for (std::size_t k : {std::size_t{0}, std::size_t{40}, centre, grid.size() - 1}) {
    Vec x = grid.node(k);
    PhaseState moved = flow_to(s.spec, x, section.at(x), 0.05, 1e-3);
    CHECK((moved.p - section.at(moved.x)).norm() < 1e-7);
  }
}

TEST_CASE("lightlike section on a warped metric") {
  auto spec = MetricSpec::diagonal_warped_polynomial(3, {1.0, 0.3});
  Vec z = vec({0.5, 0.3, 0.0});
  Vec k = null_completion(spec, z, vec({-0.3, 0.1}));
  LightlikeSection section(spec, z, k);
  GeodesicPath gamma = geodesic_flow(spec, z, k, 1.0, 1e-3);
  PhaseState end = gamma.at(1.0);
  CHECK((section.at(end.x) - end.p).norm() < 1e-9);

  DetectorGrid grid = DetectorGrid::plane(end.x, vec({1.0, 0.0, 0.0}), vec({0.0, -0.3, 0.1}), 17, 0.01);
  auto P = lightlike_section(spec, section, grid);
  for (std::size_t j = 0; j < grid.size(); j += 7) {
    Vec x = grid.node(j);
    CHECK(std::abs(inner(spec, x, P[j], P[j])) < kNullTolerance * P[j].squaredNorm());
    PhaseState moved = flow_to(spec, x, P[j], 0.04, 1e-3);
    CHECK((moved.p - section.at(moved.x)).norm() < 1e-7);
  }
}

TEST_CASE("measurement vanishes for a zero kernel and for beams missing the kernel") {
  Scenario s;
  ProbePlan plan = s.plan();
  Measurement zero = measure(s.spec, CollisionKernel::zero(s.spec), plan);
  CHECK(sup(zero.values) == 0.0);
  CHECK(zero.values.size() == plan.detector.size());

  // Same beams, kernel localised where they do not overlap.
  KernelParams far = s.kernel(plan).params();
  far.W = Box{{0.45, 0.55}, {-0.35, -0.25}, {-0.05, 0.05}};
  DetectorGrid line = cross_line(plan, 9, 0.01);
  Measurement m = measure_on(s.spec, CollisionKernel::builtin(s.spec, far), plan, line, section_on(s.spec, plan, line));
  CHECK(sup(m.values) == 0.0);
}

TEST_CASE("measurement across gamma: symmetry, causal support, locality") {
  Scenario s;
  ProbePlan plan = s.plan();
  CollisionKernel A = s.kernel(plan);
  DetectorGrid line = cross_line(plan, 9, 0.01);
  auto section = section_on(s.spec, plan, line);

  Measurement m = measure_on(s.spec, A, plan, line, section);
  double top = sup(m.values);
  REQUIRE(top > 0.0);
  CHECK(std::abs(m.values[4]) == top);  // the node on gamma
  CHECK(m.loss_sup == 0.0);

  MeasureOptions swapped;
  swapped.swap_sources = true;
  swapped.loss_samples = 0;
  Measurement b = measure_on(s.spec, A, plan, line, section, swapped);
  for (std::size_t k = 0; k < line.size(); ++k) CHECK(std::abs(m.values[k] - b.values[k]) <= 1e-8 * top);

  double radius = interaction_radius(s.spec, plan);
  MESSAGE("interaction radius " << radius);
  for (std::size_t k = 0; k < line.size(); ++k)
    if (m.values[k] != 0.0) CHECK(causal_deficit(s.spec, plan.z1, line.node(k)) <= std::sqrt(2.0) * radius);

  // Remove the kernel from a ball around z1 containing the interaction region.
  Vec z1 = plan.z1;
  auto away = [z1, radius](const Vec& x) { return smooth_step(((x - z1).norm() - radius) / radius); };
  Measurement local = measure_on(s.spec, A.with_spatial_weight(away), plan, line, section, swapped);
  CHECK(sup(local.values) <= 1e-3 * top);
}

TEST_CASE("singular support detection on synthetic data") {
  Vec c = vec({0.0, 0.0, 0.0});
  DetectorGrid grid = DetectorGrid::plane(c, vec({1.0, 0.0, 0.0}), vec({0.0, 1.0, 0.0}), 33, 0.1);
  // Ridge along the line through the centre with direction (1, 0.4) in grid units.
  const double nx = -0.4 / std::hypot(1.0, 0.4), ny = 1.0 / std::hypot(1.0, 0.4);
  auto line_distance = [&](const std::vector<double>& ij) { return std::abs((ij[0] - 16) * nx + (ij[1] - 16) * ny); };
  Measurement m;
  m.grid = grid;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    auto idx = grid.unflatten(k);
    std::vector<double> ij{double(idx[0]), double(idx[1])};
    double d = line_distance(ij);
    double r2 = (ij[0] - 10) * (ij[0] - 10) + (ij[1] - 20) * (ij[1] - 20);
    m.values.push_back(std::exp(-d * d / (2 * 0.4 * 0.4)) + 0.5 * std::exp(-r2 / (2 * 8.0 * 8.0)));
  }
  Detection d = detect_singular_support(m);
  REQUIRE(!d.cells.empty());
  for (std::size_t k : d.cells) {
    auto idx = grid.unflatten(k);
    CHECK(line_distance({double(idx[0]), double(idx[1])}) <= 1.0);
  }

  Measurement smooth = m;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    auto idx = grid.unflatten(k);
    double r2 = (idx[0] - 16.0) * (idx[0] - 16.0) + (idx[1] - 16.0) * (idx[1] - 16.0);
    smooth.values[k] = std::exp(-r2 / (2 * 4.0 * 4.0));
  }
  CHECK(detect_singular_support(smooth).cells.empty());

  Measurement zero = m;
  std::fill(zero.values.begin(), zero.values.end(), 0.0);
  CHECK_THROWS_AS(detect_singular_support(zero), EmptyDetection);

  Measurement coarse;
  coarse.grid = DetectorGrid::plane(c, vec({1.0, 0.0, 0.0}), vec({0.0, 1.0, 0.0}), 10, 0.1);
  coarse.values.assign(coarse.grid.size(), 1.0);
  CHECK_THROWS_AS(detect_singular_support(coarse), DomainError);
}

TEST_CASE("observation times recovered from line detectors") {
  Scenario s;
  ProbePlan plan = s.plan();
  CollisionKernel A = s.kernel(plan);
  ProbeScenario few = s.sc;
  // The last observer is too far away to see w before s = 1.
  few.family = ObserverFamily::from_params(3, {vec({0.0, 0.0}), vec({0.1, 0.0}), vec({-0.1, 0.0}), vec({1.5, 0.0})});
  auto lines = measure_observers(s.spec, A, plan, few);
  auto rec = recover_observation_times(s.spec, few, s.w, lines);
  REQUIRE(rec.size() == 4);
  for (std::size_t i = 0; i < 3; ++i) {
    // Minkowski oracle: t0 + |offset|.
    double truth = s.w[0] + (s.w.tail(2) - rec[i].a).norm();
    CHECK(std::abs(rec[i].truth - truth) < 2e-6);
    CHECK(rec[i].detected);
    CHECK(rec[i].delta_steps() <= 2.0);
  }
  CHECK_FALSE(rec[3].detected);
  CHECK(rec[3].recovered == 1.0);
  CHECK(rec[3].truth == 1.0);

  // A second target with a different cone gives a different profile.
  Scenario other;
  other.w = vec({0.5, 0.25, 0.0});
  ProbePlan plan2 = other.plan();
  auto rec2 = recover_observation_times(other.spec, few, other.w,
                                        measure_observers(other.spec, other.kernel(plan2), plan2, few));
  bool differs = false;
  for (std::size_t i = 0; i < 3; ++i) differs = differs || rec2[i].recovered != rec[i].recovered;
  CHECK(differs);
}

TEST_CASE("conformal consistency of geodesic paths") {
  auto eta = MetricSpec::minkowski(3);
  Vec w = vec({0.5, 0.3, 0.0});
  std::vector<Vec> dirs{vec({1.0, 0.2, 0.0}), vec({1.0, 0.0, 0.3})};

  auto same = conformal_consistency_check(eta, MetricSpec::conformal_minkowski_affine(3, 0.0, vec({0, 0, 0})), w, dirs);
  CHECK(same.max_residual < 1e-8);
  auto constant = conformal_consistency_check(eta, MetricSpec::conformal_minkowski_affine(3, 0.4, vec({0, 0, 0})), w, dirs);
  CHECK(constant.max_residual < 1e-6);
  CHECK(constant.monotone);

  auto bent = conformal_consistency_check(eta, MetricSpec::conformal_minkowski_affine(3, 0.0, vec({0, 0.3, 0})), w, dirs);
  MESSAGE("nonconstant residual per length " << bent.per_length[0] << " " << bent.per_length[1]);
  CHECK(bent.per_length[0] > 1e-3);
  // Regression floor from the first measured run (0.0353).
  CHECK(bent.per_length[0] > 0.03);
}
