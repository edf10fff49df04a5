#include "oracles.hpp"

#include "relboltz/errors.hpp"
#include "relboltz/geodesics.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>

using namespace relboltz;

namespace {

MetricSpec warped_linear(int n) { return MetricSpec::diagonal_warped_polynomial(n, {1.0, 0.1}); }

// Future null geodesic of -dt^2 + a(t)^2 dx^2 with a = 1 + 0.1 t, known in closed form through
// conformal time: the spatial path is straight with coordinate speed 1/a(t).
struct WarpedNullRay {
  Vec x0;
  Vec dir;       // unit spatial direction
  double c = 0;  // conserved a(t) * p0
  static double a(double t) { return 1.0 + 0.1 * t; }
  // Coordinate position at time t, and the affine parameter elapsed since x0 (signed).
  Vec position(double t) const {
    Vec x = x0;
    x[0] = t;
    x.tail(x0.size() - 1) += 10.0 * std::log(a(t) / a(x0[0])) * dir;
    return x;
  }
  double parameter(double t) const {
    // ds = a dt / c
    return ((t + 0.05 * t * t) - (x0[0] + 0.05 * x0[0] * x0[0])) / c;
  }
};

}  // namespace

TEST_CASE("minkowski geodesics are straight lines") {
  auto spec = MetricSpec::minkowski(3);
  Vec x = vec({0.1, -0.2, 0.3});
  Vec p = vec({1.2, 0.4, -0.5});
  auto path = geodesic_flow(spec, x, p, 2.0, 0.01);
  for (const auto& s : path.samples) {
    CHECK((s.x - (x + s.s * p)).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(s.p == p);
  }
  CHECK(path.samples.back().s == 2.0);
  CHECK(path.mass_shell_drift < 1e-15);
}

TEST_CASE("reparametrisation of the flow") {
  auto spec = warped_linear(3);
  Vec x = vec({0.0, 0.2, -0.1});
  Vec p = vec({1.0, 0.3, 0.2});
  for (double s : {0.25, 0.5, 1.0}) {
    PhaseState doubled = flow_to(spec, x, 2.0 * p, s, 1e-3);
    PhaseState slow = flow_to(spec, x, p, 2.0 * s, 1e-3);
    CHECK((doubled.x - slow.x).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((doubled.p - 2.0 * slow.p).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("fine-step self convergence on a warped metric") {
  auto spec = warped_linear(3);
  Vec x = vec({0.0, 0.1, 0.2});
  Vec p = vec({1.0, 0.5, -0.3});
  PhaseState coarse = flow_to(spec, x, p, 1.0, 1e-3);
  PhaseState fine = flow_to(spec, x, p, 1.0, 1e-5);
  CHECK((coarse.x - fine.x).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((coarse.p - fine.p).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("null geodesic matches the closed-form warped ray") {
  auto spec = warped_linear(3);
  WarpedNullRay ray{vec({0.0, 0.0, 0.0}), vec({0.6, 0.8}), 0.0};
  Vec p = null_completion(spec, ray.x0, ray.dir);  // a(0) = 1 so p0 = 1
  ray.c = WarpedNullRay::a(0.0) * p[0];
  auto path = geodesic_flow(spec, ray.x0, p, 1.5, 1e-3);
  for (std::size_t k = 0; k < path.samples.size(); k += 100) {
    const auto& s = path.samples[k];
    Vec expected = ray.position(s.x[0]);
    CHECK((s.x - expected).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(ray.parameter(s.x[0]) == doctest::Approx(s.s).epsilon(1e-10));
  }
}

TEST_CASE("mass shell drift is fourth order") {
  auto spec = MetricSpec::diagonal_warped_polynomial(3, {1.0, 0.5, 0.3});
  Vec x = vec({0.0, 0.0, 0.0});
  Vec p = vec({1.0, 0.6, 0.3});
  double d1 = geodesic_flow(spec, x, p, 2.0, 0.1).mass_shell_drift;
  double d2 = geodesic_flow(spec, x, p, 2.0, 0.05).mass_shell_drift;
  double ratio = d1 / d2;
  MESSAGE("drift " << d1 << " -> " << d2 << ", ratio " << ratio);
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("flow semigroup") {
  auto spec = warped_linear(3);
  oracle::Sampler rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    Vec x = rng.vector(3, -1.0, 1.0);
    Vec p = vec({1.0, rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)});
    double t1 = rng.uniform(0.1, 1.0), t2 = rng.uniform(0.1, 1.0);
    PhaseState mid = flow_to(spec, x, p, t1, 1e-3);
    PhaseState two = flow_to(spec, mid.x, mid.p, t2, 1e-3);
    PhaseState one = flow_to(spec, x, p, t1 + t2, 1e-3);
    CHECK((two.x - one.x).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((two.p - one.p).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("geodesic flow stops at the chart boundary") {
  auto spec = MetricSpec::minkowski(2, Box::cube(zeros(2), 1.0));
  auto path = geodesic_flow(spec, zeros(2), vec({1.0, 0.5}), 5.0, 0.01);
  CHECK(path.left_chart);
  CHECK(path.samples.back().x[0] <= 1.0);
  CHECK(path.samples.back().x[0] > 0.98);
  CHECK_THROWS_AS(geodesic_flow(spec, zeros(2), zeros(2), 1.0, 0.1), ZeroVectorError);
}

TEST_CASE("exit time") {
  auto mink = MetricSpec::minkowski(2);
  Box k{{-1.0, 1.0}, {-1.0, 1.0}};
  SUBCASE("straight ray against a dense scan") {
    Vec x = vec({2.0, 0.0});
    Vec p = vec({1.0, 0.0});
    double l = exit_time(mink, x, p, k);
    double scan = oracle::scan_last([&](double s) { return k.contains(Vec(x - s * p)); }, 10.0, 100000);
    CHECK(l == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(std::abs(l - scan) < 1e-9);
  }
  SUBCASE("momentum scaling") {
    Vec x = vec({2.0, 0.3});
    Vec p = vec({1.0, 0.4});
    CHECK(exit_time(mink, x, 2.0 * p, k) == doctest::Approx(exit_time(mink, x, p, k) / 2.0).epsilon(1e-14));
  }
  SUBCASE("disjoint backward cone") {
    CHECK(exit_time(mink, vec({2.0, 5.0}), vec({1.0, 0.1}), k) == 0.0);
    CHECK(exit_time(mink, vec({-3.0, 0.0}), vec({1.0, 0.0}), k) == 0.0);
  }
  SUBCASE("region reaching beyond the chart") {
    Box deep{{-50.0, 1.0}, {-1.0, 1.0}};
    try {
      exit_time(mink, zeros(2), vec({1.0, 0.0}), deep);
      FAIL("expected ChartExitError");
    } catch (const ChartExitError& e) {
      CHECK(e.partial_bound() == doctest::Approx(10.0));
    }
    auto warped = warped_linear(2);
    CHECK_THROWS_AS(exit_time(warped, zeros(2), vec({1.0, 0.0}), deep), ChartExitError);
  }
}

TEST_CASE("exit time on a warped metric against the closed-form null ray") {
  auto spec = warped_linear(3);
  Box k{{-2.0, 0.5}, {-1.0, 1.0}, {-0.5, 0.5}};
  oracle::Sampler rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    WarpedNullRay ray;
    ray.x0 = vec({rng.uniform(0.0, 2.0), rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3)});
    double ang = rng.uniform(0.0, 2.0 * M_PI);
    ray.dir = vec({std::cos(ang), std::sin(ang)});
    Vec p = null_completion(spec, ray.x0, ray.dir);
    ray.c = WarpedNullRay::a(ray.x0[0]) * p[0];
    // Earliest coordinate time still in K, then the affine parameter back to it.
    double t_exit = ray.x0[0] - oracle::scan_last([&](double d) { return k.contains(ray.position(ray.x0[0] - d)); },
                                                  ray.x0[0] + 2.0, 20000);
    double expected = k.contains(ray.position(t_exit)) ? -ray.parameter(t_exit) : 0.0;
    CHECK(std::abs(exit_time(spec, ray.x0, p, k) - expected) < 1e-8);
  }
}

TEST_CASE("exit time homogeneity over random causal vectors") {
  auto start = std::chrono::steady_clock::now();
  oracle::Sampler rng(47);
  for (const auto& spec : {warped_linear(3), MetricSpec::minkowski(3)}) {
    Box k{{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}};
    for (int trial = 0; trial < 50; ++trial) {
      Vec x = rng.vector(3, -1.5, 1.5);
      Vec spatial = rng.vector(2, -1.0, 1.0);
      Vec p = null_completion(spec, x, spatial);
      p[0] *= rng.uniform(1.0, 2.0);
      double ref = exit_time(spec, x, p, k);
      for (double lambda : {0.5, 2.0, 4.0}) CHECK(std::abs(lambda * exit_time(spec, x, lambda * p, k) - ref) < 1e-7);
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 10.0);
}

TEST_CASE("backward trace intervals") {
  auto spec = warped_linear(2);
  Box k{{-1.0, 1.0}, {-0.2, 0.2}};
  // Ray crossing the strip x1 in [-0.2, 0.2] once on the way back.
  BackwardTrace trace(spec, vec({0.8, 0.5}), vec({1.0, 0.9}), k);
  REQUIRE(trace.inside().size() == 1);
  const Interval& iv = trace.inside().front();
  CHECK(std::abs(trace.at(iv.lo).x[1] - 0.2) < 1e-9);
  CHECK(std::abs(trace.at(iv.hi).x[1] + 0.2) < 1e-9);
  CHECK(trace.exit_time() == iv.hi);
  CHECK_FALSE(trace.unresolved());
}

TEST_CASE("null shooting") {
  auto mink = MetricSpec::minkowski(3);
  Worldline line{[](double t) { return vec({t, 1.0, 0.0}); }, {-5.0, 5.0}};
  SUBCASE("minkowski unit distance") {
    auto hit = null_connect(mink, zeros(3), line);
    CHECK(hit.arrival == doctest::Approx(1.0).epsilon(1e-10));
    CHECK((hit.direction - vec({1.0, 1.0, 0.0})).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(hit.miss < 1e-8);
    CHECK(std::abs(inner(mink, zeros(3), hit.direction, hit.direction)) < kNullTolerance);
  }
  SUBCASE("target on the worldline") {
    CHECK_THROWS_AS(null_connect(mink, vec({0.3, 1.0, 0.0}), line), DegenerateTargetError);
  }
  SUBCASE("window in the past") {
    Worldline past{line.at, {-5.0, -1.0}};
    CHECK_THROWS_AS(null_connect(mink, zeros(3), past), NoConnection);
  }
  SUBCASE("constant conformal rescaling keeps the arrival") {
    auto conf = MetricSpec::conformal_minkowski_affine(3, 0.7, zeros(3));
    Vec x = vec({0.2, -0.3, 0.4});
    Worldline other{[](double t) { return vec({t, 0.5, -0.6}); }, {-5.0, 5.0}};
    auto a = null_connect(mink, x, other);
    auto b = null_connect(conf, x, other);
    CHECK(std::abs(a.arrival - b.arrival) < 1e-10);
    double expected = 0.2 + std::hypot(0.8, 1.0);
    CHECK(a.arrival == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("two dimensions") {
    auto m2 = MetricSpec::minkowski(2);
    Worldline left{[](double t) { return vec({t, -0.7}); }, {-5.0, 5.0}};
    auto hit = null_connect(m2, zeros(2), left);
    CHECK(hit.arrival == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(hit.direction[1] == doctest::Approx(-1.0));
  }
  SUBCASE("four dimensions") {
    auto m4 = MetricSpec::minkowski(4);
    Worldline obs{[](double t) { return vec({t, 0.3, -0.4, 1.2}); }, {-5.0, 5.0}};
    auto hit = null_connect(m4, zeros(4), obs, {.directions_per_angle = 32});
    CHECK(hit.arrival == doctest::Approx(1.3).epsilon(1e-10));
  }
  SUBCASE("warped metric against conformal time") {
    auto spec = warped_linear(3);
    Worldline obs{[](double t) { return vec({t, 0.8, 0.3}); }, {-5.0, 5.0}};
    auto hit = null_connect(spec, zeros(3), obs);
    double d = std::hypot(0.8, 0.3);
    double expected = 10.0 * (std::exp(d / 10.0) - 1.0);
    CHECK(std::abs(hit.arrival - expected) < 1e-8);
    CHECK(hit.miss < 1e-8);
    CHECK(std::abs(inner(spec, zeros(3), hit.direction, hit.direction)) < kNullTolerance * hit.direction.squaredNorm());
  }
}

TEST_CASE("flowout and transversality") {
  auto mink = MetricSpec::minkowski(3);
  Frame frame = Frame::Zero(6, 1);
  frame(2, 0) = 1.0;  // base displacement along x2, orthogonal to the spatial momentum
  auto patch = SourcePatch::patch(zeros(3), vec({1.0, 0.3, 0.0}), frame, 0.2, 0.05);

  SUBCASE("plane against crossing line") {
    Vec v = vec({1.0, -0.5, 0.4});
    CrossingEvent ev{Vec::Zero(1), 0.5, v};
    auto sample = flowout(mink, patch, {0.0, 1.0}, std::span(&ev, 1));
    // Analytic: |v . n| / |v| with n the unit normal of span{(1,0.3,0), (0,0,1)}.
    Eigen::Vector3d e1(1.0, 0.3, 0.0), e2(0.0, 0.0, 1.0);
    Eigen::Vector3d normal = e1.cross(e2).normalized();
    Eigen::Vector3d vv(v[0], v[1], v[2]);
    double expected = std::abs(vv.normalized().dot(normal));
    REQUIRE(sample.transversality.size() == 1);
    CHECK(std::abs(sample.transversality[0] - expected) < 1e-6);
    // Base points of the flowout lie on the plane.
    for (const auto& row : sample.states)
      for (const auto& st : row) {
        Eigen::Vector3d b(st.x[0], st.x[1], st.x[2]);
        CHECK(std::abs(b.dot(normal)) < 1e-12);
      }
  }
  SUBCASE("crossing along a member geodesic") {
    CrossingEvent ev{Vec::Zero(1), 0.5, vec({1.0, 0.3, 0.0})};
    CHECK_THROWS_AS(flowout(mink, patch, {0.0, 1.0}, std::span(&ev, 1)), TransversalityError);
  }
  SUBCASE("point source flows out along one geodesic") {
    auto point = SourcePatch::point(zeros(3), vec({1.0, 0.3, 0.0}), 0.05);
    auto sample = flowout(mink, point, {0.0, 1.0});
    CHECK(sample.sigmas.size() == 1);
    REQUIRE(sample.states.size() == 1);
    for (std::size_t k = 0; k < sample.times.size(); ++k)
      CHECK((sample.states[0][k].x - sample.times[k] * vec({1.0, 0.3, 0.0})).norm() < 1e-12);
  }
}
