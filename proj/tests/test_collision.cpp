#include "oracles.hpp"

#include "relboltz/collision.hpp"
#include "relboltz/errors.hpp"
#include "relboltz/numerics.hpp"

#include <doctest.h>

#include <cmath>

using namespace relboltz;

namespace {

// Kernel with future-timelike p', q' boxes and a wide q box, over W = [0,1] x [-0.5,0.5]^(n-1).
KernelParams test_params(int n) {
  KernelParams kp;
  kp.W = Box(n);
  kp.W[0] = {0.0, 1.0};
  for (int i = 1; i < n; ++i) kp.W[i] = {-0.5, 0.5};
  kp.r0 = 0.5;
  kp.r1 = 1.0;
  kp.pp_box = Box(n);
  kp.qp_box = Box(n);
  kp.q_box = Box(n);
  kp.pp_box[0] = kp.qp_box[0] = {1.0, 2.0};
  kp.q_box[0] = {0.0, 4.0};
  for (int i = 1; i < n; ++i) {
    kp.pp_box[i] = kp.qp_box[i] = {-0.6, 0.6};
    kp.q_box[i] = {-3.0, 3.0};
  }
  return kp;
}

// Bump density centred at (xc, pc) with radii (rx, rp).
PhaseDensity bump_density(const Vec& xc, double rx, const Vec& pc, double rp, double height = 1.0) {
  auto fn = [=](const Vec& x, const Vec& p) {
    return height * unit_bump((x - xc).norm() / rx) * unit_bump((p - pc).norm() / rp);
  };
  return PhaseDensity::analytic(static_cast<int>(xc.size()), fn, {Box::cube(xc, rx), Box::cube(pc, rp)}, true,
                                height);
}

}  // namespace

TEST_CASE("builtin kernel examples") {
  auto spec = MetricSpec::minkowski(3);
  auto A = CollisionKernel::builtin(spec, test_params(3));
  Vec x = vec({0.5, 0.1, -0.2});
  Vec p = vec({1.2, 1.2, 0.0});  // lightlike, |p|_e > r1
  Vec pp = vec({1.5, 0.3, 0.1});
  Vec qp = vec({1.4, -0.2, 0.2});
  Vec q = pp + qp - p;
  CHECK(A(x, p, q, pp, qp) > 0.0);

  // lambda |p|_e < r0 kills the whole L1 norm.
  CHECK(kernel_l1(A, x, 0.2 * p) == 0.0);
  CHECK(kernel_l1(A, x, p) > 0.0);

  // Outside the spatial support.
  CHECK(A(vec({3.0, 0.0, 0.0}), p, q, pp, qp) == 0.0);
  CHECK(A.spatial(vec({0.5, 0.0, 0.0})) == 1.0);

  auto bad = test_params(3);
  bad.r0 = 1.0;
  CHECK_THROWS_AS(CollisionKernel::builtin(spec, bad), KernelParamError);
  bad.r0 = 2.0;
  CHECK_THROWS_AS(CollisionKernel::builtin(spec, bad), KernelParamError);
  CHECK(CollisionKernel::zero(spec).is_zero());
}

TEST_CASE("sigma quadrature") {
  Vec p = vec({1.0, 0.4});
  Box bq = Box::from_corners(vec({0.0, -1.0}), vec({2.0, 1.0}));
  Box bp = Box::from_corners(vec({0.5, -0.5}), vec({1.5, 0.7}));
  SigmaQuadRule rule{8, 8, 1, bq, bp};

  SUBCASE("constants integrate to the box volumes") {
    double v = sigma_quadrature(rule, p, [](const Vec&, const Vec&, const Vec&) { return 1.0; });
    CHECK(std::abs(v - bq.volume() * bp.volume()) < 1e-10);
  }
  SUBCASE("momentum is conserved exactly at every node") {
    int nodes = 0;
    double worst = 0.0;
    sigma_quadrature(rule, p, [&](const Vec& q, const Vec& pp, const Vec& qp) {
      ++nodes;
      worst = std::max(worst, (p + q - pp - qp).cwiseAbs().maxCoeff());
      return 0.0;
    });
    CHECK(nodes == 64 * 64);
    CHECK(worst == 0.0);
  }
  SUBCASE("integrand of q' against a dense Riemann sum") {
    auto g = [](const Vec& qp) { return std::exp(-0.5 * (qp - vec({1.2, 0.1})).squaredNorm()); };
    double v = sigma_quadrature(rule, p, [&](const Vec&, const Vec&, const Vec& qp) { return g(qp); });
    // Midpoint sums at 2x and 4x node density over the same (q, p') boxes, Richardson-combined.
    auto midpoint = [&](int m) {
      double sum = 0.0;
      double hq0 = bq[0].width() / m, hq1 = bq[1].width() / m, hp0 = bp[0].width() / m, hp1 = bp[1].width() / m;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
          for (int c = 0; c < m; ++c)
            for (int d = 0; d < m; ++d) {
              Vec q = vec({bq[0].lo + (a + 0.5) * hq0, bq[1].lo + (b + 0.5) * hq1});
              Vec pp = vec({bp[0].lo + (c + 0.5) * hp0, bp[1].lo + (d + 0.5) * hp1});
              sum += g(p + q - pp);
            }
      return sum * hq0 * hq1 * hp0 * hp1;
    };
    double ref = (4.0 * midpoint(32) - midpoint(16)) / 3.0;
    MESSAGE("sigma quadrature " << v << " riemann " << ref);
    CHECK(std::abs(v - ref) < 1e-4);
  }
  SUBCASE("node doubling is stable for smooth integrands") {
    auto f = [](const Vec& q, const Vec& pp, const Vec& qp) {
      return std::cos(0.3 * q[0] - 0.2 * pp[1]) * std::exp(-0.3 * qp.squaredNorm());
    };
    SigmaQuadRule fine{16, 16, 1, bq, bp};
    CHECK(std::abs(sigma_quadrature(rule, p, f) - sigma_quadrature(fine, p, f)) < 1e-6);
  }
}

TEST_CASE("gain term trivial cases") {
  auto spec = MetricSpec::minkowski(3);
  auto A = CollisionKernel::builtin(spec, test_params(3));
  Vec x = vec({0.5, 0.0, 0.0});
  Vec p = vec({1.2, 1.2, 0.0});
  auto u = bump_density(x, 0.3, vec({1.5, 0.2, 0.0}), 0.3);
  auto far = bump_density(vec({0.5, 2.0, 0.0}), 0.3, vec({1.5, 0.2, 0.0}), 0.3);
  CHECK(q_gain(spec, A, u, far, x, p) == 0.0);
  CHECK(q_gain(spec, CollisionKernel::zero(spec), u, u, x, p) == 0.0);
  CHECK(q_gain(spec, A, u, u, x, p) < 0.0);
}

TEST_CASE("gain term against a dense Riemann sum in the (q, p') chart") {
  auto spec = MetricSpec::minkowski(2);
  auto kp = test_params(2);
  auto A = CollisionKernel::builtin(spec, kp);
  Vec x = vec({0.5, 0.1});
  Vec p = vec({1.3, 1.3});
  Vec c1 = vec({1.5, 0.2}), c2 = vec({1.4, -0.1});
  const double r = 0.25;
  auto u1 = bump_density(x, 0.4, c1, r);
  auto u2 = bump_density(x, 0.4, c2, r, 0.7);
  CollisionOptions opts;
  opts.order = 8;
  opts.panels = 8;
  double gain = q_gain(spec, A, u1, u2, x, p, opts);

  // Oracle: midpoint sum over (q, p') covering the product of the bump supports.
  const int m = 48;
  Box pp_box = Box::cube(c1, r);
  Box q_box = Box::cube(c1 + c2 - p, 2 * r);
  double ref = 0.0;
  double h[4] = {q_box[0].width() / m, q_box[1].width() / m, pp_box[0].width() / m, pp_box[1].width() / m};
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c)
        for (int d = 0; d < m; ++d) {
          Vec q = vec({q_box[0].lo + (a + 0.5) * h[0], q_box[1].lo + (b + 0.5) * h[1]});
          Vec pp = vec({pp_box[0].lo + (c + 0.5) * h[2], pp_box[1].lo + (d + 0.5) * h[3]});
          Vec qp = p + q - pp;
          ref += u1(x, pp) * u2(x, qp) * A(x, p, q, pp, qp);
        }
  ref *= -h[0] * h[1] * h[2] * h[3];
  MESSAGE("gain " << gain << " oracle " << ref);
  CHECK(ref < 0.0);
  CHECK(std::abs(gain - ref) < 1e-4);
}

TEST_CASE("loss term") {
  auto spec = MetricSpec::minkowski(3);
  auto A = CollisionKernel::builtin(spec, test_params(3));
  Vec x = vec({0.5, 0.0, 0.0});
  auto u2 = bump_density(x, 0.3, vec({1.5, 0.0, 0.0}), 0.3);

  SUBCASE("vanishing prefactor") {
    auto u1 = bump_density(x, 0.3, vec({1.5, 0.2, 0.0}), 0.2);
    Vec p = vec({1.0, 1.0, 0.0});
    CHECK(u1(x, p) == 0.0);
    CHECK(q_loss(spec, A, u1, u2, x, p) == 0.0);
    CollisionOptions fine;
    fine.panels = 8;
    CHECK(q_loss(spec, A, u1, u2, x, vec({1.5, 0.2, 0.0}), fine) > 0.0);
  }
  SUBCASE("lightlike p against a transported timelike beam") {
    auto beam = vlasov_solve(spec, mollified_delta_source(SourcePatch::point(vec({0.0, 0.0, 0.0}),
                                                                            vec({1.0, 0.5, 0.0}), 0.05)));
    oracle::Sampler rng(41);
    for (int k = 0; k < 50; ++k) {
      Vec y = vec({0.5, 0.25, 0.0}) + rng.vector(3, -0.05, 0.05);
      Vec dir = rng.vector(2, -1.0, 1.0);
      Vec p = vec({dir.norm(), dir[0], dir[1]}) * (1.5 / dir.norm());
      CHECK(q_loss(spec, A, beam, u2, y, p) == 0.0);
    }
  }
}

TEST_CASE("collision operator is bilinear") {
  auto spec = MetricSpec::minkowski(3);
  auto A = CollisionKernel::builtin(spec, test_params(3));
  oracle::Sampler rng(57);
  CollisionOptions opts;
  opts.panels = 2;
  for (int trial = 0; trial < 10; ++trial) {
    Vec x = vec({0.5, 0.0, 0.0}) + rng.vector(3, -0.2, 0.2);
    auto make = [&] {
      Vec pc = vec({rng.uniform(1.2, 1.8), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)});
      return bump_density(x + rng.vector(3, -0.1, 0.1), 0.4, pc, rng.uniform(0.2, 0.5), rng.uniform(0.2, 2.0));
    };
    auto u = make(), v = make(), w = make();
    double alpha = rng.uniform(-2.0, 2.0);
    auto uv = linear_combination(std::vector<double>{1.0, alpha}, std::vector<PhaseDensity>{u, v});
    Vec p = vec({rng.uniform(1.2, 1.8), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)});
    double lhs = q_full(spec, A, uv, w, x, p, opts);
    double rhs = q_full(spec, A, u, w, x, p, opts) + alpha * q_full(spec, A, v, w, x, p, opts);
    CHECK(std::abs(lhs - rhs) < 1e-10);
    double lhs2 = q_full(spec, A, w, uv, x, p, opts);
    double rhs2 = q_full(spec, A, w, u, x, p, opts) + alpha * q_full(spec, A, w, v, x, p, opts);
    CHECK(std::abs(lhs2 - rhs2) < 1e-10);
  }
}

TEST_CASE("kernel L1 bound and scaling") {
  auto spec = MetricSpec::minkowski(3);
  auto A = CollisionKernel::builtin(spec, test_params(3));
  oracle::Sampler rng(61);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    Vec x = rng.vector(3, -0.3, 1.3);
    Vec dir = rng.vector(2, -1.0, 1.0);
    double size = std::exp(rng.uniform(std::log(0.1), std::log(100.0)));
    Vec p = vec({dir.norm() * rng.uniform(1.0, 2.0), dir[0], dir[1]});
    p *= size / p.norm();
    worst = std::max(worst, kernel_l1(A, x, p));
  }
  CHECK(worst > 0.0);
  CHECK(worst <= A.l1_bound());

  Vec x = vec({0.5, 0.0, 0.0});
  Vec p = vec({1.0, 0.6, 0.0});
  for (double lambda = 0.0; lambda * p.norm() < 0.5; lambda += 0.01) CHECK(kernel_l1(A, x, lambda * p) == 0.0);
}

TEST_CASE("admissibility report for the builtin kernel") {
  auto spec = MetricSpec::minkowski(3);
  auto rep = check_admissible(spec, CollisionKernel::builtin(spec, test_params(3)));
  CHECK(rep.cond2);
  CHECK(rep.cond3_samples > 100);
  CHECK(rep.cond3_min_value > 0.0);
  CHECK(rep.cond4_max_l1 <= rep.declared_l1);
  CHECK(rep.cond5_vanishes);
  CHECK(rep.passed());
  CHECK(rep.cond5_profile.front().second == 0.0);
  CHECK(rep.cond5_profile.back().second > 0.0);

  auto zero = check_admissible(spec, CollisionKernel::zero(spec));
  CHECK_FALSE(zero.passed());
}

TEST_CASE("collision integral along the flow") {
  auto spec = MetricSpec::minkowski(3);
  auto A = CollisionKernel::builtin(spec, test_params(3));
  double CA = measure_collision_constant(spec, A);
  CHECK(CA > 0.0);
  Vec x = vec({1.1, 0.1, 0.0});
  Vec p = vec({1.5, 0.3, 0.1});
  auto u = bump_density(vec({0.5, 0.0, 0.0}), 0.6, vec({1.5, 0.1, 0.0}), 0.5, 0.8);
  auto v = bump_density(vec({0.6, 0.1, 0.0}), 0.6, vec({1.4, 0.0, 0.1}), 0.5, 1.3);
  CHECK(q_along_flow(spec, A, PhaseDensity::zero(3), v, x, p) == 0.0);
  double base = q_along_flow(spec, A, u, v, x, p);
  CHECK(base != 0.0);
  for (double lambda : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    double val = q_along_flow(spec, A, u, v, x, lambda * p);
    CHECK(std::abs(val) <= CA * 0.8 * 1.3);
  }
}

TEST_CASE("collision source density") {
  auto spec = MetricSpec::minkowski(3);
  auto A = CollisionKernel::builtin(spec, test_params(3));
  auto u = bump_density(vec({0.5, 0.0, 0.0}), 0.5, vec({1.5, 0.1, 0.0}), 0.4);
  auto v = bump_density(vec({0.6, 0.1, 0.0}), 0.5, vec({1.4, 0.0, 0.1}), 0.4, 0.5);
  auto src = collision_source(spec, A, u, v, true);
  CHECK(src.rep() == DensityRep::CollisionSource);
  Vec x = vec({0.55, 0.05, 0.0});
  for (Vec p : {vec({1.5, 0.1, 0.0}), vec({1.3, 1.3, 0.0}), vec({2.5, 0.5, -0.3})}) {
    double expect = q_full(spec, A, u, v, x, p) + q_full(spec, A, v, u, x, p);
    CHECK(src(x, p) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(src(vec({3.0, 0.0, 0.0}), vec({1.5, 0.1, 0.0})) == 0.0);
  CHECK(collision_source(spec, CollisionKernel::zero(spec), u, v, true).is_zero());
}

TEST_CASE("causal filter drops acausal nodes") {
  auto spec = MetricSpec::minkowski(3);
  auto kp = test_params(3);
  auto A = CollisionKernel::builtin(spec, kp);
  Vec x = vec({0.5, 0.0, 0.0});
  auto u = bump_density(x, 0.5, vec({1.5, 0.1, 0.0}), 0.5);
  Vec p = vec({1.2, 1.2, 0.0});
  CollisionOptions on;
  on.causal_filter = true;
  double plain = q_gain(spec, A, u, u, x, p);
  double filtered = q_gain(spec, A, u, u, x, p, on);
  CHECK(filtered < 0.0);
  CHECK(std::abs(filtered) <= std::abs(plain) + 1e-14);
}
