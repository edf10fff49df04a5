#pragma once

#include "relboltz/kinetic.hpp"
#include "relboltz/numerics.hpp"
#include "relboltz/spacetime.hpp"
#include "relboltz/types.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace relboltz {

// Parameters of the builtin product kernel
//   A(x,p,q,p',q') = amplitude * chi(x) * beta(|p|_e) * g_q(q) * g_p'(p') * g_q'(q').
// chi is 1 on W and vanishes outside W widened by spatial_margin; beta rises from 0 at r0
// to 1 at r1; each g is 1 on its inner box and vanishes outside it widened by momentum_margin.
struct KernelParams {
  Box W;
  double spatial_margin = 0.25;
  double r0 = 0.5;
  double r1 = 1.0;
  Box q_box;
  Box pp_box;
  Box qp_box;
  double momentum_margin = 0.1;
  double amplitude = 1.0;
};

// Admissible collision kernel in product form. Copyable value; the optional spatial
// weight multiplies chi (used to localise a kernel away from selected regions).
class CollisionKernel {
 public:
  CollisionKernel() = default;

  static CollisionKernel builtin(const MetricSpec& spec, const KernelParams& params);
  static CollisionKernel zero(const MetricSpec& spec);

  // Multiplies the spatial factor by w; w must be smooth with values in [0, 1].
  CollisionKernel with_spatial_weight(std::function<double(const Vec&)> w) const;

  int dim() const { return dim_; }
  bool is_zero() const { return params_.amplitude == 0.0; }
  const KernelParams& params() const { return params_; }

  double operator()(const Vec& x, const Vec& p, const Vec& q, const Vec& pp, const Vec& qp) const;

  double spatial(const Vec& x) const;
  double shell(const Vec& p) const;
  double gamma_q(const Vec& q) const { return plateau(q, params_.q_box, params_.momentum_margin); }
  double gamma_pp(const Vec& pp) const { return plateau(pp, params_.pp_box, params_.momentum_margin); }
  double gamma_qp(const Vec& qp) const { return plateau(qp, params_.qp_box, params_.momentum_margin); }

  // Compact set outside which A vanishes in x.
  const Box& spatial_support() const { return spatial_support_; }
  Box q_support() const { return params_.q_box.inflated(params_.momentum_margin); }
  Box pp_support() const { return params_.pp_box.inflated(params_.momentum_margin); }
  Box qp_support() const { return params_.qp_box.inflated(params_.momentum_margin); }

  // Declared bound on the L1 norm of A(x,p,.) over the conservation manifold.
  double l1_bound() const { return l1_bound_; }

 private:
  int dim_ = 0;
  KernelParams params_;
  Box spatial_support_;
  double l1_bound_ = 0.0;
  std::function<double(const Vec&)> weight_;
};

// Tensor Gauss-Legendre rule over the free coordinates (q, p') of the manifold p + q = p' + q'.
struct SigmaQuadRule {
  int nodes_q = 8;
  int nodes_pp = 8;
  int panels = 1;
  Box q_box;
  Box pp_box;
};

// Lebesgue integral over (q, p') in the rule boxes with q' = p + q - p'.
double sigma_quadrature(const SigmaQuadRule& rule, const Vec& p,
                        const std::function<double(const Vec& q, const Vec& pp, const Vec& qp)>& integrand);

// Quadrature settings for the collision operator: `panels` per axis of a lattice on each
// kernel momentum box, `order` Gauss nodes per panel; only panels meeting a density's
// momentum support are used. With causal_filter set, nodes whose momenta are not future
// causal at x are dropped (discontinuous integrand).
struct CollisionOptions {
  int order = 6;
  int panels = 4;
  bool causal_filter = false;
};

// Q_gain[u1,u2](x,p) = -int u1(x,p') u2(x,q') A dV
double q_gain(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& u1, const PhaseDensity& u2,
              const Vec& x, const Vec& p, const CollisionOptions& opts = {});

// Q_loss[u1,u2](x,p) = u1(x,p) int u2(x,q) A dV; exactly 0 when u1(x,p) = 0.
double q_loss(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& u1, const PhaseDensity& u2,
              const Vec& x, const Vec& p, const CollisionOptions& opts = {});

double q_full(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& u1, const PhaseDensity& u2,
              const Vec& x, const Vec& p, const CollisionOptions& opts = {});

// int_{-l}^0 Q[u,v](gamma(s), gamma'(s)) ds along the backward geodesic through (x,p).
double q_along_flow(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& u, const PhaseDensity& v,
                    const Vec& x, const Vec& p, const CollisionOptions& opts = {});

// Density (x,p) -> Q[u,v] (+ Q[v,u] when symmetrised), supported in the kernel's spatial support.
PhaseDensity collision_source(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& u,
                              const PhaseDensity& v, bool symmetrise, const CollisionOptions& opts = {});

// Numerical L1 norm of A(x,p,.) by sigma quadrature over the kernel's momentum supports.
double kernel_l1(const CollisionKernel& A, const Vec& x, const Vec& p, int nodes = 6);

// Sampled admissibility checks: support (cond2), lightlike positivity (cond3), L1 bound (cond4),
// vanishing at small momenta (cond5).
struct AdmissibilityReport {
  bool cond2 = false;             // vanishes outside the spatial support, chi = 1 on W
  int cond3_samples = 0;          // size of the lightlike test set
  double cond3_min_value = 0.0;   // min A over the test set
  double cond4_max_l1 = 0.0;      // max numerical L1 over random (x,p)
  double declared_l1 = 0.0;
  bool cond5_vanishes = false;    // F(lambda) == 0 exactly for lambda |p|_e < r0
  std::vector<std::pair<double, double>> cond5_profile;

  bool cond3() const { return cond3_samples > 0 && cond3_min_value > 0.0; }
  bool cond4() const { return cond4_max_l1 <= declared_l1; }
  bool passed() const { return cond2 && cond3() && cond4() && cond5_vanishes; }
};

AdmissibilityReport check_admissible(const MetricSpec& spec, const CollisionKernel& A, std::uint64_t seed = 1);

// Sampled constant C_A with |int Q[u,v] ds| <= C_A |u|_inf |v|_inf along backward flows.
double measure_collision_constant(const MetricSpec& spec, const CollisionKernel& A, std::uint64_t seed = 2,
                                  int samples = 4000);

}  // namespace relboltz
