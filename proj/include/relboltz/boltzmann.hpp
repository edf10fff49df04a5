#pragma once

#include "relboltz/collision.hpp"
#include "relboltz/kinetic.hpp"
#include "relboltz/spacetime.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace relboltz {

struct SolveConfig {
  PhaseGrid grid;
  double tol = 1e-10;
  int max_iter = 60;
  // <= 0 selects 0.1 / (C_A max(1, c_K)).
  double max_source_norm = 0.0;
  // <= 0 measures C_A from the kernel.
  double collision_constant = 0.0;
  CollisionOptions collision;
  VlasovOptions vlasov;
  int validation_points = 200;
  std::uint64_t seed = 1;
};

struct SolveDiagnostics {
  int iterations = 0;
  bool converged = false;
  std::vector<double> changes;      // sup-grid change per sweep
  double contraction_ratio = 0.0;   // last change over the one before
  double residual = 0.0;            // sup |u - int (Q[u,u] + f) ds| over validation nodes
  double interpolation_error = 0.0; // same quantity at off-node validation points
  double source_norm = 0.0;
  double max_source_norm = 0.0;
  double collision_constant = 0.0;  // C_A
  double transport_constant = 0.0;  // c_K
  double stability_bound = 0.0;     // c_{A,K}
  double solution_norm = 0.0;
  double stability = 0.0;           // |u| / |f|
};

struct BoltzmannSolution {
  PhaseDensity u;
  SolveDiagnostics diagnostics;
};

// Sup of |f| over its declared bound, or over the grid nodes when none is declared.
double source_norm(const PhaseDensity& f, const PhaseGrid& grid);

// Picard iteration for X u - Q[u,u] = f on the phase grid. Each sweep tabulates
// Q[u_k,u_k] on the grid and integrates it along backward geodesics together with the
// (fixed) transported source.
BoltzmannSolution boltzmann_solve(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& f,
                                  const SolveConfig& cfg);

// Transported collision source of the two first-order solutions: the mixed second
// derivative of the source-to-solution map at 0. Evaluated pointwise by nested quadrature.
PhaseDensity phi_second_direct(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& f,
                               const PhaseDensity& h, const CollisionOptions& copts = {},
                               const VlasovOptions& vopts = {}, std::optional<VlasovOptions> outer = {});

// Same object discretised like boltzmann_solve: first-order solutions and the collision
// source are tabulated on the grid before transport.
PhaseDensity phi_second_direct_grid(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& f,
                                    const PhaseDensity& h, const SolveConfig& cfg);

// Mixed difference (u(eps f + eps h) - u(eps f) - u(eps h) + u(0)) / eps^2 of grid solves.
PhaseDensity phi_second_polarization(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& f,
                                     const PhaseDensity& h, double eps, const SolveConfig& cfg);

// Sup over grid nodes of |a - b|.
double grid_sup_difference(const PhaseDensity& a, const PhaseDensity& b);

}  // namespace relboltz
