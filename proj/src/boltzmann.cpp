#include "relboltz/boltzmann.hpp"

#include "relboltz/errors.hpp"
#include "relboltz/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace relboltz {

namespace {

double sup_abs(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s = std::max(s, std::abs(a[k] - b[k]));
  return s;
}

// Transport of a tabulated source: node values of the backward-flow integral.
std::vector<double> transport_tabulated(const MetricSpec& spec, const PhaseGrid& grid, std::vector<double> source,
                                        const VlasovOptions& opts) {
  if (sup_abs(source) == 0.0) return std::vector<double>(grid.size(), 0.0);
  return sample_on_grid(vlasov_solve(spec, grid_cached(grid, std::move(source), false), opts), grid);
}

void check_grid(const PhaseGrid& grid, int n) {
  if (grid.dim() != n) throw DomainError("boltzmann_solve: grid dimension does not match the metric");
  for (int a = 0; a < grid.axes(); ++a)
    if (grid.counts[a] < 2) throw DomainError("boltzmann_solve: grid needs two nodes per axis");
}

}  // namespace

double source_norm(const PhaseDensity& f, const PhaseGrid& grid) {
  if (f.is_zero()) return 0.0;
  if (f.sup_bound()) return *f.sup_bound();
  return sup_abs(sample_on_grid(f, grid));
}

BoltzmannSolution boltzmann_solve(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& f,
                                  const SolveConfig& cfg) {
  const int n = spec.dim();
  const PhaseGrid& grid = cfg.grid;
  check_grid(grid, n);
  if (!(cfg.tol > 0.0)) throw DomainError("boltzmann_solve: tol must be positive");

  SolveDiagnostics diag;
  diag.source_norm = source_norm(f, grid);
  if (f.is_zero() || diag.source_norm == 0.0) {
    diag.iterations = 1;
    diag.converged = true;
    diag.changes.push_back(0.0);
    return {grid_cached(grid, std::vector<double>(grid.size(), 0.0), true), diag};
  }
  if (!std::isfinite(f.support().base[0].lo))
    throw DomainError("boltzmann_solve: source must vanish before a Cauchy slice");

  diag.collision_constant = cfg.collision_constant > 0.0 ? cfg.collision_constant
                                                          : measure_collision_constant(spec, A, cfg.seed);
  diag.transport_constant = transport_constant(spec, f.support().base, f.support().mom, cfg.seed);
  diag.stability_bound = 2.0 * diag.transport_constant;
  diag.max_source_norm = cfg.max_source_norm > 0.0
                             ? cfg.max_source_norm
                             : 0.1 / (std::max(diag.collision_constant, 1e-300) *
                                      std::max(1.0, diag.transport_constant));
  if (diag.source_norm > diag.max_source_norm * (1.0 + 1e-12))
    throw DomainError("boltzmann_solve: source norm exceeds max_source_norm; small data only");

  const std::vector<double> transported_f = sample_on_grid(vlasov_solve(spec, f, cfg.vlasov), grid);
  std::vector<double> u = transported_f;
  int growth = 0;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    PhaseDensity current = grid_cached(grid, u, false);
    std::vector<double> q = sample_on_grid(collision_source(spec, A, current, current, false, cfg.collision), grid);
    std::vector<double> next = transport_tabulated(spec, grid, std::move(q), cfg.vlasov);
    for (std::size_t k = 0; k < next.size(); ++k) next[k] += transported_f[k];
    double change = sup_diff(next, u);
    u = std::move(next);
    diag.iterations = it;
    if (!diag.changes.empty()) {
      diag.contraction_ratio = diag.changes.back() > 0.0 ? change / diag.changes.back() : 0.0;
      growth = change > diag.changes.back() ? growth + 1 : 0;
    }
    diag.changes.push_back(change);
    // Changes at rounding level count as converged.
    if (change < cfg.tol || change <= 64 * std::numeric_limits<double>::epsilon() * sup_abs(u)) {
      diag.converged = true;
      break;
    }
    if (growth >= 3) throw NoContractionError("boltzmann_solve: Picard change grew three times; reduce the source");
  }

  PhaseDensity solution = grid_cached(grid, u, false);
  diag.solution_norm = sup_abs(u);
  diag.stability = diag.solution_norm / diag.source_norm;

  // Residual of the integrated equation with the exact collision integral along the flow.
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < u.size(); ++k)
    if (std::abs(u[k]) > 0.05 * diag.solution_norm) active.push_back(k);
  std::uniform_int_distribution<std::size_t> pick_all(0, grid.size() - 1);
  std::vector<std::size_t> nodes(cfg.validation_points);
  for (int k = 0; k < cfg.validation_points; ++k) {
    bool from_active = !active.empty() && k % 2 == 0;
    nodes[k] = from_active ? active[std::uniform_int_distribution<std::size_t>(0, active.size() - 1)(rng)]
                           : pick_all(rng);
  }
  PhaseDensity transported = vlasov_solve(spec, f, cfg.vlasov);
  auto rhs = [&](const Vec& x, const Vec& p) {
    return transported(x, p) + q_along_flow(spec, A, solution, solution, x, p, cfg.collision);
  };
  std::vector<double> node_res(nodes.size()), off_res(nodes.size());
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  std::vector<PhaseState> off(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    PhaseState st = grid.node(nodes[k]);
    for (int a = 0; a < grid.axes(); ++a) {
      double d = jitter(rng) * grid.spacing(a);
      double& c = a < n ? st.x[a] : st.p[a - n];
      c = std::clamp(c + d, grid.side(a).lo, grid.side(a).hi);
    }
    off[k] = st;
  }
  parallel_for(nodes.size(), [&](std::size_t k) {
    PhaseState st = grid.node(nodes[k]);
    node_res[k] = std::abs(u[nodes[k]] - rhs(st.x, st.p));
    off_res[k] = std::abs(solution(off[k].x, off[k].p) - rhs(off[k].x, off[k].p));
  });
  diag.residual = sup_abs(node_res);
  diag.interpolation_error = sup_abs(off_res);
  return {solution, diag};
}

PhaseDensity phi_second_direct(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& f,
                               const PhaseDensity& h, const CollisionOptions& copts, const VlasovOptions& vopts,
                               std::optional<VlasovOptions> outer) {
  const int n = spec.dim();
  if (f.is_zero() || h.is_zero() || A.is_zero()) return PhaseDensity::zero(n);
  PhaseDensity vf = vlasov_solve(spec, f, vopts);
  PhaseDensity vh = vlasov_solve(spec, h, vopts);
  PhaseDensity source = collision_source(spec, A, vf, vh, true, copts);
  if (source.is_zero()) return PhaseDensity::zero(n);
  return vlasov_solve(spec, source, outer.value_or(vopts));
}

PhaseDensity phi_second_direct_grid(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& f,
                                    const PhaseDensity& h, const SolveConfig& cfg) {
  const PhaseGrid& grid = cfg.grid;
  check_grid(grid, spec.dim());
  std::vector<double> zero(grid.size(), 0.0);
  if (f.is_zero() || h.is_zero() || A.is_zero()) return grid_cached(grid, zero, false);
  PhaseDensity vf = grid_cached(grid, sample_on_grid(vlasov_solve(spec, f, cfg.vlasov), grid), false);
  PhaseDensity vh = grid_cached(grid, sample_on_grid(vlasov_solve(spec, h, cfg.vlasov), grid), false);
  std::vector<double> q = sample_on_grid(collision_source(spec, A, vf, vh, true, cfg.collision), grid);
  return grid_cached(grid, transport_tabulated(spec, grid, std::move(q), cfg.vlasov), false);
}

PhaseDensity phi_second_polarization(const MetricSpec& spec, const CollisionKernel& A, const PhaseDensity& f,
                                     const PhaseDensity& h, double eps, const SolveConfig& cfg) {
  const PhaseGrid& grid = cfg.grid;
  if (!(eps > 0.0)) throw DomainError("phi_second_polarization: eps must be positive");
  if (f.is_zero() || h.is_zero()) return grid_cached(grid, std::vector<double>(grid.size(), 0.0), false);
  auto solve = [&](double a, double b) {
    PhaseDensity src = linear_combination(std::vector<double>{a, b}, std::vector<PhaseDensity>{f, h});
    BoltzmannSolution s = boltzmann_solve(spec, A, src, cfg);
    return grid_values(s.u)->values;
  };
  std::vector<double> both = solve(eps, eps);
  std::vector<double> only_f = solve(eps, 0.0);
  std::vector<double> only_h = solve(0.0, eps);
  std::vector<double> out(grid.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (both[k] - only_f[k] - only_h[k]) / (eps * eps);
  return grid_cached(grid, std::move(out), false);
}

double grid_sup_difference(const PhaseDensity& a, const PhaseDensity& b) {
  const GridValues* ga = grid_values(a);
  const GridValues* gb = grid_values(b);
  if (!ga || !gb || ga->values.size() != gb->values.size())
    throw DomainError("grid_sup_difference: both densities must share a grid");
  return sup_diff(ga->values, gb->values);
}

}  // namespace relboltz
