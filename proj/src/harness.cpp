#include "relboltz/errors.hpp"
#include "relboltz/harness.hpp"
#include "relboltz/numerics.hpp"
#include "relboltz/parallel.hpp"

#include <Eigen/Core>
#include <openssl/opensslv.h>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace relboltz {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

json to_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const Box& b) {
  json a = json::array();
  for (int i = 0; i < b.dim(); ++i) a.push_back({b[i].lo, b[i].hi});
  return a;
}

std::string indexed(const std::string& stem, std::size_t k, const char* ext) {
  return stem + "_" + std::to_string(k) + ext;
}

// Output directory with serialized writes and a record of every file.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw std::system_error(ec, "cannot create " + root_.string());
  }

  std::filesystem::path path(const std::string& name) {
    files_.push_back(name);
    return root_ / name;
  }

  void write(const std::string& name, const std::string& content) { write_file(path(name), content); }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + '\n'); }

  const std::filesystem::path& root() const { return root_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path root_;
  std::vector<std::string> files_;
};

const KernelParams& require_kernel(const ScenarioConfig& cfg) {
  if (!cfg.kernel) throw ConfigError("/kernel", "this command needs a collision kernel");
  return *cfg.kernel;
}

// Kernels with "beams" momentum boxes are only defined relative to a probe plan.
CollisionKernel fixed_kernel(const ScenarioConfig& cfg) {
  const KernelParams& kp = require_kernel(cfg);
  if (cfg.beams.kernel_from_beams) throw ConfigError("/kernel/pp_box", "\"beams\" boxes need a probe target");
  return CollisionKernel::builtin(cfg.metric, kp);
}

CollisionKernel beam_kernel(const ScenarioConfig& cfg, const ProbePlan& plan) {
  KernelParams kp = require_kernel(cfg);
  if (cfg.beams.kernel_from_beams) {
    kp.pp_box = Box::cube(plan.beam_patch.p, cfg.beams.beam_box_half_width);
    kp.qp_box = Box::cube(plan.beam_point.p, cfg.beams.beam_box_half_width);
  }
  return CollisionKernel::builtin(cfg.metric, kp);
}

Box kernel_support(const ScenarioConfig& cfg) {
  const KernelParams& kp = require_kernel(cfg);
  return kp.W.inflated(kp.spatial_margin);
}

const SolveConfig& require_solver(const ScenarioConfig& cfg) {
  if (cfg.solver.grid.dim() == 0) throw ConfigError("/solver", "this command needs a solver grid");
  return cfg.solver;
}

PhaseDensity require_source(const ScenarioConfig& cfg) {
  if (cfg.source.empty()) throw ConfigError("/source/bumps", "this command needs a source");
  return bump_density(cfg.metric.dim(), cfg.source);
}

// Solver settings with C_A measured once and the default source-norm cap resolved.
struct PreparedSolve {
  SolveConfig config;
  double max_norm = 0.0;
  double transport = 0.0;
};

PreparedSolve prepare_solve(const ScenarioConfig& cfg, const CollisionKernel& A, const PhaseDensity& f) {
  PreparedSolve out{require_solver(cfg)};
  SolveConfig& sc = out.config;
  if (sc.collision_constant <= 0.0)
    sc.collision_constant = measure_collision_constant(cfg.metric, A, cfg.seed, cfg.collision_samples);
  out.transport = f.is_zero() ? 0.0 : transport_constant(cfg.metric, f.support().base, f.support().mom, cfg.seed);
  out.max_norm = sc.max_source_norm > 0.0 ? sc.max_source_norm
                                          : 0.1 / (sc.collision_constant * std::max(1.0, out.transport));
  return out;
}

PhaseDensity normalised_source(const ScenarioConfig& cfg, const PhaseDensity& f, const PreparedSolve& ps) {
  if (!cfg.norm_fraction || f.is_zero()) return f;
  double norm = source_norm(f, ps.config.grid);
  if (norm == 0.0) return f;
  return scaled(f, *cfg.norm_fraction * ps.max_norm / norm);
}

json diagnostics_json(const SolveDiagnostics& d) {
  return {{"iterations", d.iterations},
          {"converged", d.converged},
          {"changes", d.changes},
          {"contraction_ratio", d.contraction_ratio},
          {"residual", d.residual},
          {"interpolation_error", d.interpolation_error},
          {"source_norm", d.source_norm},
          {"max_source_norm", d.max_source_norm},
          {"collision_constant", d.collision_constant},
          {"transport_constant", d.transport_constant},
          {"stability_bound", d.stability_bound},
          {"solution_norm", d.solution_norm},
          {"stability", d.stability}};
}

void export_density(const PhaseDensity& u, const PhaseGrid& grid, const std::filesystem::path& path) {
  if (const GridValues* g = grid_values(u); g && g->grid.size() == grid.size())
    export_grid_values(*g, path);
  else
    export_grid(u, grid, path);
}

json run_simulate(const ScenarioConfig& cfg, RunDirectory& dir) {
  CollisionKernel A = fixed_kernel(cfg);
  PhaseDensity f = require_source(cfg);
  PreparedSolve ps = prepare_solve(cfg, A, f);
  f = normalised_source(cfg, f, ps);
  BoltzmannSolution sol = boltzmann_solve(cfg.metric, A, f, ps.config);
  export_density(sol.u, ps.config.grid, dir.path("solution.csv"));
  return {{"diagnostics", diagnostics_json(sol.diagnostics)}};
}

// sup_k |a_k - scale * b_k|
double scaled_sup_difference(const std::vector<double>& a, const std::vector<double>& b, double scale) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - scale * b[k]));
  return worst;
}

json run_linearize(const ScenarioConfig& cfg, RunDirectory& dir) {
  CollisionKernel A = fixed_kernel(cfg);
  PhaseDensity f = require_source(cfg);
  PhaseDensity h = cfg.second_source.empty() ? f : bump_density(cfg.metric.dim(), cfg.second_source);
  PreparedSolve ps = prepare_solve(cfg, A, f);
  const SolveConfig& sc = ps.config;
  const auto& eps = cfg.linearize.eps;

  // Every scale used below must stay inside the admissible source ball.
  double reach = *std::max_element(eps.begin(), eps.end()) *
                 (source_norm(f, sc.grid) + (cfg.linearize.polarization ? source_norm(h, sc.grid) : 0.0));
  if (reach > ps.max_norm)
    throw ConfigError("/solver/eps", "largest eps times the source norm exceeds the admissible norm " +
                                         format_value(ps.max_norm));

  PhaseDensity v0 = vlasov_solve(cfg.metric, f, sc.vlasov);
  std::vector<double> v0_nodes = sample_on_grid(v0, sc.grid);
  export_grid_values({sc.grid, v0_nodes}, dir.path("first_order.csv"));

  std::vector<double> remainder;
  for (double e : eps) {
    BoltzmannSolution sol = boltzmann_solve(cfg.metric, A, scaled(f, e), sc);
    remainder.push_back(scaled_sup_difference(grid_values(sol.u)->values, v0_nodes, e));
  }

  PhaseDensity direct = phi_second_direct_grid(cfg.metric, A, f, h, sc);
  export_density(direct, sc.grid, dir.path("second_order.csv"));

  json out{{"eps", eps},
           {"first_order_remainder", remainder},
           {"first_order_slope", loglog_slope(eps, remainder)},
           {"max_source_norm", ps.max_norm},
           {"collision_constant", sc.collision_constant}};

  if (cfg.linearize.polarization) {
    std::vector<double> diff;
    for (double e : eps) diff.push_back(grid_sup_difference(phi_second_polarization(cfg.metric, A, f, h, e, sc), direct));
    out["polarization_difference"] = diff;
    out["polarization_slope"] = loglog_slope(eps, diff);
    out["second_order_sign"] = "+";
  }

  std::string table = "eps,first_order_remainder" + std::string(cfg.linearize.polarization ? ",polarization_difference" : "") + '\n';
  for (std::size_t k = 0; k < eps.size(); ++k) {
    table += format_value(eps[k]) + ',' + format_value(remainder[k]);
    if (cfg.linearize.polarization) table += ',' + format_value(out["polarization_difference"][k].get<double>());
    table += '\n';
  }
  dir.write("rates.csv", table);
  return out;
}

// Symmetric Hausdorff distance in grid cells between two detected cell sets.
double cell_hausdorff(const DetectorGrid& grid, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.empty() || b.empty()) return a.empty() && b.empty() ? 0.0 : INFINITY;
  auto one_way = [&](const std::vector<std::size_t>& from, const std::vector<std::size_t>& to) {
    double worst = 0.0;
    for (std::size_t i : from) {
      auto u = grid.unflatten(i);
      double best = INFINITY;
      for (std::size_t j : to) {
        auto v = grid.unflatten(j);
        double d2 = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) d2 += double(u[k] - v[k]) * double(u[k] - v[k]);
        best = std::min(best, std::sqrt(d2));
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(one_way(a, b), one_way(b, a));
}

Detection detect_or_empty(const Measurement& m, double kappa) {
  try {
    return detect_singular_support(m, kappa);
  } catch (const EmptyDetection&) {
    return {};
  }
}

json cells_json(const DetectorGrid& grid, const std::vector<std::size_t>& cells,
                const std::vector<std::vector<double>>& ridge) {
  json out = json::array();
  for (std::size_t k : cells) {
    auto idx = grid.unflatten(k);
    std::vector<double> c(idx.begin(), idx.end());
    out.push_back({{"index", idx}, {"x", to_json(grid.node(k))}, {"ridge_distance", ridge_distance(ridge, c)}});
  }
  return out;
}

json run_probe(const ScenarioConfig& cfg, RunDirectory& dir) {
  if (cfg.targets.empty()) throw ConfigError("/targets", "probe needs at least one target");
  const MetricSpec& spec = cfg.metric;
  json targets = json::array();
  for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
    const Vec& w = cfg.targets[t];
    auto t0 = Clock::now();
    ProbePlan plan = build_probe_plan(spec, cfg.probe, w, cfg.beams.epsilon, cfg.beams.extent, kernel_support(cfg));
    CollisionKernel A = beam_kernel(cfg, plan);
    Measurement m = measure(spec, A, plan, cfg.measure);
    export_measurement(m, dir.path(indexed("measurement", t, ".csv")));

    Detection det = detect_or_empty(m, cfg.recovery.kappa);
    auto ridge = predicted_ridge(spec, plan);
    double worst_ridge = 0.0;
    for (std::size_t k : det.cells) {
      auto idx = m.grid.unflatten(k);
      worst_ridge = std::max(worst_ridge, ridge_distance(ridge, std::vector<double>(idx.begin(), idx.end())));
    }

    // Causal support: deficit of every nonzero sample against the interaction radius.
    double radius = interaction_radius(spec, plan, cfg.measure);
    double worst_deficit = 0.0;
    std::size_t nonzero = 0;
    for (std::size_t k = 0; k < m.values.size(); ++k)
      if (m.values[k] != 0.0) {
        ++nonzero;
        worst_deficit = std::max(worst_deficit, causal_deficit(spec, plan.z1, m.grid.node(k), cfg.probe.causal));
      }

    json ridge_json = json::array();
    for (const auto& c : ridge) ridge_json.push_back(c);
    json report{{"w", to_json(w)},
                {"z1", to_json(plan.z1)},
                {"e", to_json(plan.gamma.e)},
                {"aim_residual", plan.aim_residual},
                {"transversality", plan.transversality},
                {"intersection_residual", plan.intersection_residual},
                {"epsilon", m.epsilon},
                {"loss_sup", m.loss_sup},
                {"nonzero_samples", nonzero},
                {"interaction_radius", radius},
                {"max_causal_deficit", worst_deficit},
                {"causal_bound", std::sqrt(2.0) * radius},
                {"max_laplacian", det.max_laplacian},
                {"cells", cells_json(m.grid, det.cells, ridge)},
                {"max_ridge_distance", worst_ridge},
                {"predicted_ridge", ridge_json}};

    if (cfg.beams.refine) {
      MeasureOptions fine = cfg.measure;
      fine.collision.panels *= 2;
      fine.outer.min_panels *= 2;
      ProbePlan half =
          build_probe_plan(spec, cfg.probe, w, 0.5 * cfg.beams.epsilon, cfg.beams.extent, kernel_support(cfg));
      Measurement mh = measure(spec, beam_kernel(cfg, half), half, fine);
      export_measurement(mh, dir.path(indexed("measurement_half", t, ".csv")));
      Detection dh = detect_or_empty(mh, cfg.recovery.kappa);
      report["refined"] = {{"epsilon", mh.epsilon},
                           {"loss_sup", mh.loss_sup},
                           {"cells", cells_json(mh.grid, dh.cells, ridge)},
                           {"cell_shift", cell_hausdorff(m.grid, det.cells, dh.cells)}};
    }

    if (cfg.beams.recover) {
      auto lines = measure_observers(spec, A, plan, cfg.probe, cfg.recovery);
      auto rec = recover_observation_times(spec, cfg.probe, w, lines, cfg.recovery);
      json obs = json::array();
      std::size_t within = 0;
      for (const RecoveredObservation& r : rec) {
        within += r.delta_steps() <= 2.0;
        obs.push_back({{"a", to_json(r.a)},
                       {"recovered", r.recovered},
                       {"truth", r.truth},
                       {"detected", r.detected},
                       {"delta_steps", r.delta_steps()}});
      }
      report["recovery"] = {{"step", cfg.recovery.spacing},
                            {"observers", obs},
                            {"within_two_steps", within},
                            {"fraction_within_two_steps", rec.empty() ? 0.0 : double(within) / rec.size()}};
    }
    dir.write_json(indexed("detection", t, ".json"), report);
    targets.push_back({{"w", to_json(w)},
                       {"cells", det.cells.size()},
                       {"max_ridge_distance", worst_ridge},
                       {"loss_sup", m.loss_sup},
                       {"seconds", seconds_since(t0)}});
  }
  return {{"targets", targets}};
}

json run_observe(const ScenarioConfig& cfg, RunDirectory& dir) {
  const int n = cfg.metric.dim();
  const ObserverFamily& fam = cfg.probe.family;
  std::string params;
  for (int i = 1; i < n; ++i) params += ",a" + std::to_string(i);
  std::string table = "index" + params + ",hat\n";
  for (std::size_t k = 0; k < fam.size(); ++k) {
    table += std::to_string(k);
    for (int i = 0; i < n - 1; ++i) table += ',' + format_value(fam.param(k)[i]);
    table += k == fam.hat() ? ",1\n" : ",0\n";
  }
  dir.write("observers.csv", table);

  json targets = json::array();
  for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
    auto events = earliest_obs_set(cfg.metric, fam, cfg.targets[t], cfg.probe.causal);
    std::string csv = "index" + params + ",f_plus";
    for (int i = 0; i < n; ++i) csv += ",x" + std::to_string(i);
    csv += '\n';
    std::size_t seen = 0;
    for (std::size_t k = 0; k < events.size(); ++k) {
      const ObservationEvent& ev = events[k];
      seen += ev.f_plus < 1.0;
      csv += std::to_string(k);
      for (int i = 0; i < n - 1; ++i) csv += ',' + format_value(ev.a[i]);
      csv += ',' + format_value(ev.f_plus);
      for (int i = 0; i < n; ++i) csv += ',' + format_value(ev.event[i]);
      csv += '\n';
    }
    dir.write(indexed("earliest", t, ".csv"), csv);
    targets.push_back({{"w", to_json(cfg.targets[t])}, {"observers_reached", seen}});
  }
  return {{"observers", fam.size()},
          {"diamond", {{"s_minus", cfg.probe.diamond.s_minus}, {"s_plus", cfg.probe.diamond.s_plus}}},
          {"targets", targets}};
}

json run_geodesic(const ScenarioConfig& cfg, RunDirectory& dir) {
  if (!cfg.geodesic) throw ConfigError("/geodesic", "geodesic command needs a start state");
  const GeodesicConfig& g = *cfg.geodesic;
  const int n = cfg.metric.dim();
  GeodesicPath path = geodesic_flow(cfg.metric, g.x, g.p, g.duration, g.step);
  std::string csv = "s";
  for (int i = 0; i < n; ++i) csv += ",x" + std::to_string(i);
  for (int i = 0; i < n; ++i) csv += ",p" + std::to_string(i);
  csv += ",g_pp\n";
  for (const GeodesicSample& s : path.samples) {
    csv += format_value(s.s);
    for (int i = 0; i < n; ++i) csv += ',' + format_value(s.x[i]);
    for (int i = 0; i < n; ++i) csv += ',' + format_value(s.p[i]);
    csv += ',' + format_value(inner(cfg.metric, s.x, s.p, s.p)) + '\n';
  }
  dir.write("geodesic.csv", csv);
  return {{"samples", path.samples.size()}, {"mass_shell_drift", path.mass_shell_drift}, {"left_chart", path.left_chart}};
}

json run_check_kernel(const ScenarioConfig& cfg, RunDirectory& dir) {
  CollisionKernel A;
  if (cfg.beams.kernel_from_beams) {
    if (cfg.targets.empty()) throw ConfigError("/targets", "\"beams\" kernel boxes need a probe target");
    A = beam_kernel(cfg, build_probe_plan(cfg.metric, cfg.probe, cfg.targets.front(), cfg.beams.epsilon,
                                          cfg.beams.extent, kernel_support(cfg)));
  } else {
    A = fixed_kernel(cfg);
  }
  AdmissibilityReport r = check_admissible(cfg.metric, A, cfg.seed);
  double c_a = measure_collision_constant(cfg.metric, A, cfg.seed, cfg.collision_samples);
  json profile = json::array();
  for (auto [lambda, value] : r.cond5_profile) profile.push_back({lambda, value});
  const KernelParams& kp = A.params();
  json report{{"passed", r.passed()},
              {"cond2", r.cond2},
              {"cond3", {{"passed", r.cond3()}, {"samples", r.cond3_samples}, {"min_value", r.cond3_min_value}}},
              {"cond4", {{"passed", r.cond4()}, {"max_l1", r.cond4_max_l1}, {"declared_l1", r.declared_l1}}},
              {"cond5", {{"passed", r.cond5_vanishes}, {"profile", profile}}},
              {"collision_constant", c_a},
              {"kernel",
               {{"W", to_json(kp.W)},
                {"spatial_margin", kp.spatial_margin},
                {"r0", kp.r0},
                {"r1", kp.r1},
                {"q_box", to_json(kp.q_box)},
                {"pp_box", to_json(kp.pp_box)},
                {"qp_box", to_json(kp.qp_box)},
                {"momentum_margin", kp.momentum_margin},
                {"amplitude", kp.amplitude}}}};
  dir.write_json("kernel.json", report);
  return {{"passed", r.passed()}, {"collision_constant", c_a}};
}

std::string compiler_version() {
#if defined(__clang__)
  return "clang " __clang_version__;
#elif defined(__GNUC__)
  return "gcc " __VERSION__;
#else
  return "unknown";
#endif
}

}  // namespace

std::optional<Command> parse_command(const std::string& name) {
  for (Command c : {Command::Simulate, Command::Linearize, Command::Probe, Command::Observe, Command::Geodesic,
                    Command::CheckKernel})
    if (to_string(c) == name) return c;
  return std::nullopt;
}

std::string to_string(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Linearize: return "linearize";
    case Command::Probe: return "probe";
    case Command::Observe: return "observe";
    case Command::Geodesic: return "geodesic";
    case Command::CheckKernel: return "check-kernel";
  }
  return "unknown";
}

RunResult run_scenario(const ScenarioConfig& config, Command command, const std::filesystem::path& out_dir) {
  RunDirectory dir(out_dir);
  auto t0 = Clock::now();
  json body;
  switch (command) {
    case Command::Simulate: body = run_simulate(config, dir); break;
    case Command::Linearize: body = run_linearize(config, dir); break;
    case Command::Probe: body = run_probe(config, dir); break;
    case Command::Observe: body = run_observe(config, dir); break;
    case Command::Geodesic: body = run_geodesic(config, dir); break;
    case Command::CheckKernel: body = run_check_kernel(config, dir); break;
  }
  double compute_seconds = seconds_since(t0);

  // Wall times stay out of summary.json so that it is reproducible like the CSVs.
  json summary{{"command", to_string(command)}, {"seed", config.seed}, {"metric", metric_to_json(config.metric)}};
  summary.update(body);
  dir.write_json("summary.json", summary);

  const std::string config_text = config.raw.dump();
  json files = json::array();
  for (const std::string& name : dir.files()) {
    std::string bytes = read_file(dir.root() / name);
    files.push_back({{"path", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  json manifest{{"command", to_string(command)},
                {"config_sha256", sha256_hex(config_text)},
                {"config", config.raw},
                {"seed", config.seed},
                {"threads", worker_count()},
                {"versions",
                 {{"relboltz", kVersion},
                  {"compiler", compiler_version()},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"openssl", OPENSSL_VERSION_TEXT},
                  {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                {"wall_seconds", {{"compute", compute_seconds}, {"total", seconds_since(t0)}}},
                {"files", files}};
  write_file(out_dir / "manifest.json", manifest.dump(2) + '\n');
  return {summary, dir.files()};
}

}  // namespace relboltz
