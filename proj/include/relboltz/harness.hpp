#pragma once

#include "relboltz/boltzmann.hpp"
#include "relboltz/causal.hpp"
#include "relboltz/collision.hpp"
#include "relboltz/kinetic.hpp"
#include "relboltz/probe.hpp"
#include "relboltz/spacetime.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace relboltz {

inline constexpr const char* kVersion = "0.1.0";

// Smooth bump density amplitude * B(|x - xc| / radius) * B(|p - pc| / radius).
struct BumpSource {
  Vec x;
  Vec p;
  double radius = 0.3;
  double amplitude = 1.0;
};

PhaseDensity bump_density(int n, const std::vector<BumpSource>& bumps);

struct BeamConfig {
  double epsilon = 0.01;
  double extent = 0.1;
  bool kernel_from_beams = false;  // pp_box / qp_box centred on the beam momenta
  double beam_box_half_width = 0.03;
  bool refine = false;             // repeat the measurement at epsilon / 2
  bool recover = true;
};

struct LinearizeConfig {
  std::vector<double> eps{1e-2, 5e-3, 2.5e-3};
  bool polarization = false;
};

struct GeodesicConfig {
  Vec x;
  Vec p;
  double duration = 1.0;
  double step = 1e-2;
};

// Parsed scenario. `raw` keeps the input document for hashing and the manifest.
struct ScenarioConfig {
  nlohmann::json raw;
  MetricSpec metric;
  std::optional<KernelParams> kernel;
  ProbeScenario probe;  // observer family, diamond and beam geometry
  std::vector<Vec> targets;
  BeamConfig beams;
  std::vector<BumpSource> source;
  std::vector<BumpSource> second_source;
  std::optional<double> norm_fraction;  // rescale the source to this fraction of max_source_norm
  SolveConfig solver;
  int collision_samples = 2000;
  LinearizeConfig linearize;
  MeasureOptions measure;
  RecoveryOptions recovery;
  std::optional<GeodesicConfig> geodesic;
  std::uint64_t seed = 1;
};

// ConfigError carries the JSON pointer of the offending value.
ScenarioConfig parse_config(const nlohmann::json& doc);
ScenarioConfig load_config(const std::filesystem::path& path);

// {"kind", "n", "params", "chart_box"}; ConfigError for custom metrics.
nlohmann::json metric_to_json(const MetricSpec& spec);
MetricSpec metric_from_json(const nlohmann::json& j, const std::string& pointer = "/metric");

enum class Command { Simulate, Linearize, Probe, Observe, Geodesic, CheckKernel };

std::optional<Command> parse_command(const std::string& name);
std::string to_string(Command c);

struct RunResult {
  nlohmann::json summary;
  std::vector<std::string> files;  // relative to the run directory, manifest excluded
};

// Runs one command and writes its CSV/JSON artifacts, summary.json and manifest.json.
RunResult run_scenario(const ScenarioConfig& config, Command command, const std::filesystem::path& out_dir);

// ---- persistence ----

// 17 significant digits in scientific notation; round-trips every double.
std::string format_value(double v);

// "x0,...,x{n-1},p0,...,p{n-1},value"
std::string phase_grid_header(int n);
// "x0,...,x{n-1},S_value"
std::string measurement_header(int n);

void export_grid(const PhaseDensity& f, const PhaseGrid& grid, const std::filesystem::path& path);
void export_grid_values(const GridValues& g, const std::filesystem::path& path);
void export_measurement(const Measurement& m, const std::filesystem::path& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable import_csv(const std::filesystem::path& path);

// Writes text; failures throw std::system_error with the OS message.
void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);

}  // namespace relboltz
