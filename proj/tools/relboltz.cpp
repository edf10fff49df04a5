#include "relboltz/errors.hpp"
#include "relboltz/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

int main(int argc, char** argv) {
  using namespace relboltz;
  CLI::App app{"Relativistic Boltzmann forward solver and light-observation probe"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  for (const char* name : {"simulate", "linearize", "probe", "observe", "geodesic", "check-kernel"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "run directory (created if missing)")->required();
    sub->add_option("--seed", seed, "overrides the seed in the configuration");
  }
  CLI11_PARSE(app, argc, argv);

  const Command command = *parse_command(app.get_subcommands().front()->get_name());
  try {
    ScenarioConfig config = load_config(config_path);
    if (seed) {
      config.seed = *seed;
      config.solver.seed = *seed;
      config.raw["seed"] = *seed;
    }
    RunResult result = run_scenario(config, command, out_dir);
    std::cout << result.summary.dump(2) << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
