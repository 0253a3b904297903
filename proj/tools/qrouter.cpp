// qrouter <experiment> --config <path> [--seed N] [--out <path>]

#include "qrouter/qrouter.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitOther = 1;

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coherent quantum router simulations"};
  app.set_version_flag("--version", std::string(qrouter::kVersion));
  std::string experiment, config_path, out_path;
  std::uint64_t seed = 0;
  app.add_option("experiment", experiment, "Experiment to run")
      ->required()
      ->check(CLI::IsMember(qrouter::experiment_names()));
  app.add_option("--config", config_path, "JSON configuration file")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config)");
  app.add_option("--out", out_path, "Output CSV path; metadata goes next to it as .json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    qrouter::ExperimentConfig cfg = qrouter::load_config(config_path, experiment);
    if (*seed_opt) cfg.seed = seed;
    if (out_path.empty()) out_path = cfg.output.value_or(experiment + ".csv");
    const qrouter::ExperimentResult res = qrouter::run_experiment(cfg);
    qrouter::write_result(res, out_path, utc_timestamp());
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "wrote " << out_path << " (" << res.table.rows().size() << " rows) and "
              << qrouter::sidecar_path(out_path).string() << '\n';
    return kExitOk;
  } catch (const qrouter::ConvergenceError& e) {
    std::cerr << "numerical convergence failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const qrouter::IntegratorError& e) {
    std::cerr << "numerical convergence failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const qrouter::Error& e) {
    // ConfigError, ValidationError, LabelError, ShapeError: all stem from the configuration.
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
}
