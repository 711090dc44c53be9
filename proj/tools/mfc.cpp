// mfc: run the experiment recipes from a flat key = value configuration.
//
//   mfc run --experiment <name> [--config <path>] [--out <dir>] [--seed <u64>] [--set key=value]...
//   mfc list [--csv]

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mfc/config.hpp"
#include "mfc/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Config-driven experiment runner for mean field control value functions", "mfc"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "execute one experiment recipe");
  std::string experiment;
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  run->add_option("--experiment,-e", experiment, "recipe name (see 'mfc list')")->required();
  run->add_option("--config,-c", config_path, "configuration file; defaults apply to missing keys")
      ->check(CLI::ExistingFile);
  run->add_option("--out,-o", out_dir, "output directory (default: runs/<experiment>)");
  run->add_option("--seed", seed, "seed for every random stream, overrides the 'seed' key");
  run->add_option("--set", overrides, "extra 'key=value' assignment applied after the file");

  auto* list = app.add_subcommand("list", "print the available recipes");
  bool csv = false;
  list->add_flag("--csv", csv, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return mfc::exit_config;
  }

  if (*list) {
    mfc::list_experiments(std::cout, csv);
    return mfc::exit_ok;
  }

  mfc::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = mfc::RunConfig::load(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw mfc::ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(mfc::detail::trim(kv.substr(0, eq)), mfc::detail::trim(kv.substr(eq + 1)), "--set");
    }
    if (seed) cfg.set("seed", std::to_string(*seed), "--seed");
  } catch (const mfc::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mfc::exit_config;
  }
  cfg.experiment = experiment;
  cfg.out = out_dir.empty() ? std::filesystem::path("runs") / experiment : std::filesystem::path(out_dir);

  try {
    const auto result = mfc::run_experiment(cfg, std::cout);
    if (result.exit_code == mfc::exit_config) {
      std::cerr << "error: " << result.message << '\n';
      return result.exit_code;
    }
    std::cout << "exit " << result.exit_code << ", " << result.files.size() << " files in " << cfg.out.string()
              << '\n';
    return result.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mfc::exit_solver;
  }
}
