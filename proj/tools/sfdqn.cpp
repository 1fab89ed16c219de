// sfdqn: run experiments, list presets, verify run directories.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sfdqn/config.hpp"
#include "sfdqn/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Successor-feature DQN laboratory"};
  app.require_subcommand(1);

  std::string config_path, preset_name, out_dir;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file or a bundled preset");
  run->add_option("config", config_path, "YAML config file");
  run->add_option("--preset", preset_name, "Bundled preset name (see `sfdqn presets`)");
  run->add_option("-o,--out", out_dir, "Output directory (default: config `output`, else runs/<name>)");

  std::string show;
  auto* list = app.add_subcommand("presets", "List bundled presets");
  list->add_option("--show", show, "Print the YAML of one preset");

  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "Re-check invariants on a run directory");
  verify->add_option("dir", verify_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (*list) {
    try {
      if (!show.empty()) {
        std::cout << sfdqn::find_preset(show).yaml;
        return 0;
      }
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
    for (const auto& p : sfdqn::presets()) std::cout << p.name << "\t" << p.description << "\n";
    return 0;
  }

  if (*verify) {
    const auto report = sfdqn::verify_run(verify_dir);
    for (const auto& p : report.passed) std::cout << "ok    " << p << "\n";
    for (const auto& f : report.failed) std::cout << "FAIL  " << f << "\n";
    return report.ok() ? 0 : 1;
  }

  sfdqn::ExperimentConfig cfg;
  try {
    if (config_path.empty() == preset_name.empty()) {
      std::cerr << "error: give either a config file or --preset\n";
      return 2;
    }
    cfg = preset_name.empty() ? sfdqn::load_config(config_path) : sfdqn::preset_config(preset_name);
  } catch (const sfdqn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sfdqn::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (out_dir.empty()) out_dir = cfg.output.empty() ? "runs/" + cfg.name : cfg.output;
  try {
    const auto files = sfdqn::run_experiment(cfg, out_dir);
    std::cout << "wrote " << files.size() << " files to " << out_dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
