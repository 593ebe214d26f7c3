// cammarl_cli: run, compare and validate experiments.
//
//   cammarl_cli run --config cfg.json [--seeds 1,2,3] [--mode m] [--env e] [--out dir]
//   cammarl_cli compare --runs dirA,dirB,...
//   cammarl_cli validate --config cfg.json
//
// Exit status: 0 ok, 1 configuration error, 2 runtime failure.
// CAMMARL_OUTPUT_ROOT, when set, is prepended to relative output dirs.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cammarl/runner/config.hpp"
#include "cammarl/runner/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

namespace fs = std::filesystem;
using cammarl::runner::ConfigError;

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", "parse error in " + path.string() + ": " + e.what());
  }
}

fs::path with_output_root(const fs::path& dir) {
  const char* root = std::getenv("CAMMARL_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0' || dir.is_absolute()) return dir;
  return fs::path(root) / dir;
}

struct RunArgs {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string mode;
  std::string env;
  std::string out;
};

int run(const RunArgs& args) {
  nlohmann::json j = read_json(args.config);
  // Command-line overrides go through the same validation as the file.
  if (j.is_object()) {
    if (!args.seeds.empty()) j["seeds"] = args.seeds;
    if (!args.mode.empty()) j["mode"] = args.mode;
    if (!args.out.empty()) j["output_dir"] = args.out;
    if (!args.env.empty()) {
      if (j.contains("env") && j["env"].is_object()) {
        j["env"]["name"] = args.env;
      } else {
        j["env"] = args.env;
      }
    }
  }
  cammarl::runner::ExperimentConfig config = cammarl::runner::parse_config(j);
  config.output_dir = with_output_root(config.output_dir);

  std::cerr << "run " << config.run_id << ": " << config.mode.name() << " on " << config.env.name << ", "
            << config.seeds.size() << " seed(s), " << config.episodes << " episodes -> " << config.output_dir.string()
            << '\n';
  const auto result = cammarl::runner::run_experiment(config);
  for (const auto& run : result.runs) {
    std::cout << "seed " << run.seed << ": final-window return "
              << cammarl::runner::format_double(cammarl::runner::final_window_mean(run.returns_of(0))) << ", "
              << run.updates << " updates, " << run.conformal_models << " conformal model(s)\n";
  }
  for (const auto& f : result.failures) std::cerr << "seed " << f.seed << " failed: " << f.error << '\n';
  return result.ok() ? kOk : kRuntimeError;
}

int compare(const std::vector<std::string>& runs) {
  std::vector<fs::path> dirs;
  for (const auto& r : runs) dirs.push_back(with_output_root(r));
  std::cout << cammarl::runner::compare_modes(dirs).to_text();
  return kOk;
}

int validate(const std::string& path) {
  const auto config = cammarl::runner::parse_config(read_json(path));
  std::cout << cammarl::runner::to_json(config).dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal action modeling experiments"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "train every seed of a config and write the run directory");
  run_cmd->add_option("--config", run_args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seeds", run_args.seeds, "override the seed list")->delimiter(',');
  run_cmd->add_option("--mode", run_args.mode, "override the modeling mode");
  run_cmd->add_option("--env", run_args.env, "override the environment name");
  run_cmd->add_option("--out", run_args.out, "override the output directory");

  std::vector<std::string> runs;
  auto* compare_cmd = app.add_subcommand("compare", "rank finished runs by final-window return");
  compare_cmd->add_option("--runs", runs, "run directories")->required()->delimiter(',');

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "check a config and print it with defaults filled");
  validate_cmd->add_option("--config", validate_path, "experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) return run(run_args);
    if (*compare_cmd) return compare(runs);
    if (*validate_cmd) return validate(validate_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kConfigError;
}
