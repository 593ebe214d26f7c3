#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cammarl/runner/config.hpp"
#include "cammarl/runner/metrics.hpp"
#include "cammarl/trainer.hpp"

namespace cammarl::runner {

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string error;
};

struct ExperimentResult {
  std::filesystem::path run_dir;
  std::vector<TrainRunArtifacts> runs;  // successful seeds, in config order
  std::vector<SeedFailure> failures;

  bool ok() const noexcept { return failures.empty(); }
};

/// Returns rows for every (seed, agent) series, smoothed per series.
inline std::vector<ReturnRow> return_rows(const std::string& run_id, const TrainRunArtifacts& run,
                                          std::size_t window = 100) {
  std::vector<ReturnRow> rows;
  if (run.returns.empty()) return rows;
  const std::size_t agents = run.returns.front().size();
  std::vector<std::vector<double>> smoothed(agents);
  for (std::size_t a = 0; a < agents; ++a) smoothed[a] = smooth(run.returns_of(a), window);
  for (std::size_t ep = 0; ep < run.returns.size(); ++ep) {
    for (std::size_t a = 0; a < agents; ++a) {
      rows.push_back({run_id, run.seed, ep, a, run.returns[ep][a], smoothed[a][ep]});
    }
  }
  return rows;
}

/// Trains every seed (concurrently when workers > 1) and writes config.json,
/// returns.csv, conformal.csv, trajectories/, checkpoints/ and summary.json
/// under config.output_dir. A failing seed is recorded, not fatal.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  ExperimentResult result;
  result.run_dir = config.output_dir;
  fs::create_directories(config.output_dir);
  {
    std::ofstream out(config.output_dir / "config.json");
    out << to_json(config).dump(2) << '\n';
  }

  const std::size_t n = config.seeds.size();
  std::vector<std::optional<TrainRunArtifacts>> slots(n);
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i] = train(config.for_seed(config.seeds[i]));
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(config.workers, 1), n);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::ofstream returns(config.output_dir / "returns.csv");
  std::ofstream conformal(config.output_dir / "conformal.csv");
  returns << kReturnsHeader << '\n';
  conformal << kConformalHeader << '\n';
  fs::create_directories(config.output_dir / "trajectories");
  nlohmann::json seeds_json = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = config.seeds[i];
    if (!slots[i]) {
      result.failures.push_back({seed, errors[i]});
      seeds_json.push_back({{"seed", seed}, {"status", "failed"}, {"error", errors[i]}});
      continue;
    }
    TrainRunArtifacts& run = *slots[i];
    for (const ReturnRow& row : return_rows(config.run_id, run)) returns << to_csv(row) << '\n';
    for (const ConformalMetrics& m : run.conformal) conformal << to_csv(ConformalRow{config.run_id, seed, m}) << '\n';
    std::ofstream traj(config.output_dir / "trajectories" / ("seed_" + std::to_string(seed) + ".jsonl"));
    env::write_trajectory(traj, run.trajectory);
    seeds_json.push_back({{"seed", seed},
                          {"status", "ok"},
                          {"episodes", run.returns.size()},
                          {"env_steps", run.env_steps},
                          {"updates", run.updates},
                          {"conformal_models", run.conformal_models},
                          {"final_window_return", final_window_mean(run.returns_of(0))}});
    result.runs.push_back(std::move(run));
  }

  nlohmann::json summary{{"schema_version", kConfigSchemaVersion},
                         {"run_id", config.run_id},
                         {"mode", config.mode.name()},
                         {"env", config.env.name},
                         {"episodes", config.episodes},
                         {"seeds", seeds_json},
                         {"failures", result.failures.size()}};
  std::ofstream(config.output_dir / "summary.json") << summary.dump(2) << '\n';
  return result;
}

struct ModeSummary {
  std::string mode;
  std::vector<double> per_seed;  // final-window smoothed mean return, self agent
  double mean = 0.0;
  double std = 0.0;  // sample std across seeds
};

enum class Verdict { holds, tie, violated };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::tie: return "tie";
    case Verdict::violated: return "violated";
  }
  return "?";
}

/// Expected `higher` >= `lower`. Holds when the gap exceeds one pooled std,
/// tie when within it.
struct OrderingCheck {
  std::string higher;
  std::string lower;
  double diff = 0.0;
  double pooled_std = 0.0;
  Verdict verdict = Verdict::tie;
};

struct ComparisonReport {
  std::vector<ModeSummary> ranked;  // best first
  std::vector<OrderingCheck> checks;

  std::string to_text() const {
    std::ostringstream out;
    out << "rank,mode,seeds,final_mean,final_std\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      out << i + 1 << ',' << ranked[i].mode << ',' << ranked[i].per_seed.size() << ','
          << format_double(ranked[i].mean) << ',' << format_double(ranked[i].std) << '\n';
    }
    for (const auto& c : checks) {
      out << c.higher << " >= " << c.lower << ": diff " << format_double(c.diff) << ", pooled std "
          << format_double(c.pooled_std) << " -> " << to_string(c.verdict) << '\n';
    }
    return out.str();
  }
};

inline ModeSummary summarize_mode(std::string mode, std::span<const std::vector<double>> seed_returns,
                                  double fraction = 0.1, std::size_t window = 100) {
  if (seed_returns.empty()) throw std::invalid_argument("summarize_mode: no seeds for " + mode);
  ModeSummary s;
  s.mode = std::move(mode);
  for (const auto& r : seed_returns) s.per_seed.push_back(final_window_mean(r, fraction, window));
  const double n = static_cast<double>(s.per_seed.size());
  s.mean = std::accumulate(s.per_seed.begin(), s.per_seed.end(), 0.0) / n;
  if (s.per_seed.size() > 1) {
    double ss = 0.0;
    for (double v : s.per_seed) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

inline double pooled_std(const ModeSummary& a, const ModeSummary& b) {
  const double na = static_cast<double>(a.per_seed.size());
  const double nb = static_cast<double>(b.per_seed.size());
  if (na + nb <= 2.0) return 0.0;
  return std::sqrt(((na - 1.0) * a.std * a.std + (nb - 1.0) * b.std * b.std) / (na + nb - 2.0));
}

inline OrderingCheck check_ordering(const ModeSummary& higher, const ModeSummary& lower) {
  OrderingCheck c;
  c.higher = higher.mode;
  c.lower = lower.mode;
  c.diff = higher.mean - lower.mean;
  c.pooled_std = pooled_std(higher, lower);
  if (c.diff > c.pooled_std) {
    c.verdict = Verdict::holds;
  } else if (c.diff >= -c.pooled_std) {
    c.verdict = Verdict::tie;
  } else {
    c.verdict = Verdict::violated;
  }
  return c;
}

/// Ranks the modes; checks giam >= cammarl-* >= noam for whichever are present.
inline ComparisonReport compare_summaries(std::vector<ModeSummary> modes) {
  ComparisonReport report;
  std::stable_sort(modes.begin(), modes.end(), [](const ModeSummary& a, const ModeSummary& b) { return a.mean > b.mean; });
  report.ranked = modes;
  auto find = [&](auto pred) -> const ModeSummary* {
    for (const auto& m : report.ranked) {
      if (pred(m.mode)) return &m;
    }
    return nullptr;
  };
  const ModeSummary* giam = find([](const std::string& m) { return m == "giam"; });
  const ModeSummary* noam = find([](const std::string& m) { return m == "noam"; });
  for (const auto& m : report.ranked) {
    if (m.mode.rfind("cammarl", 0) != 0) continue;
    if (giam) report.checks.push_back(check_ordering(*giam, m));
    if (noam) report.checks.push_back(check_ordering(m, *noam));
  }
  if (giam && noam && report.checks.empty()) report.checks.push_back(check_ordering(*giam, *noam));
  return report;
}

/// Reads run directories written by run_experiment and compares them.
inline ComparisonReport compare_modes(const std::vector<std::filesystem::path>& run_dirs) {
  if (run_dirs.empty()) throw std::invalid_argument("compare_modes: no runs");
  std::vector<ModeSummary> modes;
  std::optional<std::string> env_name;
  std::optional<std::size_t> episodes;
  for (const auto& dir : run_dirs) {
    const ExperimentConfig config = load_config(dir / "config.json");
    if (env_name && *env_name != config.env.name) {
      throw std::invalid_argument("compare_modes: runs use different environments (" + *env_name + " vs " +
                                  config.env.name + ")");
    }
    if (episodes && *episodes != config.episodes) {
      throw std::invalid_argument("compare_modes: runs have different episode counts");
    }
    env_name = config.env.name;
    episodes = config.episodes;
    std::ifstream in(dir / "returns.csv");
    if (!in) throw std::invalid_argument("compare_modes: missing " + (dir / "returns.csv").string());
    std::map<std::uint64_t, std::vector<double>> by_seed;
    for (const ReturnRow& row : read_returns_csv(in)) {
      if (row.agent == 0) by_seed[row.seed].push_back(row.ret);
    }
    if (by_seed.empty()) throw std::invalid_argument("compare_modes: no returns in " + dir.string());
    std::vector<std::vector<double>> series;
    for (auto& [_, s] : by_seed) series.push_back(std::move(s));
    modes.push_back(summarize_mode(config.mode.name(), series));
  }
  return compare_summaries(std::move(modes));
}

}  // namespace cammarl::runner
