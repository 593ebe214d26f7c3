#pragma once

#include <algorithm>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <vector>

#include "cammarl/env/environment.hpp"
#include "cammarl/rng.hpp"

namespace cammarl::env {

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

inline int manhattan(Cell a, Cell b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }
inline bool adjacent4(Cell a, Cell b) { return manhattan(a, b) == 1; }

enum LbfAction : int {
  kLbfNone = 0,
  kLbfUp = 1,
  kLbfDown = 2,
  kLbfLeft = 3,
  kLbfRight = 4,
  kLbfLoad = 5,
};
inline constexpr std::size_t kLbfActionCount = 6;

struct LbfFood {
  Cell cell;
  int level = 1;
  bool alive = true;
};

struct LbfWorld {
  int grid = 12;
  std::vector<Cell> agents;
  std::vector<int> agent_levels;
  std::vector<LbfFood> foods;
  bool cooperative = true;
  // Sum of all food levels at reset; rewards are divided by it so that the
  // whole episode is worth at most 1.
  double normalizer = 1.0;
};

struct LoadOutcome {
  bool success = false;
  std::vector<double> rewards;  // aligned with the loaders argument
};

/// Share of a collected food for each loader: food_level * level_i / sum(levels),
/// divided by `normalizer`.
inline std::vector<double> lbf_reward(int food_level, std::span<const int> loader_levels,
                                      double normalizer = 1.0) {
  if (loader_levels.empty()) throw std::invalid_argument("lbf_reward: no loaders");
  if (!(normalizer > 0.0)) throw std::invalid_argument("lbf_reward: normalizer must be positive");
  double sum = 0.0;
  for (int l : loader_levels) {
    if (l < 1) throw std::invalid_argument("lbf_reward: levels must be >= 1");
    sum += l;
  }
  std::vector<double> shares;
  shares.reserve(loader_levels.size());
  for (int l : loader_levels) shares.push_back(food_level * (l / sum) / normalizer);
  return shares;
}

/// Loaders must all be 4-adjacent to the food. Succeeds iff their pooled
/// levels reach the food level; the food is then consumed.
inline LoadOutcome lbf_attempt_load(LbfWorld& world, std::span<const AgentId> loaders,
                                    std::size_t food) {
  if (food >= world.foods.size()) throw std::out_of_range("lbf_attempt_load: food index");
  LbfFood& f = world.foods[food];
  if (!f.alive) throw std::invalid_argument("lbf_attempt_load: food already collected");
  if (loaders.empty()) throw std::invalid_argument("lbf_attempt_load: no loaders");
  std::vector<int> levels;
  int pooled = 0;
  for (AgentId a : loaders) {
    if (a.index >= world.agents.size()) throw std::out_of_range("lbf_attempt_load: agent index");
    if (!adjacent4(world.agents[a.index], f.cell)) {
      throw std::invalid_argument("lbf_attempt_load: loader not adjacent to food");
    }
    levels.push_back(world.agent_levels[a.index]);
    pooled += world.agent_levels[a.index];
  }
  LoadOutcome out;
  if (pooled < f.level) {
    out.rewards.assign(loaders.size(), 0.0);
    return out;
  }
  out.success = true;
  out.rewards = lbf_reward(f.level, levels, world.normalizer);
  f.alive = false;
  return out;
}

inline constexpr std::string_view kLbfLayout = "lbf/v1";

class LevelBasedForaging final : public Environment {
 public:
  LevelBasedForaging(std::size_t agents, int horizon, LbfParams params)
      : Environment(agents, horizon), params_(params) {
    if (params.grid < 3) throw std::invalid_argument("lbf: grid must be >= 3");
    if (params.foods == 0) throw std::invalid_argument("lbf: foods must be >= 1");
    if (params.max_agent_level < 1) throw std::invalid_argument("lbf: max_agent_level must be >= 1");
    if (params.max_food_level < 0) throw std::invalid_argument("lbf: max_food_level must be >= 0");
    // Foods sit off the border with a free 8-neighbourhood: at most one per
    // 2x2 block of the interior.
    const std::size_t per_axis = (params.grid - 1) / 2;
    if (params.foods > per_axis * per_axis || params.foods + agents > params.grid * params.grid) {
      throw std::invalid_argument("lbf: grid too small for the requested entities");
    }
  }

  std::string_view name() const override { return "lbf"; }
  std::size_t observation_dim(AgentId) const override {
    return 3 * (params_.foods + agent_count());
  }
  std::size_t action_count(AgentId) const override { return kLbfActionCount; }

  /// [(row, col, level) per food; consumed foods (-1, -1, 0)], then self, then
  /// the other agents in ascending id. Coordinates divided by grid-1, levels
  /// by their maxima.
  Observation observe(AgentId agent) const override {
    if (agent.index >= agent_count()) throw std::out_of_range("lbf: agent out of range");
    const double span = static_cast<double>(world_.grid - 1);
    Observation obs;
    obs.layout = kLbfLayout;
    obs.values.reserve(observation_dim(agent));
    for (const LbfFood& f : world_.foods) {
      if (f.alive) {
        obs.values.insert(obs.values.end(),
                          {f.cell.row / span, f.cell.col / span, f.level / max_food_level()});
      } else {
        obs.values.insert(obs.values.end(), {-1.0, -1.0, 0.0});
      }
    }
    auto push_agent = [&](std::size_t i) {
      obs.values.insert(obs.values.end(),
                        {world_.agents[i].row / span, world_.agents[i].col / span,
                         world_.agent_levels[i] / static_cast<double>(params_.max_agent_level)});
    };
    push_agent(agent.index);
    for (std::size_t j = 0; j < agent_count(); ++j) {
      if (j != agent.index) push_agent(j);
    }
    return obs;
  }

  const LbfWorld& world() const noexcept { return world_; }
  void set_world(LbfWorld world) {
    if (world.agents.size() != agent_count() || world.agent_levels.size() != agent_count() ||
        world.foods.size() != params_.foods) {
      throw std::invalid_argument("lbf: world shape mismatch");
    }
    world_ = std::move(world);
  }
  std::size_t foods_alive() const {
    return static_cast<std::size_t>(std::count_if(world_.foods.begin(), world_.foods.end(),
                                                  [](const LbfFood& f) { return f.alive; }));
  }

 protected:
  void on_reset(std::uint64_t seed) override {
    Rng rng(seed);
    const int g = static_cast<int>(params_.grid);
    world_ = LbfWorld{};
    world_.grid = g;
    world_.cooperative = params_.cooperative;
    world_.agent_levels.resize(agent_count());
    int level_sum = 0;
    for (int& l : world_.agent_levels) {
      l = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(params_.max_agent_level)));
      level_sum += l;
    }
    const int food_cap = params_.max_food_level > 0 ? params_.max_food_level : level_sum;
    food_level_cap_ = food_cap;

    // Foods off the border and never 8-adjacent to each other, so every food
    // keeps four loading cells.
    double total = 0.0;
    for (std::size_t f = 0; f < params_.foods; ++f) {
      for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) throw EnvError("lbf: could not place food");
        const Cell c{1 + static_cast<int>(rng.below(g - 2)), 1 + static_cast<int>(rng.below(g - 2))};
        const bool clash = std::any_of(world_.foods.begin(), world_.foods.end(), [&](const LbfFood& o) {
          return std::abs(o.cell.row - c.row) <= 1 && std::abs(o.cell.col - c.col) <= 1;
        });
        if (clash) continue;
        const int level = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(food_cap)));
        world_.foods.push_back({c, level, true});
        total += level;
        break;
      }
    }
    world_.normalizer = total;
    for (std::size_t i = 0; i < agent_count(); ++i) {
      for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) throw EnvError("lbf: could not place agent");
        const Cell c{static_cast<int>(rng.below(g)), static_cast<int>(rng.below(g))};
        if (occupied(c)) continue;
        world_.agents.push_back(c);
        break;
      }
    }
  }

  Transition on_step(const JointAction& joint) override {
    const std::size_t k = agent_count();
    // Moves are resolved against start-of-step occupancy; agents contesting
    // the same target all stay put.
    std::vector<Cell> target = world_.agents;
    for (std::size_t i = 0; i < k; ++i) {
      Cell c = world_.agents[i];
      switch (joint.actions[i]) {
        case kLbfUp: --c.row; break;
        case kLbfDown: ++c.row; break;
        case kLbfLeft: --c.col; break;
        case kLbfRight: ++c.col; break;
        default: continue;
      }
      if (c.row < 0 || c.col < 0 || c.row >= world_.grid || c.col >= world_.grid) continue;
      if (occupied(c)) continue;
      target[i] = c;
    }
    for (std::size_t i = 0; i < k; ++i) {
      if (target[i] == world_.agents[i]) continue;
      bool contested = false;
      for (std::size_t j = 0; j < k; ++j) {
        if (j != i && target[j] == target[i]) contested = true;
      }
      if (!contested) world_.agents[i] = target[i];
    }

    // Each loading agent joins the lowest-index live food next to it; foods
    // are then resolved in index order.
    std::vector<std::vector<AgentId>> groups(world_.foods.size());
    for (std::size_t i = 0; i < k; ++i) {
      if (joint.actions[i] != kLbfLoad) continue;
      for (std::size_t f = 0; f < world_.foods.size(); ++f) {
        if (world_.foods[f].alive && adjacent4(world_.agents[i], world_.foods[f].cell)) {
          groups[f].push_back(AgentId{i});
          break;
        }
      }
    }
    Transition tr;
    tr.rewards.assign(k, 0.0);
    int collected = 0;
    for (std::size_t f = 0; f < groups.size(); ++f) {
      if (groups[f].empty()) continue;
      const LoadOutcome out = lbf_attempt_load(world_, groups[f], f);
      if (!out.success) continue;
      ++collected;
      for (std::size_t m = 0; m < groups[f].size(); ++m) tr.rewards[groups[f][m].index] += out.rewards[m];
    }
    if (world_.cooperative) {
      double team = 0.0;
      for (double r : tr.rewards) team += r;
      tr.rewards.assign(k, team);
    }
    tr.info["foods_collected"] = collected;
    tr.terminal = foods_alive() == 0;
    return tr;
  }

 private:
  double max_food_level() const { return static_cast<double>(std::max(1, food_level_cap_)); }

  bool occupied(Cell c) const {
    for (const Cell& a : world_.agents) {
      if (a == c) return true;
    }
    for (const LbfFood& f : world_.foods) {
      if (f.alive && f.cell == c) return true;
    }
    return false;
  }

  LbfParams params_;
  LbfWorld world_;
  int food_level_cap_ = 1;
};

}  // namespace cammarl::env
