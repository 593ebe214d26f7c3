#pragma once

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "cammarl/env/environment.hpp"
#include "cammarl/env/level_based_foraging.hpp"  // Cell, manhattan
#include "cammarl/rng.hpp"

namespace cammarl::env {

enum PpAction : int { kPpUp = 0, kPpDown = 1, kPpLeft = 2, kPpRight = 3, kPpNoop = 4 };
inline constexpr std::size_t kPpActionCount = 5;

/// Linear map: K rooms stacked top to bottom, each `room_height` rows by
/// `cols` columns, separated by one-row walls with a single door cell.
/// Agent j < K-1 owns the plate in room j that opens door j (between rooms j
/// and j+1); the last agent's target is the goal cell in room K-1. Agents
/// start in room 0.
struct PpWorld {
  int cols = 9;
  int room_height = 4;
  int rooms = 4;
  std::vector<Cell> agents;
  std::vector<Cell> plates;  // one per door
  std::vector<Cell> doors;
  Cell goal;

  int rows() const { return rooms * room_height + (rooms - 1); }
  int stride() const { return room_height + 1; }
  bool in_bounds(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < rows() && c.col < cols; }
  bool is_wall_row(int row) const { return row % stride() == room_height; }
  // Door cells belong to the room above them.
  int room_of(Cell c) const { return c.row / stride(); }
  int first_row(int room) const { return room * stride(); }

  /// Cell agent `agent` is rewarded for reaching: its plate, or the goal for
  /// the last agent. Its desired room is room `agent`.
  Cell target_of(std::size_t agent) const {
    return agent < plates.size() ? plates[agent] : goal;
  }
  int desired_room(std::size_t agent) const { return static_cast<int>(agent); }
};

inline PpWorld pp_make_linear_world(std::size_t agents) {
  if (agents < 2) throw std::invalid_argument("pressure_plate: needs at least 2 agents");
  PpWorld w;
  w.rooms = static_cast<int>(agents);
  const int center = w.cols / 2;
  for (int d = 0; d + 1 < w.rooms; ++d) {
    w.plates.push_back({w.first_row(d) + 1, d % 2 == 0 ? 1 : w.cols - 2});
    w.doors.push_back({w.first_row(d) + w.room_height, center});
  }
  w.goal = {w.first_row(w.rooms - 1) + w.room_height - 2, center};
  return w;
}

/// Door d is open iff some agent stands on plate d.
inline std::vector<bool> pp_door_state(const PpWorld& world) {
  std::vector<bool> open(world.doors.size(), false);
  for (std::size_t d = 0; d < world.plates.size(); ++d) {
    open[d] = std::find(world.agents.begin(), world.agents.end(), world.plates[d]) !=
              world.agents.end();
  }
  return open;
}

inline int pp_max_distance_in_room(const PpWorld& world, int room, Cell from) {
  const int top = world.first_row(room);
  int best = 0;
  for (int r = top; r < top + world.room_height; ++r) {
    for (int c = 0; c < world.cols; ++c) best = std::max(best, manhattan({r, c}, from));
  }
  return best;
}

/// In the target's room: -manhattan(agent, target) / (largest such distance in
/// that room). Elsewhere: -|room - desired room|.
inline double pp_reward(const PpWorld& world, AgentId agent) {
  if (agent.index >= world.agents.size()) throw std::out_of_range("pp_reward: agent out of range");
  const Cell pos = world.agents[agent.index];
  const Cell target = world.target_of(agent.index);
  const int room = world.room_of(pos);
  const int desired = world.desired_room(agent.index);
  if (room == desired) {
    const int max_d = pp_max_distance_in_room(world, desired, target);
    return -static_cast<double>(manhattan(pos, target)) / static_cast<double>(max_d);
  }
  return -static_cast<double>(std::abs(room - desired));
}

inline constexpr std::string_view kPpLayout = "pressure_plate/v1";
inline constexpr int kPpView = 5;

/// Egocentric 5x5 crop, channel-major: agents, plates, closed doors, goal.
/// Cells outside the grid are 0. Followed by own (row / rows, col / cols).
inline Observation pp_observe(const PpWorld& world, AgentId agent) {
  if (agent.index >= world.agents.size()) throw std::out_of_range("pp_observe: agent out of range");
  constexpr int half = kPpView / 2;
  constexpr int area = kPpView * kPpView;
  Observation obs;
  obs.layout = kPpLayout;
  obs.values.assign(4 * area + 2, 0.0);
  const Cell self = world.agents[agent.index];
  auto mark = [&](int channel, Cell c) {
    const int dr = c.row - self.row + half;
    const int dc = c.col - self.col + half;
    if (dr < 0 || dc < 0 || dr >= kPpView || dc >= kPpView) return;
    obs.values[static_cast<std::size_t>(channel * area + dr * kPpView + dc)] = 1.0;
  };
  for (const Cell& a : world.agents) mark(0, a);
  for (const Cell& p : world.plates) mark(1, p);
  const std::vector<bool> open = pp_door_state(world);
  for (std::size_t d = 0; d < world.doors.size(); ++d) {
    if (!open[d]) mark(2, world.doors[d]);
  }
  mark(3, world.goal);
  obs.values[4 * area] = static_cast<double>(self.row) / world.rows();
  obs.values[4 * area + 1] = static_cast<double>(self.col) / world.cols;
  return obs;
}

class PressurePlate final : public Environment {
 public:
  PressurePlate(std::size_t agents, int horizon)
      : Environment(agents, horizon), world_(pp_make_linear_world(agents)) {}

  std::string_view name() const override { return "pressure_plate"; }
  std::size_t observation_dim(AgentId) const override { return 4 * kPpView * kPpView + 2; }
  std::size_t action_count(AgentId) const override { return kPpActionCount; }
  Observation observe(AgentId agent) const override { return pp_observe(world_, agent); }

  const PpWorld& world() const noexcept { return world_; }
  void set_agents(std::vector<Cell> cells) {
    if (cells.size() != agent_count()) throw std::invalid_argument("pressure_plate: agent count");
    for (const Cell& c : cells) {
      if (!world_.in_bounds(c)) throw std::invalid_argument("pressure_plate: cell out of bounds");
    }
    world_.agents = std::move(cells);
  }

 protected:
  void on_reset(std::uint64_t seed) override {
    Rng rng(seed);
    world_.agents.clear();
    while (world_.agents.size() < agent_count()) {
      const Cell c{static_cast<int>(rng.below(world_.room_height)),
                   static_cast<int>(rng.below(world_.cols))};
      if (c == world_.plates[0]) continue;
      if (std::find(world_.agents.begin(), world_.agents.end(), c) != world_.agents.end()) continue;
      world_.agents.push_back(c);
    }
  }

  Transition on_step(const JointAction& joint) override {
    const std::size_t k = agent_count();
    const std::vector<bool> open = pp_door_state(world_);
    std::vector<Cell> target = world_.agents;
    for (std::size_t i = 0; i < k; ++i) {
      Cell c = world_.agents[i];
      switch (joint.actions[i]) {
        case kPpUp: --c.row; break;
        case kPpDown: ++c.row; break;
        case kPpLeft: --c.col; break;
        case kPpRight: ++c.col; break;
        default: continue;
      }
      if (!passable(c, open)) continue;
      if (std::find(world_.agents.begin(), world_.agents.end(), c) != world_.agents.end()) continue;
      target[i] = c;
    }
    for (std::size_t i = 0; i < k; ++i) {
      bool contested = false;
      for (std::size_t j = 0; j < k; ++j) {
        if (j != i && target[j] == target[i]) contested = true;
      }
      if (!contested) world_.agents[i] = target[i];
    }

    Transition tr;
    tr.rewards.resize(k);
    for (std::size_t i = 0; i < k; ++i) tr.rewards[i] = pp_reward(world_, AgentId{i});
    const std::vector<bool> now_open = pp_door_state(world_);
    tr.info["doors_open"] = static_cast<double>(std::count(now_open.begin(), now_open.end(), true));
    tr.terminal = world_.agents.back() == world_.goal;
    tr.info["goal_reached"] = tr.terminal ? 1.0 : 0.0;
    return tr;
  }

 private:
  bool passable(Cell c, const std::vector<bool>& open) const {
    if (!world_.in_bounds(c)) return false;
    if (!world_.is_wall_row(c.row)) return true;
    for (std::size_t d = 0; d < world_.doors.size(); ++d) {
      if (world_.doors[d] == c) return open[d];
    }
    return false;
  }

  PpWorld world_;
};

}  // namespace cammarl::env
