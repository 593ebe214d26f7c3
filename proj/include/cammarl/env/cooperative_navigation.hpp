#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "cammarl/env/environment.hpp"
#include "cammarl/rng.hpp"

namespace cammarl::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Cooperative Navigation actions.
enum CnAction : int { kCnStay = 0, kCnLeft = 1, kCnRight = 2, kCnDown = 3, kCnUp = 4 };
inline constexpr std::size_t kCnActionCount = 5;

struct CnWorld {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  std::vector<Vec2> landmarks;
  double radius = 0.15;
  int collisions = 0;  // pairwise contacts counted in the last integration step
};

/// Team reward: minus the summed distance from each landmark to its nearest
/// agent, minus one per collision.
inline double cn_reward(std::span<const Vec2> agents, std::span<const Vec2> landmarks,
                        int collision_count) {
  if (landmarks.empty()) throw std::invalid_argument("cn_reward: no landmarks");
  if (agents.empty()) throw std::invalid_argument("cn_reward: no agents");
  if (collision_count < 0) throw std::invalid_argument("cn_reward: negative collision count");
  double total = 0.0;
  for (const Vec2& l : landmarks) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& a : agents) best = std::min(best, distance(a, l));
    total += best;
  }
  return -total - static_cast<double>(collision_count);
}

/// One count per unordered pair closer than two radii.
inline int cn_count_collisions(std::span<const Vec2> agents, double radius) {
  int count = 0;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    for (std::size_t j = i + 1; j < agents.size(); ++j) {
      if (distance(agents[i], agents[j]) < 2.0 * radius) ++count;
    }
  }
  return count;
}

inline Vec2 cn_action_direction(int action) {
  switch (action) {
    case kCnStay: return {0.0, 0.0};
    case kCnLeft: return {-1.0, 0.0};
    case kCnRight: return {1.0, 0.0};
    case kCnDown: return {0.0, -1.0};
    case kCnUp: return {0.0, 1.0};
    default: throw std::out_of_range("cooperative navigation action out of range");
  }
}

/// Damped Euler step: v <- (1-damping) v + accel*dir*dt, speed clamped,
/// p <- p + v dt, position clamped to the arena; then collisions are counted.
inline CnWorld cn_integrate(CnWorld world, const JointAction& joint, const CnParams& params) {
  if (joint.actions.size() != world.positions.size()) {
    throw std::invalid_argument("cn_integrate: joint action size mismatch");
  }
  for (std::size_t i = 0; i < world.positions.size(); ++i) {
    const Vec2 dir = cn_action_direction(joint.actions[i]);
    Vec2 v = (1.0 - params.damping) * world.velocities[i] + (params.accel * params.dt) * dir;
    const double speed = v.norm();
    if (speed > params.max_speed) v = (params.max_speed / speed) * v;
    Vec2 p = world.positions[i] + params.dt * v;
    p.x = std::clamp(p.x, -params.arena, params.arena);
    p.y = std::clamp(p.y, -params.arena, params.arena);
    world.velocities[i] = v;
    world.positions[i] = p;
  }
  world.collisions = cn_count_collisions(world.positions, world.radius);
  return world;
}

inline constexpr std::string_view kCnLayout = "cn/v1";

/// [own vel (2), own pos (2), landmarks - own pos (2L),
///  others' pos - own pos (2(K-1)), others' vel (2(K-1))]
inline Observation cn_observe(const CnWorld& world, AgentId agent) {
  const std::size_t k = world.positions.size();
  if (agent.index >= k) throw std::out_of_range("cn_observe: agent out of range");
  const Vec2 self = world.positions[agent.index];
  Observation obs;
  obs.layout = kCnLayout;
  obs.values.reserve(4 + 2 * world.landmarks.size() + 4 * (k - 1));
  auto push = [&obs](Vec2 v) {
    obs.values.push_back(v.x);
    obs.values.push_back(v.y);
  };
  push(world.velocities[agent.index]);
  push(self);
  for (const Vec2& l : world.landmarks) push(l - self);
  for (std::size_t j = 0; j < k; ++j) {
    if (j != agent.index) push(world.positions[j] - self);
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (j != agent.index) push(world.velocities[j]);
  }
  return obs;
}

class CooperativeNavigation final : public Environment {
 public:
  CooperativeNavigation(std::size_t agents, int horizon, CnParams params)
      : Environment(agents, horizon), params_(params) {
    if (params.landmarks == 0) throw std::invalid_argument("cn: landmarks must be >= 1");
    if (params.dt <= 0.0 || params.radius <= 0.0 || params.max_speed <= 0.0 ||
        params.arena <= 0.0 || params.damping < 0.0 || params.damping > 1.0) {
      throw std::invalid_argument("cn: invalid physics constants");
    }
    world_.positions.resize(agents);
    world_.velocities.resize(agents);
    world_.landmarks.resize(params.landmarks);
    world_.radius = params.radius;
  }

  std::string_view name() const override { return "cn"; }
  std::size_t observation_dim(AgentId) const override {
    return 4 + 2 * params_.landmarks + 4 * (agent_count() - 1);
  }
  std::size_t action_count(AgentId) const override { return kCnActionCount; }
  Observation observe(AgentId agent) const override { return cn_observe(world_, agent); }

  const CnWorld& world() const noexcept { return world_; }
  const CnParams& params() const noexcept { return params_; }
  // Test hook: place entities by hand after reset.
  void set_world(CnWorld world) {
    if (world.positions.size() != agent_count() || world.velocities.size() != agent_count() ||
        world.landmarks.size() != params_.landmarks) {
      throw std::invalid_argument("cn: world shape mismatch");
    }
    world_ = std::move(world);
  }

 protected:
  void on_reset(std::uint64_t seed) override {
    Rng rng(seed);
    const double a = params_.arena;
    for (auto& p : world_.positions) p = {rng.uniform(-a, a), rng.uniform(-a, a)};
    for (auto& v : world_.velocities) v = {};
    for (auto& l : world_.landmarks) l = {rng.uniform(-a, a), rng.uniform(-a, a)};
    world_.collisions = 0;
  }

  Transition on_step(const JointAction& joint) override {
    world_ = cn_integrate(std::move(world_), joint, params_);
    const double r = cn_reward(world_.positions, world_.landmarks, world_.collisions);
    Transition tr;
    tr.rewards.assign(agent_count(), r);
    tr.info["collisions"] = world_.collisions;
    return tr;
  }

 private:
  CnParams params_;
  CnWorld world_;
};

}  // namespace cammarl::env
