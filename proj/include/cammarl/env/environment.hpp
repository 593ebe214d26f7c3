#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cammarl::env {

/// Agent 0 is the modeling (self) agent; 1..K-1 are the modeled others.
struct AgentId {
  std::size_t index = 0;

  constexpr AgentId() = default;
  constexpr explicit AgentId(std::size_t i) : index(i) {}
  constexpr bool is_self() const noexcept { return index == 0; }
  auto operator<=>(const AgentId&) const = default;
};

struct Observation {
  std::vector<double> values;
  std::string_view layout;  // names a documented layout, e.g. "cn/v1"
};

struct JointAction {
  std::vector<int> actions;
};

using Info = std::map<std::string, double>;

struct StepOutcome {
  std::vector<Observation> observations;
  std::vector<double> rewards;
  bool done = false;
  Info info;
};

struct CnParams {
  std::size_t landmarks = 2;
  double dt = 0.1;
  double damping = 0.25;
  double accel = 5.0;
  double max_speed = 1.0;
  double radius = 0.15;
  double arena = 1.0;  // half-width of the square arena
};

struct LbfParams {
  std::size_t grid = 12;
  std::size_t foods = 4;
  int max_agent_level = 2;
  int max_food_level = 0;  // 0: sum of all agent levels
  bool cooperative = true;
};

struct EnvSpec {
  std::string name = "cn";  // cn | lbf | pressure_plate
  std::size_t agents = 2;
  int horizon = 0;  // 0 selects the environment default
  CnParams cn;
  LbfParams lbf;
};

/// Defaults used when EnvSpec::horizon is 0.
inline int default_horizon(std::string_view name) {
  if (name == "cn") return 25;
  if (name == "lbf") return 50;
  if (name == "pressure_plate") return 150;
  throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Simultaneous-move, partially observable, episodic multi-agent environment.
/// The base class owns the clock and the contract checks; concrete worlds
/// implement on_reset/on_step/observe.
class Environment {
 public:
  Environment(std::size_t agents, int horizon) : agents_(agents), horizon_(horizon) {
    if (agents == 0) throw std::invalid_argument("environment needs at least one agent");
    if (horizon <= 0) throw std::invalid_argument("horizon must be positive");
  }
  virtual ~Environment() = default;

  virtual std::string_view name() const = 0;
  virtual std::size_t observation_dim(AgentId agent) const = 0;
  virtual std::size_t action_count(AgentId agent) const = 0;
  virtual Observation observe(AgentId agent) const = 0;

  std::size_t agent_count() const noexcept { return agents_; }
  int horizon() const noexcept { return horizon_; }
  int time() const noexcept { return t_; }
  bool done() const noexcept { return done_; }

  std::vector<Observation> reset(std::uint64_t seed) {
    t_ = 0;
    done_ = false;
    started_ = true;
    on_reset(seed);
    return observe_all();
  }

  StepOutcome step(const JointAction& joint) {
    if (!started_) throw EnvError("step called before reset");
    if (done_) throw EnvError("step called after episode end");
    if (joint.actions.size() != agents_) {
      throw EnvError("joint action has " + std::to_string(joint.actions.size()) +
                     " entries, expected " + std::to_string(agents_));
    }
    for (std::size_t i = 0; i < agents_; ++i) {
      const int a = joint.actions[i];
      if (a < 0 || static_cast<std::size_t>(a) >= action_count(AgentId{i})) {
        throw EnvError("action " + std::to_string(a) + " out of range for agent " +
                       std::to_string(i));
      }
    }
    Transition tr = on_step(joint);
    ++t_;
    done_ = tr.terminal || t_ >= horizon_;
    StepOutcome out;
    out.observations = observe_all();
    out.rewards = std::move(tr.rewards);
    out.done = done_;
    out.info = std::move(tr.info);
    return out;
  }

  std::vector<Observation> observe_all() const {
    std::vector<Observation> obs;
    obs.reserve(agents_);
    for (std::size_t i = 0; i < agents_; ++i) obs.push_back(observe(AgentId{i}));
    return obs;
  }

 protected:
  struct Transition {
    std::vector<double> rewards;
    bool terminal = false;
    Info info;
  };

  virtual void on_reset(std::uint64_t seed) = 0;
  virtual Transition on_step(const JointAction& joint) = 0;

 private:
  std::size_t agents_;
  int horizon_;
  int t_ = 0;
  bool done_ = false;
  bool started_ = false;
};

}  // namespace cammarl::env
