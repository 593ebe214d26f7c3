#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cammarl/conformal/conformal_model.hpp"
#include "cammarl/env/registry.hpp"
#include "cammarl/env/trajectory.hpp"
#include "cammarl/modeling.hpp"
#include "cammarl/ppo/ppo.hpp"
#include "cammarl/rng.hpp"

namespace cammarl {

/// One training run (a single seed).
struct TrainConfig {
  env::EnvSpec env;
  ModelingMode mode;
  ppo::PpoConfig ppo;
  conformal::ConformalConfig conformal;
  std::size_t episodes = 100;
  std::uint64_t seed = 1;
  std::size_t checkpoint_interval = 0;  // episodes; 0 disables
  std::filesystem::path checkpoint_dir;
  bool record_last_trajectory = true;
};

/// One row per conformal update per modeled agent. Classifier and
/// calibration fields describe the update itself; set size and coverage
/// describe the sets actually drawn with that calibration until the next
/// update (NaN if none were drawn).
struct ConformalMetrics {
  std::size_t update = 0;
  std::size_t model_agent = 0;
  double mean_set_size = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double cls_accuracy = 0.0;
  double cls_loss = 0.0;
  double lambda = 0.0;
  int k_reg = 0;
  double tau = 0.0;
};

struct TrainRunArtifacts {
  std::uint64_t seed = 0;
  std::string mode;
  std::vector<std::vector<double>> returns;  // [episode][agent]
  std::vector<ConformalMetrics> conformal;
  std::vector<env::TrajectoryRecord> trajectory;  // last episode
  std::vector<std::filesystem::path> checkpoints;
  std::size_t conformal_models = 0;
  std::size_t env_steps = 0;
  std::size_t updates = 0;

  std::vector<double> returns_of(std::size_t agent) const {
    std::vector<double> out;
    out.reserve(returns.size());
    for (const auto& r : returns) out.push_back(r.at(agent));
    return out;
  }
};

/// What a step observer sees; spans are valid only during the callback.
struct StepView {
  std::size_t episode = 0;
  int t = 0;
  std::span<const double> self_input;
  std::span<const env::Observation> observations;  // before the step
  std::span<const int> actions;
  std::span<const conformal::ConformalSet> sets;
  std::span<const double> rewards;
  bool done = false;
};

using StepObserver = std::function<void(const StepView&)>;

struct EpisodeResult {
  std::vector<double> returns;
  int length = 0;
  std::vector<env::TrajectoryRecord> trajectory;
};

/// Independent PPO learners plus, for classifier modes, one conformal model
/// per other agent. Agent 0 is the self agent whose input is augmented.
class Trainer {
 public:
  explicit Trainer(TrainConfig config)
      : config_(std::move(config)),
        env_(env::make_env(config_.env)),
        policy_rng_(derive_seed(config_.seed, Stream::policy)),
        conformal_rng_(derive_seed(config_.seed, Stream::conformal)),
        shuffle_rng_(derive_seed(config_.seed, Stream::shuffle)) {
    const std::size_t k = env_->agent_count();
    if (config_.mode.uses_classifier() && k < 2) {
      throw std::invalid_argument("mode " + config_.mode.name() + " needs at least two agents");
    }
    for (std::size_t i = 0; i < k; ++i) {
      const env::AgentId id{i};
      const std::size_t dim = augmented_dim(config_.mode, *env_, id, config_.conformal.hidden);
      agents_.emplace_back(dim, env_->action_count(id), config_.ppo, derive_seed(config_.seed, Stream::init, 100 + i));
      buffers_.emplace_back(config_.ppo.update_interval);
    }
    if (config_.mode.uses_classifier()) {
      for (std::size_t j = 1; j < k; ++j) {
        const env::AgentId id{j};
        models_.emplace_back(env_->observation_dim(id), env_->action_count(id), config_.conformal,
                             derive_seed(config_.seed, Stream::init, 200 + j));
        labeled_.emplace_back(config_.conformal.buffer_capacity);
        trackers_.push_back({});
        pending_.emplace_back();
      }
    }
  }

  const TrainConfig& config() const noexcept { return config_; }
  const env::Environment& env() const noexcept { return *env_; }
  const std::vector<ppo::PpoAgent>& agents() const noexcept { return agents_; }
  const std::vector<conformal::ConformalModel>& models() const noexcept { return models_; }
  const std::vector<conformal::LabeledObsBuffer>& labeled_buffers() const noexcept { return labeled_; }
  std::size_t updates() const noexcept { return updates_; }

  void set_step_observer(StepObserver observer) { observer_ = std::move(observer); }

  /// Plays one episode, storing experience; does not update anything.
  EpisodeResult run_episode(std::size_t episode, bool record = false) {
    const std::size_t k = env_->agent_count();
    std::vector<env::Observation> obs = env_->reset(derive_seed(config_.seed, Stream::placement, episode));
    EpisodeResult result;
    result.returns.assign(k, 0.0);
    std::vector<ppo::ActionSample> samples(k);
    std::vector<OtherAgentInfo> others(k - 1);
    env::JointAction joint;
    joint.actions.assign(k, 0);
    bool done = false;
    while (!done) {
      // Others act first on their own observations.
      for (std::size_t j = 1; j < k; ++j) {
        samples[j] = agents_[j].sample_action(obs[j].values, policy_rng_);
        others[j - 1] = {obs[j].values, samples[j].action, env_->action_count(env::AgentId{j})};
      }
      AugmentedObservation self =
          augment_observation(config_.mode, obs[0].values, others, models_, conformal_rng_);
      samples[0] = agents_[0].sample_action(self.values, policy_rng_);
      for (std::size_t i = 0; i < k; ++i) joint.actions[i] = samples[i].action;

      const int t = env_->time();
      env::StepOutcome outcome = env_->step(joint);
      done = outcome.done;

      for (std::size_t i = 0; i < k; ++i) {
        std::vector<double> input = i == 0 ? std::move(self.values) : obs[i].values;
        buffers_[i].push({std::move(input), samples[i].action, samples[i].log_prob, samples[i].value, 0.0, false});
        buffers_[i].set_last_outcome(outcome.rewards[i], done);
        result.returns[i] += outcome.rewards[i];
      }
      for (std::size_t m = 0; m < models_.size(); ++m) {
        const int a = samples[m + 1].action;
        if (models_[m].calibrated()) trackers_[m].add(self.sets[m], a);
        labeled_[m].push(obs[m + 1].values, a);
      }
      if (observer_) {
        const std::vector<double>& input = buffers_[0].steps().back().obs;
        observer_(StepView{episode, t, input, obs, joint.actions, self.sets, outcome.rewards, done});
      }
      if (record) result.trajectory.push_back({t + 1, joint.actions, outcome.rewards, done, outcome.info});
      ++env_steps_;
      obs = std::move(outcome.observations);
    }
    result.length = env_->time();
    return result;
  }

  /// Conformal models first, then every PPO learner. Runs only once the
  /// self buffer holds an update interval's worth of steps.
  bool maybe_update(std::vector<ConformalMetrics>* metrics = nullptr) {
    if (!buffers_[0].full()) return false;
    for (std::size_t m = 0; m < models_.size(); ++m) {
      if (labeled_[m].size() < 4) continue;
      flush_tracker(m, metrics);
      const conformal::UpdateReport report = models_[m].update(labeled_[m], shuffle_rng_);
      ConformalMetrics row;
      row.update = updates_;
      row.model_agent = m + 1;
      row.cls_accuracy = report.heldout.accuracy;
      row.cls_loss = report.heldout.mean_loss;
      row.lambda = report.regularization.lambda;
      row.k_reg = report.regularization.k_reg;
      row.tau = report.regularization.tau;
      pending_[m] = row;
    }
    // Episodes end every update, so nothing is left to bootstrap.
    for (std::size_t i = 0; i < agents_.size(); ++i) agents_[i].update(buffers_[i], shuffle_rng_, 0.0);
    ++updates_;
    return true;
  }

  TrainRunArtifacts train() {
    TrainRunArtifacts out;
    out.seed = config_.seed;
    out.mode = config_.mode.name();
    out.conformal_models = models_.size();
    out.returns.reserve(config_.episodes);
    for (std::size_t ep = 0; ep < config_.episodes; ++ep) {
      const bool record = config_.record_last_trajectory && ep + 1 == config_.episodes;
      EpisodeResult r = run_episode(ep, record);
      out.returns.push_back(std::move(r.returns));
      if (record) out.trajectory = std::move(r.trajectory);
      maybe_update(&out.conformal);
      if (config_.checkpoint_interval > 0 && !config_.checkpoint_dir.empty() &&
          (ep + 1) % config_.checkpoint_interval == 0) {
        out.checkpoints.push_back(save_checkpoint(config_.checkpoint_dir, ep + 1));
      }
    }
    for (std::size_t m = 0; m < models_.size(); ++m) flush_tracker(m, &out.conformal);
    out.env_steps = env_steps_;
    out.updates = updates_;
    return out;
  }

  /// Writes every network under dir/episode_<n>/ and returns that directory.
  std::filesystem::path save_checkpoint(const std::filesystem::path& dir, std::size_t episode) const {
    const std::filesystem::path target = dir / ("episode_" + std::to_string(episode));
    std::filesystem::create_directories(target);
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      agents_[i].actor().save((target / ("agent" + std::to_string(i) + "_actor.json")).string());
      agents_[i].critic().save((target / ("agent" + std::to_string(i) + "_critic.json")).string());
    }
    for (std::size_t m = 0; m < models_.size(); ++m) {
      models_[m].classifier().save((target / ("agent" + std::to_string(m + 1) + "_classifier.json")).string());
    }
    return target;
  }

 private:
  struct SetTracker {
    std::size_t count = 0;
    std::size_t hits = 0;
    double size_total = 0.0;

    void add(const conformal::ConformalSet& set, int action) {
      ++count;
      if (set.contains(action)) ++hits;
      size_total += static_cast<double>(set.size());
    }
  };

  void flush_tracker(std::size_t m, std::vector<ConformalMetrics>* metrics) {
    if (pending_[m]) {
      ConformalMetrics row = *pending_[m];
      const SetTracker& tr = trackers_[m];
      if (tr.count > 0) {
        row.mean_set_size = tr.size_total / static_cast<double>(tr.count);
        row.coverage = static_cast<double>(tr.hits) / static_cast<double>(tr.count);
      }
      if (metrics) metrics->push_back(row);
      pending_[m].reset();
    }
    trackers_[m] = {};
  }

  TrainConfig config_;
  std::unique_ptr<env::Environment> env_;
  Rng policy_rng_;
  Rng conformal_rng_;
  Rng shuffle_rng_;
  std::vector<ppo::PpoAgent> agents_;
  std::vector<ppo::RolloutBuffer> buffers_;
  std::vector<conformal::ConformalModel> models_;
  std::vector<conformal::LabeledObsBuffer> labeled_;
  std::vector<SetTracker> trackers_;
  std::vector<std::optional<ConformalMetrics>> pending_;
  StepObserver observer_;
  std::size_t updates_ = 0;
  std::size_t env_steps_ = 0;
};

inline TrainRunArtifacts train(const TrainConfig& config) { return Trainer(config).train(); }

}  // namespace cammarl
