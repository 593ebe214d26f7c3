#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "cammarl/nn/mlp.hpp"
#include "cammarl/rng.hpp"

namespace cammarl::ppo {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double lr = 3e-4;
  int epochs = 4;
  std::size_t minibatch = 64;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  std::size_t hidden = 64;
  std::size_t update_interval = 2048;  // env steps between updates
};

struct Step {
  std::vector<double> obs;
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
};

/// Append-only store of one agent's experience between two updates.
class RolloutBuffer {
 public:
  explicit RolloutBuffer(std::size_t capacity = 2048) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("RolloutBuffer capacity must be >= 1");
    steps_.reserve(capacity);
  }

  void push(Step step) { steps_.push_back(std::move(step)); }
  // Rewards arrive after the environment step that follows sampling.
  void set_last_outcome(double reward, bool done) {
    if (steps_.empty()) throw std::logic_error("RolloutBuffer: no step to complete");
    steps_.back().reward = reward;
    steps_.back().done = done;
  }

  std::size_t size() const noexcept { return steps_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool full() const noexcept { return steps_.size() >= capacity_; }
  bool empty() const noexcept { return steps_.empty(); }
  const std::vector<Step>& steps() const noexcept { return steps_; }
  void clear() { steps_.clear(); }

 private:
  std::size_t capacity_;
  std::vector<Step> steps_;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t,
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}, returns = A + V.
/// V after the last step is `bootstrap_value`.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                             std::span<const std::uint8_t> dones, double bootstrap_value,
                             double gamma, double gae_lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw std::invalid_argument("compute_gae: length mismatch");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap_value;
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    next_adv = delta + gamma * gae_lambda * live * next_adv;
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + values[t];
    next_value = values[t];
  }
  return out;
}

/// Shift to mean 0 and scale to (population) std 1; constant input maps to 0.
inline void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / n);
  for (double& a : adv) a = (a - mean) / (stddev + 1e-8);
}

struct ActionSample {
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  std::size_t samples = 0;
};

/// Rescales `g` in place so its global norm is at most `max_norm`.
inline void clip_grad_norm(nn::Parameters& g, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = std::sqrt(g.squared_norm());
  if (norm > max_norm) g *= max_norm / (norm + 1e-12);
}

/// Independent actor-critic learner with separate policy and value networks.
class PpoAgent {
 public:
  PpoAgent(std::size_t obs_dim, std::size_t action_count, PpoConfig config, std::uint64_t seed)
      : config_(config),
        actor_({obs_dim, config.hidden, config.hidden, action_count}, nn::Activation::tanh,
               derive_seed(seed, Stream::init, 0), 0.01),
        critic_({obs_dim, config.hidden, config.hidden, 1}, nn::Activation::tanh,
                derive_seed(seed, Stream::init, 1), 1.0) {
    if (!(config.gamma >= 0.0 && config.gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
    if (config.epochs < 1 || config.minibatch == 0) throw std::invalid_argument("epochs and minibatch must be >= 1");
  }

  std::size_t obs_dim() const { return actor_.input_dim(); }
  std::size_t action_count() const { return actor_.output_dim(); }
  const PpoConfig& config() const noexcept { return config_; }
  const nn::Mlp& actor() const noexcept { return actor_; }
  const nn::Mlp& critic() const noexcept { return critic_; }
  nn::Mlp& actor() noexcept { return actor_; }
  nn::Mlp& critic() noexcept { return critic_; }

  std::vector<double> action_probs(std::span<const double> obs) const {
    check_dim(obs);
    return nn::softmax(actor_.forward_one(obs));
  }

  double value(std::span<const double> obs) const {
    check_dim(obs);
    return critic_.forward_one(obs)[0];
  }

  double log_prob(std::span<const double> obs, int action) const {
    const auto logits = actor_.forward_one(obs);
    return -nn::softmax_cross_entropy(logits, action).loss;
  }

  ActionSample sample_action(std::span<const double> obs, Rng& rng) const {
    check_dim(obs);
    const auto logits = actor_.forward_one(obs);
    const auto probs = nn::softmax(logits);
    ActionSample s;
    s.action = static_cast<int>(rng.categorical(probs));
    s.log_prob = -nn::softmax_cross_entropy(logits, s.action).loss;
    s.value = critic_.forward_one(obs)[0];
    return s;
  }

  /// Clipped-surrogate update over the whole buffer, then clears it.
  UpdateStats update(RolloutBuffer& buffer, Rng& rng, double bootstrap_value = 0.0) {
    if (buffer.empty()) throw std::invalid_argument("ppo update: empty buffer");
    const auto& steps = buffer.steps();
    const std::size_t n = steps.size();
    std::vector<double> rewards(n), values(n);
    std::vector<std::uint8_t> dones(n);
    for (std::size_t i = 0; i < n; ++i) {
      rewards[i] = steps[i].reward;
      values[i] = steps[i].value;
      dones[i] = steps[i].done ? 1 : 0;
    }
    GaeResult gae = compute_gae(rewards, values, dones, bootstrap_value, config_.gamma, config_.gae_lambda);
    normalize_advantages(gae.advantages);

    const auto d = static_cast<Eigen::Index>(obs_dim());
    const auto actions = static_cast<Eigen::Index>(action_count());
    nn::AdamConfig adam;
    adam.lr = config_.lr;

    UpdateStats stats;
    std::size_t batches = 0;
    std::size_t clipped = 0;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
      rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t start = 0; start < n; start += config_.minibatch) {
        const std::size_t end = std::min(n, start + config_.minibatch);
        const auto b = static_cast<Eigen::Index>(end - start);
        nn::Matrix x(b, d);
        for (Eigen::Index r = 0; r < b; ++r) {
          const auto& o = steps[order[start + static_cast<std::size_t>(r)]].obs;
          for (Eigen::Index c = 0; c < d; ++c) x(r, c) = o[static_cast<std::size_t>(c)];
        }

        nn::ForwardCache actor_cache;
        const nn::Matrix logits = actor_.forward(x, &actor_cache);
        const nn::Matrix probs = nn::softmax_rows(logits);
        nn::Matrix logit_grad(b, actions);
        double policy_loss = 0.0;
        double entropy = 0.0;
        for (Eigen::Index r = 0; r < b; ++r) {
          const std::size_t i = order[start + static_cast<std::size_t>(r)];
          const int a = steps[i].action;
          const double adv = gae.advantages[i];
          const double mx = logits.row(r).maxCoeff();
          const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
          const double logp = logits(r, a) - lse;
          const double ratio = std::exp(logp - steps[i].log_prob);
          const double clipped_ratio = std::clamp(ratio, 1.0 - config_.clip, 1.0 + config_.clip);
          policy_loss -= std::min(ratio * adv, clipped_ratio * adv);
          if (std::abs(ratio - 1.0) > config_.clip) ++clipped;
          const bool flat = (adv > 0.0 && ratio > 1.0 + config_.clip) ||
                            (adv < 0.0 && ratio < 1.0 - config_.clip);
          const double surrogate_scale = flat ? 0.0 : adv * ratio;

          double h = 0.0;
          for (Eigen::Index k = 0; k < actions; ++k) h -= probs(r, k) * (logits(r, k) - lse);
          entropy += h;
          for (Eigen::Index k = 0; k < actions; ++k) {
            const double p = probs(r, k);
            const double logpk = logits(r, k) - lse;
            const double dlogp = (k == a ? 1.0 : 0.0) - p;
            const double dentropy = -p * (logpk + h);
            logit_grad(r, k) = -(surrogate_scale * dlogp + config_.entropy_coef * dentropy) /
                               static_cast<double>(b);
          }
        }
        nn::Parameters actor_grads = actor_.backward(actor_cache, logit_grad);
        clip_grad_norm(actor_grads, config_.max_grad_norm);
        actor_.adam_step(actor_grads, adam);

        nn::ForwardCache critic_cache;
        const nn::Matrix v = critic_.forward(x, &critic_cache);
        nn::Matrix value_grad(b, 1);
        double value_loss = 0.0;
        for (Eigen::Index r = 0; r < b; ++r) {
          const std::size_t i = order[start + static_cast<std::size_t>(r)];
          const double err = v(r, 0) - gae.returns[i];
          value_loss += err * err;
          value_grad(r, 0) = 2.0 * config_.value_coef * err / static_cast<double>(b);
        }
        nn::Parameters critic_grads = critic_.backward(critic_cache, value_grad);
        clip_grad_norm(critic_grads, config_.max_grad_norm);
        critic_.adam_step(critic_grads, adam);

        stats.policy_loss += policy_loss / static_cast<double>(b);
        stats.value_loss += value_loss / static_cast<double>(b);
        stats.entropy += entropy / static_cast<double>(b);
        ++batches;
      }
    }
    stats.policy_loss /= static_cast<double>(batches);
    stats.value_loss /= static_cast<double>(batches);
    stats.entropy /= static_cast<double>(batches);
    stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n * static_cast<std::size_t>(config_.epochs));
    stats.samples = n;
    buffer.clear();
    return stats;
  }

 private:
  void check_dim(std::span<const double> obs) const {
    if (obs.size() != obs_dim()) {
      throw std::invalid_argument("ppo: observation has " + std::to_string(obs.size()) +
                                  " entries, actor expects " + std::to_string(obs_dim()));
    }
  }

  PpoConfig config_;
  nn::Mlp actor_;
  nn::Mlp critic_;
};

}  // namespace cammarl::ppo
