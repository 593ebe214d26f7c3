#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "cammarl/ppo/ppo.hpp"

using namespace cammarl::ppo;
using Catch::Matchers::WithinAbs;

namespace {

// Final layer zeroed so the logits equal its bias.
void pin_logits(PpoAgent& agent, const std::vector<double>& logits) {
  auto& p = agent.actor().params();
  p.weights.back().setZero();
  for (std::size_t k = 0; k < logits.size(); ++k) p.biases.back()(static_cast<Eigen::Index>(k)) = logits[k];
}

std::vector<std::uint8_t> flags(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("sampling: a dominant logit is almost always chosen") {
  PpoAgent agent(3, 5, PpoConfig{}, 1);
  pin_logits(agent, {100, 0, 0, 0, 0});
  cammarl::Rng rng(2);
  const std::vector<double> obs{0.1, 0.2, 0.3};
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += agent.sample_action(obs, rng).action == 0;
  CHECK(hits >= 9990);
}

TEST_CASE("sampling: equal logits give a uniform draw") {
  PpoAgent agent(2, 4, PpoConfig{}, 1);
  pin_logits(agent, {0.5, 0.5, 0.5, 0.5});
  cammarl::Rng rng(3);
  const std::vector<double> obs{1.0, -1.0};
  std::vector<int> counts(4, 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(agent.sample_action(obs, rng).action)];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int c : counts) CHECK(std::abs(c - n / 4.0) < 3.0 * sigma);
}

TEST_CASE("sampling is reproducible from the seed") {
  const PpoAgent a(3, 5, PpoConfig{}, 7);
  const PpoAgent b(3, 5, PpoConfig{}, 7);
  cammarl::Rng ra(1), rb(1);
  const std::vector<double> obs{0.3, -0.1, 0.9};
  for (int i = 0; i < 100; ++i) CHECK(a.sample_action(obs, ra).action == b.sample_action(obs, rb).action);
}

TEST_CASE("gae: zeros everywhere give zero advantages") {
  const std::vector<double> z(5, 0.0);
  const auto g = compute_gae(z, z, flags({0, 0, 0, 0, 1}), 0.0, 0.99, 0.95);
  for (double a : g.advantages) CHECK(a == 0.0);
}

TEST_CASE("gae: one terminal step of reward 1 from V=0") {
  const std::vector<double> r{1.0}, v{0.0};
  const auto g = compute_gae(r, v, flags({1}), 123.0, 0.99, 0.95);
  CHECK(g.advantages[0] == 1.0);
  CHECK(g.returns[0] == 1.0);
}

TEST_CASE("gae: two-step hand recursion") {
  // delta_1 = 1 - 0.2 = 0.8 ; delta_0 = 0 + 0.9 * 0.2 - 0.5 = -0.32
  // A_1 = 0.8 ; A_0 = -0.32 + 0.9 * 0.8 = 0.4
  const std::vector<double> r{0.0, 1.0}, v{0.5, 0.2};
  const auto g = compute_gae(r, v, flags({0, 1}), 0.0, 0.9, 1.0);
  CHECK_THAT(g.advantages[0], WithinAbs(0.4, 1e-12));
  CHECK_THAT(g.advantages[1], WithinAbs(0.8, 1e-12));
  CHECK_THAT(g.returns[0], WithinAbs(0.9, 1e-12));
  CHECK_THAT(g.returns[1], WithinAbs(1.0, 1e-12));
  // the done flag stops bootstrapping across episode boundaries
  const auto cut = compute_gae(r, v, flags({1, 1}), 0.0, 0.9, 1.0);
  CHECK_THAT(cut.advantages[0], WithinAbs(-0.5, 1e-12));
  CHECK_THROWS_AS(compute_gae(r, v, flags({1}), 0.0, 0.9, 1.0), std::invalid_argument);
}

TEST_CASE("advantage normalization") {
  cammarl::Rng rng(4);
  std::vector<double> adv(257);
  for (double& a : adv) a = rng.normal(3.0, 5.0);
  normalize_advantages(adv);
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  CHECK(std::abs(mean) < 1e-9);
  CHECK_THAT(std::sqrt(var / n), WithinAbs(1.0, 1e-6));
  std::vector<double> flat(4, 2.5);
  normalize_advantages(flat);
  for (double a : flat) CHECK(a == 0.0);
}

TEST_CASE("recorded log-probs match the policy, so the first ratio is 1") {
  const PpoAgent agent(4, 3, PpoConfig{}, 5);
  cammarl::Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> obs{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const auto s = agent.sample_action(obs, rng);
    CHECK_THAT(agent.log_prob(obs, s.action), WithinAbs(s.log_prob, 1e-9));
    CHECK_THAT(std::exp(agent.log_prob(obs, s.action) - s.log_prob), WithinAbs(1.0, 1e-9));
    CHECK(s.value == agent.value(obs));
  }
}

TEST_CASE("update: stats are sane and the buffer is consumed") {
  PpoConfig cfg;
  cfg.minibatch = 16;
  PpoAgent agent(2, 3, cfg, 8);
  cammarl::Rng rng(9);
  RolloutBuffer buf(40);
  for (int i = 0; i < 40; ++i) {
    const std::vector<double> obs{rng.normal(), rng.normal()};
    const auto s = agent.sample_action(obs, rng);
    buf.push({obs, s.action, s.log_prob, s.value, 0.0, false});
    buf.set_last_outcome(s.action == 1 ? 1.0 : 0.0, i % 10 == 9);
  }
  const auto stats = agent.update(buf, rng);
  CHECK(buf.empty());
  CHECK(stats.samples == 40);
  CHECK(stats.clip_fraction >= 0.0);
  CHECK(stats.clip_fraction <= 1.0);
  CHECK(stats.entropy > 0.0);
  CHECK(stats.entropy <= std::log(3.0) + 1e-9);
  CHECK(agent.actor().params().all_finite());
  RolloutBuffer empty(4);
  CHECK_THROWS_AS(agent.update(empty, rng), std::invalid_argument);
  CHECK_THROWS_AS(agent.value(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("bandit: the paying arm takes over") {
  PpoConfig cfg;
  cfg.minibatch = 32;
  PpoAgent agent(1, 3, cfg, 10);
  cammarl::Rng rng(11);
  const std::vector<double> obs{1.0};
  double p0 = 0.0;
  int updates = 0;
  for (; updates < 200 && p0 <= 0.9; ++updates) {
    RolloutBuffer buf(64);
    for (int i = 0; i < 64; ++i) {
      const auto s = agent.sample_action(obs, rng);
      buf.push({obs, s.action, s.log_prob, s.value, s.action == 0 ? 1.0 : 0.0, true});
    }
    agent.update(buf, rng);
    p0 = agent.action_probs(obs)[0];
  }
  INFO("updates used: " << updates);
  CHECK(p0 > 0.9);
}
