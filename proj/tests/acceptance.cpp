// Acceptance checks. `acceptance <criterion>` runs one criterion (1, 2, 3, 4,
// 5, 6-7, 8 or 9), prints a PASS or FAIL line per criterion with the measured
// values, and exits nonzero on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cammarl/cammarl.hpp"
#include "support/gradcheck.hpp"
#include "support/synthetic.hpp"

using namespace cammarl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool report(const std::string& criterion, bool ok, const std::string& detail) {
  std::printf("%s criterion %s: %s\n", ok ? "PASS" : "FAIL", criterion.c_str(), detail.c_str());
  std::fflush(stdout);
  return ok;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --- 1: coverage on a stationary synthetic task --------------------------

bool criterion_1() {
  const auto start = Clock::now();
  const int classes = 10;
  const double s = testsupport::separation_for_accuracy(0.8, classes);
  Rng gen(101);
  const auto train = testsupport::gaussian_clusters(5000, classes, s, gen);
  const auto cal = testsupport::gaussian_clusters(2000, classes, s, gen);
  const auto test = testsupport::gaussian_clusters(10000, classes, s, gen);
  conformal::ConformalConfig cfg;
  cfg.alpha = 0.1;
  cfg.epochs = 5;
  conformal::ConformalModel model(classes, classes, cfg, 102);
  Rng rng(103);
  model.train_classifier(train, 10, rng);
  const int k_reg = model.select_regularization(cal, rng).k_reg;
  bool ok = true;
  std::ostringstream detail;
  detail << "bayes acc " << fmt(testsupport::bayes_rule_accuracy(test), 3) << ", classifier acc "
         << fmt(model.evaluate(test).accuracy, 3) << ", k_reg " << k_reg << ", coverage";
  for (double lambda : {0.001, 0.01, 0.1, 0.2, 0.5}) {
    model.calibrate(cal, lambda, k_reg, rng);
    const double cov = model.empirical_coverage(test, rng);
    ok = ok && cov >= 0.88 && cov <= 0.92;
    detail << " l=" << lambda << ":" << fmt(cov);
  }
  const double t = seconds_since(start);
  ok = ok && t < 120.0;
  detail << " (band [0.88, 0.92]); " << fmt(t, 1) << " s";
  return report("1", ok, detail.str());
}

// --- 2: RAPS against a direct scan -----------------------------------------

std::vector<int> scan_set(const std::vector<double>& p, double tau, double lambda, int k_reg, double u) {
  const int k = static_cast<int>(p.size());
  std::vector<std::pair<double, int>> in;
  for (int a = 0; a < k; ++a) {
    double rho = 0.0;
    int z = 1;
    for (int b = 0; b < k; ++b) {
      if (p[b] > p[a]) {
        rho += p[b];
        ++z;
      } else if (p[b] == p[a] && b < a) {
        ++z;
      }
    }
    if (rho + u * p[a] + lambda * std::max(0, z - k_reg) <= tau) in.push_back({p[a], a});
  }
  if (in.empty()) {
    int best = 0;
    for (int a = 1; a < k; ++a) {
      if (p[a] > p[best]) best = a;
    }
    return {best};
  }
  std::sort(in.begin(), in.end(), [](auto x, auto y) { return x.first != y.first ? x.first > y.first : x.second < y.second; });
  std::vector<int> ids;
  for (const auto& m : in) ids.push_back(m.second);
  return ids;
}

bool criterion_2() {
  const auto start = Clock::now();
  Rng rng(201);
  const std::vector<double> lambdas{0.0, 0.001, 0.01, 0.1, 0.2, 0.5};
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.below(8);
    std::vector<double> p(k);
    double sum = 0.0;
    for (double& v : p) {
      v = rng.uniform() < 0.3 ? 0.25 : rng.uniform();  // forces ties
      sum += v;
    }
    for (double& v : p) v /= sum;
    const double tau = rng.uniform() < 0.05 ? std::numeric_limits<double>::infinity() : rng.uniform(-0.2, 2.0);
    const double lambda = lambdas[rng.below(lambdas.size())];
    const int k_reg = static_cast<int>(rng.below(k + 1));
    const double u = rng.uniform();
    if (conformal::predict_set(p, tau, lambda, k_reg, u).actions != scan_set(p, tau, lambda, k_reg, u)) ++mismatches;
  }
  const double t = seconds_since(start);
  return report("2", mismatches == 0 && t < 5.0,
                std::to_string(mismatches) + " mismatches in 1000 instances (|A| <= 8); " + fmt(t, 2) + " s");
}

// --- 3: backprop against central differences -------------------------------

bool criterion_3() {
  const auto start = Clock::now();
  bool ok = true;
  std::ostringstream detail;
  struct Case {
    std::vector<std::size_t> sizes;
    nn::Activation act;
    const char* label;
  };
  const std::vector<Case> cases{{{3, 8, 4}, nn::Activation::tanh, "[3,8,4] tanh"},
                                {{3, 8, 4}, nn::Activation::relu, "[3,8,4] relu"},
                                {{12, 64, 64, 5}, nn::Activation::tanh, "[12,64,64,5] tanh"},
                                {{12, 64, 64, 5}, nn::Activation::relu, "[12,64,64,5] relu"}};
  std::uint64_t seed = 301;
  for (const auto& c : cases) {
    const nn::Mlp net(c.sizes, c.act, seed);
    const auto r = testsupport::finite_difference_check(net, 4, seed + 1000);
    ++seed;
    ok = ok && r.max_rel_error < 1e-4;
    detail << c.label << " max rel err " << r.max_rel_error << " over " << r.checked << " params; ";
  }
  const double t = seconds_since(start);
  ok = ok && t < 30.0;
  detail << fmt(t, 1) << " s";
  return report("3", ok, detail.str());
}

// --- 4: environment formulas and determinism --------------------------------

bool close(double a, double b) { return std::abs(a - b) <= 1e-12; }

struct Replay {
  std::vector<std::vector<double>> obs;
  std::vector<std::vector<double>> rewards;
  std::vector<bool> dones;
  bool operator==(const Replay&) const = default;
};

Replay play(const env::EnvSpec& spec, std::uint64_t seed, std::uint64_t action_seed) {
  auto e = env::make_env(spec);
  Replay r;
  Rng rng(action_seed);
  for (const auto& o : e->reset(seed)) r.obs.push_back(o.values);
  while (!e->done()) {
    env::JointAction j;
    for (std::size_t i = 0; i < e->agent_count(); ++i) {
      j.actions.push_back(static_cast<int>(rng.below(e->action_count(env::AgentId{i}))));
    }
    auto out = e->step(j);
    for (const auto& o : out.observations) r.obs.push_back(o.values);
    r.rewards.push_back(out.rewards);
    r.dones.push_back(out.done);
  }
  return r;
}

bool criterion_4() {
  using namespace cammarl::env;
  const auto start = Clock::now();
  std::vector<std::string> failed;
  auto expect = [&](bool cond, const char* what) {
    if (!cond) failed.push_back(what);
  };

  const std::vector<Vec2> agents{{0, 0}, {10, 10}};
  const std::vector<Vec2> landmarks{{3, 4}, {0, 1}};
  expect(cn_reward(std::vector<Vec2>{{3, 4}, {0, 1}}, landmarks, 0) == 0.0, "cn on landmarks");
  expect(close(cn_reward(agents, landmarks, 0), -6.0), "cn -6");
  expect(close(cn_reward(agents, landmarks, 2), -8.0), "cn -8");
  {
    CnParams params;
    CnWorld w;
    w.positions = {{0.0, 0.0}};
    w.velocities = {{}};
    w.landmarks = {{0.5, 0.5}};
    const CnWorld next = cn_integrate(w, JointAction{{kCnRight}}, params);
    const double v = (1.0 - params.damping) * 0.0 + params.accel * params.dt;
    expect(close(next.velocities[0].x, v) && close(next.positions[0].x, v * params.dt), "cn one-step integration");
    CnWorld pair;
    pair.positions = {{0.0, 0.0}, {0.2, 0.0}};
    pair.velocities = {{}, {}};
    pair.landmarks = {{0.5, 0.5}};
    expect(cn_integrate(pair, JointAction{{kCnStay, kCnStay}}, params).collisions == 1, "cn collision at 0.2");
  }

  auto lbf_world = [](std::vector<int> levels, int food_level) {
    LbfWorld w;
    w.grid = 12;
    w.agent_levels = levels;
    const std::vector<Cell> spots{{5, 4}, {5, 6}};
    for (std::size_t i = 0; i < levels.size(); ++i) w.agents.push_back(spots[i]);
    w.foods.push_back({{5, 5}, food_level, true});
    w.normalizer = 1.0;
    return w;
  };
  const std::vector<AgentId> two{AgentId{0}, AgentId{1}}, one{AgentId{0}};
  {
    LbfWorld w = lbf_world({1, 2}, 3);
    expect(lbf_attempt_load(w, two, 0).success && !w.foods[0].alive, "lbf [1,2] vs 3");
    LbfWorld v = lbf_world({1, 1}, 3);
    expect(!lbf_attempt_load(v, two, 0).success && v.foods[0].alive, "lbf [1,1] vs 3");
    LbfWorld s = lbf_world({3}, 3);
    expect(lbf_attempt_load(s, one, 0).success, "lbf [3] vs 3");
  }
  expect(lbf_reward(3, std::vector<int>{2}) == std::vector<double>{3.0}, "lbf single loader");
  expect(lbf_reward(2, std::vector<int>{1, 1}) == std::vector<double>{1.0, 1.0}, "lbf equal split");
  {
    const auto r = lbf_reward(3, std::vector<int>{1, 2});
    expect(close(r[0], 1.0) && close(r[1], 2.0), "lbf 1/3 2/3 shares");
  }

  {
    PpWorld w = pp_make_linear_world(4);
    w.agents = {w.plates[0], {0, 0}, {2, 2}, {3, 3}};
    expect(pp_reward(w, AgentId{0}) == 0.0, "pp on plate");
    expect(close(pp_reward(w, AgentId{2}), -2.0), "pp two rooms short");
    w.agents[0] = {3, 8};  // farthest cell of room 0 from the plate
    expect(close(pp_reward(w, AgentId{0}), -1.0), "pp farthest cell");
    w.agents = {{0, 0}, {0, 2}, {0, 3}, {0, 5}};
    expect(pp_door_state(w) == std::vector<bool>{false, false, false}, "pp all doors closed");
    w.agents[2] = w.plates[1];
    expect(pp_door_state(w) == std::vector<bool>{false, true, false}, "pp door j open");
  }

  std::size_t pairs = 0, mismatched = 0;
  Rng draw(401);
  for (const char* name : {"cn", "lbf", "pressure_plate"}) {
    EnvSpec spec;
    spec.name = name;
    spec.agents = std::string(name) == "pressure_plate" ? 4 : 2;
    for (int i = 0; i < 100; ++i) {
      const std::uint64_t seed = draw.next(), actions = draw.next();
      if (!(play(spec, seed, actions) == play(spec, seed, actions))) ++mismatched;
      ++pairs;
    }
  }
  const double t = seconds_since(start);
  std::string detail = "formula examples failed: " + std::to_string(failed.size());
  for (const auto& f : failed) detail += " [" + f + "]";
  detail += "; determinism " + std::to_string(pairs - mismatched) + "/" + std::to_string(pairs) + " replays identical; " +
            fmt(t, 1) + " s";
  return report("4", failed.empty() && mismatched == 0 && t < 60.0, detail);
}

// --- 5: PPO learnability -----------------------------------------------------

// The CN settings: shorter update interval, more epochs and a shorter
// discount than the defaults, so 20k steps are enough. See README.
ppo::PpoConfig small_cn_ppo() {
  ppo::PpoConfig p;
  p.update_interval = 500;
  p.lr = 1e-3;
  p.epochs = 10;
  p.minibatch = 64;
  p.gamma = 0.9;
  p.entropy_coef = 0.0;
  p.hidden = 64;
  return p;
}

bool criterion_5() {
  const auto start = Clock::now();
  ppo::PpoConfig bandit_cfg;
  bandit_cfg.minibatch = 32;
  ppo::PpoAgent agent(1, 2, bandit_cfg, 501);
  Rng rng(502);
  const std::vector<double> obs{1.0};
  double p_best = agent.action_probs(obs)[1];
  int updates = 0;
  for (; updates < 200 && p_best <= 0.9; ++updates) {
    ppo::RolloutBuffer buf(64);
    for (int i = 0; i < 64; ++i) {
      const auto s = agent.sample_action(obs, rng);
      buf.push({obs, s.action, s.log_prob, s.value, s.action == 1 ? 1.0 : 0.0, true});
    }
    agent.update(buf, rng);
    p_best = agent.action_probs(obs)[1];
  }
  const bool bandit_ok = p_best > 0.9;
  std::ostringstream detail;
  detail << "bandit P(best) " << fmt(p_best) << " after " << updates << " updates; CN K=1 improvement";

  int improved = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig c;
    c.env.name = "cn";
    c.env.agents = 1;
    c.env.cn.landmarks = 1;
    c.env.horizon = 25;
    c.mode = ModelingMode::parse("noam");
    c.episodes = 800;  // 20k env steps
    c.seed = seed;
    c.ppo = small_cn_ppo();
    const auto out = train(c);
    const auto r = out.returns_of(0);
    const double first = std::accumulate(r.begin(), r.begin() + 100, 0.0) / 100.0;
    const double last = std::accumulate(r.end() - 100, r.end(), 0.0) / 100.0;
    // returns are negative, so improvement is measured against |first|
    const double gain = (last - first) / std::abs(first);
    if (gain >= 0.5 && out.env_steps <= 20000) ++improved;
    detail << " seed " << seed << ": " << fmt(first, 2) << " -> " << fmt(last, 2) << " (" << fmt(100 * gain, 1) << "%)";
  }
  const double t = seconds_since(start);
  detail << "; " << improved << "/3 seeds >= 50%; " << fmt(t, 1) << " s";
  return report("5", bandit_ok && improved == 3 && t < 300.0, detail.str());
}

// --- 6 and 7: desk-scale ordering and set-size trend ------------------------

bool criteria_6_7() {
  const auto start = Clock::now();
  const auto root = std::filesystem::temp_directory_path() / "cammarl_acceptance_6_7";
  std::filesystem::remove_all(root);
  std::vector<std::filesystem::path> dirs;
  std::map<std::string, runner::ExperimentResult> results;
  bool all_seeds_ok = true;
  for (const char* mode : {"giam", "cammarl-binary", "noam"}) {
    runner::ExperimentConfig cfg;
    cfg.run_id = mode;
    cfg.env.name = "cn";
    cfg.env.agents = 2;
    cfg.env.cn.landmarks = 2;
    cfg.mode = ModelingMode::parse(mode);
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.episodes = 5000;
    cfg.ppo = small_cn_ppo();
    cfg.output_dir = root / mode;
    cfg.workers = std::max(1u, std::thread::hardware_concurrency());
    const auto mode_start = Clock::now();
    auto result = runner::run_experiment(cfg);
    std::printf("  %s: %zu seeds in %.0f s\n", mode, result.runs.size(), seconds_since(mode_start));
    std::fflush(stdout);
    all_seeds_ok = all_seeds_ok && result.ok();
    dirs.push_back(cfg.output_dir);
    results.emplace(mode, std::move(result));
  }
  const auto cmp = runner::compare_modes(dirs);
  std::printf("%s", cmp.to_text().c_str());

  const runner::OrderingCheck* upper = nullptr;
  const runner::OrderingCheck* lower = nullptr;
  for (const auto& c : cmp.checks) {
    if (c.higher == "giam" && c.lower == "cammarl-binary") upper = &c;
    if (c.higher == "cammarl-binary" && c.lower == "noam") lower = &c;
  }
  const bool upper_ok = upper && upper->verdict != runner::Verdict::violated;
  const bool lower_ok = lower && lower->verdict == runner::Verdict::holds;
  std::ostringstream d6;
  d6 << "CN K=2 L=2, 5 seeds x 5000 episodes; ";
  for (const auto& m : cmp.ranked) d6 << m.mode << " " << fmt(m.mean, 3) << "+-" << fmt(m.std, 3) << "; ";
  if (upper) d6 << "giam - cammarl " << fmt(upper->diff, 3) << " (" << runner::to_string(upper->verdict) << "); ";
  if (lower) d6 << "cammarl - noam " << fmt(lower->diff, 3) << " vs pooled std " << fmt(lower->pooled_std, 3) << " (" << runner::to_string(lower->verdict) << ")";
  if (!all_seeds_ok) d6 << "; some seeds failed";
  const bool ok6 = report("6", upper_ok && lower_ok && all_seeds_ok, d6.str());

  int size_down = 0, acc_up = 0;
  std::ostringstream d7;
  d7 << "per-seed spearman (set size, accuracy):";
  for (const auto& run : results.at("cammarl-binary").runs) {
    std::vector<double> idx_s, size, idx_a, acc;
    for (const auto& m : run.conformal) {
      if (!std::isnan(m.mean_set_size)) {
        idx_s.push_back(static_cast<double>(m.update));
        size.push_back(m.mean_set_size);
      }
      idx_a.push_back(static_cast<double>(m.update));
      acc.push_back(m.cls_accuracy);
    }
    const double rs = size.size() >= 2 ? runner::spearman(idx_s, size) : std::nan("");
    const double ra = acc.size() >= 2 ? runner::spearman(idx_a, acc) : std::nan("");
    size_down += rs < 0.0;
    acc_up += ra > 0.0;
    d7 << " seed " << run.seed << " (" << fmt(rs, 3) << ", " << fmt(ra, 3) << ")";
  }
  d7 << "; set size decreasing on " << size_down << "/5, accuracy increasing on " << acc_up << "/5";
  const bool ok7 = report("7", size_down >= 4 && acc_up >= 4, d7.str());

  std::printf("  total %.0f s\n", seconds_since(start));
  std::filesystem::remove_all(root);
  return ok6 && ok7;
}

// --- 8: variant parity --------------------------------------------------------

bool criterion_8() {
  bool ok = true;
  std::ostringstream detail;
  const std::map<std::string, std::size_t> want{{"cammarl-binary", 17}, {"cammarl-padding", 17}, {"cammarl-penultimate", 76}};
  for (const auto& [name, dim] : want) {
    TrainConfig c;
    c.env.name = "cn";
    c.env.agents = 2;
    c.env.cn.landmarks = 2;
    c.mode = ModelingMode::parse(name);
    c.episodes = 40;
    c.seed = 801;
    c.ppo.update_interval = 200;
    Trainer trainer(c);
    bool widths = true;
    trainer.set_step_observer([&](const StepView& v) { widths = widths && v.self_input.size() == dim; });
    const auto out = trainer.train();
    const bool done = out.returns.size() == 40 && out.updates > 0 && out.conformal_models == 1;
    ok = ok && widths && done && trainer.agents()[0].obs_dim() == dim;
    detail << name << " dim " << trainer.agents()[0].obs_dim() << " (want " << dim << ")"
           << (done ? " completed" : " incomplete") << "; ";
  }
  std::set<std::vector<double>> binaries, paddeds;
  std::size_t orderings = 0;
  for (unsigned mask = 1; mask < 32; ++mask) {
    std::vector<int> members;
    for (int a = 0; a < 5; ++a) {
      if (mask & (1u << a)) members.push_back(a);
    }
    conformal::ConformalSet s;
    s.actions = members;
    binaries.insert(encode_binary(s, 5));
    do {
      s.actions = members;
      paddeds.insert(encode_padded(s, 5));
      ++orderings;
    } while (std::next_permutation(members.begin(), members.end()));
  }
  const bool injective = binaries.size() == 31 && paddeds.size() == orderings;
  detail << "binary codes " << binaries.size() << "/31 distinct, padded codes " << paddeds.size() << "/" << orderings << " distinct";
  return report("8", ok && injective, detail.str());
}

// --- 9: one conformal model per other agent on Pressure Plate --------------

bool criterion_9() {
  const auto start = Clock::now();
  TrainConfig c;
  c.env.name = "pressure_plate";
  c.env.agents = 4;
  c.mode = ModelingMode::parse("cammarl-binary");
  c.episodes = 100;
  c.seed = 901;
  c.ppo.update_interval = 1500;
  const auto a = train(c);
  const auto b = train(c);
  bool same = a.returns == b.returns && a.conformal.size() == b.conformal.size();
  for (std::size_t i = 0; same && i < a.conformal.size(); ++i) {
    same = a.conformal[i].tau == b.conformal[i].tau && a.conformal[i].cls_loss == b.conformal[i].cls_loss &&
           a.conformal[i].model_agent == b.conformal[i].model_agent;
  }
  std::set<std::size_t> modeled;
  for (const auto& m : a.conformal) modeled.insert(m.model_agent);
  const double t = seconds_since(start);
  const bool ok = a.conformal_models == 3 && modeled == std::set<std::size_t>{1, 2, 3} && a.returns.size() == 100 && same &&
                  t < 600.0;
  return report("9", ok,
                std::to_string(a.conformal_models) + " conformal models (agents 1-3 each updated: " +
                    (modeled.size() == 3 ? "yes" : "no") + "), " + std::to_string(a.returns.size()) + " episodes, " +
                    (same ? "identical" : "different") + " across two runs; " + fmt(t, 1) + " s");
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<bool()>> criteria{
      {"1", criterion_1}, {"2", criterion_2}, {"3", criterion_3}, {"4", criterion_4}, {"5", criterion_5},
      {"6-7", criteria_6_7}, {"8", criterion_8}, {"9", criterion_9}};
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.empty()) {
    for (const auto& [id, _] : criteria) wanted.push_back(id);
  }
  bool ok = true;
  for (const auto& id : wanted) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion '%s' (expected 1, 2, 3, 4, 5, 6-7, 8 or 9)\n", id.c_str());
      return 2;
    }
    try {
      ok = it->second() && ok;
    } catch (const std::exception& e) {
      ok = report(id, false, std::string("exception: ") + e.what()) && ok;
    }
  }
  return ok ? 0 : 1;
}
