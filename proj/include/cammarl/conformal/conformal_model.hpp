#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "cammarl/conformal/raps.hpp"
#include "cammarl/nn/mlp.hpp"
#include "cammarl/rng.hpp"

namespace cammarl::conformal {

struct ConformalConfig {
  double alpha = 0.1;
  std::vector<double> lambda_grid{0.001, 0.01, 0.1, 0.2, 0.5};
  std::size_t hidden = 64;
  double lr = 1e-3;
  std::size_t batch = 64;
  int epochs = 2;                   // classifier passes per conformal update
  double train_fraction = 0.8;      // rest is calibration
  std::size_t buffer_capacity = 50000;
};

struct LabeledPair {
  std::vector<double> obs;
  int action = 0;
};

using LabeledData = std::vector<LabeledPair>;

struct DataSplit {
  LabeledData train;
  LabeledData calibration;
};

/// Sliding window of the most recent (observation, action) pairs of one agent.
class LabeledObsBuffer {
 public:
  explicit LabeledObsBuffer(std::size_t capacity = 50000) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("LabeledObsBuffer capacity must be >= 1");
  }

  void push(std::vector<double> obs, int action) {
    if (records_.size() == capacity_) records_.pop_front();
    records_.push_back({std::move(obs), action});
  }

  std::size_t size() const noexcept { return records_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return records_.empty(); }
  const std::deque<LabeledPair>& records() const noexcept { return records_; }

  /// Fresh random partition: floor(train_fraction * n) records train the
  /// classifier, the rest calibrate. Both sides keep at least one record
  /// when n >= 2.
  DataSplit split(Rng& rng, double train_fraction) const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw std::invalid_argument("train_fraction must lie in (0, 1)");
    }
    std::vector<std::size_t> idx(records_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    std::size_t n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(idx.size()));
    if (idx.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    DataSplit out;
    out.train.reserve(n_train);
    out.calibration.reserve(idx.size() - n_train);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < n_train ? out.train : out.calibration).push_back(records_[idx[i]]);
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<LabeledPair> records_;
};

struct ClassifierStats {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

struct RegularizationChoice {
  double lambda = 0.0;
  int k_reg = 0;
  double tau = 0.0;
  std::vector<double> mean_sizes;  // tuning-half mean set size per grid entry
};

struct CoverageReport {
  double coverage = 0.0;
  double mean_set_size = 0.0;
};

struct UpdateReport {
  ClassifierStats classifier;  // on the training split, after fitting
  ClassifierStats heldout;     // on the calibration split
  RegularizationChoice regularization;
  std::size_t train_size = 0;
  std::size_t calibration_size = 0;
};

/// Smallest k such that the true label ranks <= k on at least a (1 - alpha)
/// fraction of the examples.
inline int adaptive_k_reg(std::span<const int> true_ranks, double alpha) {
  if (true_ranks.empty()) throw std::invalid_argument("adaptive_k_reg: no ranks");
  std::vector<int> sorted(true_ranks.begin(), true_ranks.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    // After including sorted[i], (i + 1) ranks are <= sorted[i]; advance to
    // the end of a run of equal ranks before testing.
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    if (static_cast<double>(i + 1) / n >= 1.0 - alpha - 1e-12) return sorted[i];
  }
  return sorted.back();
}

/// RAPS conformal predictor of one other agent's actions: a ReLU classifier
/// plus a calibrated threshold and regularization.
class ConformalModel {
 public:
  ConformalModel(std::size_t obs_dim, std::size_t action_count, ConformalConfig config,
                 std::uint64_t seed)
      : config_(std::move(config)),
        classifier_({obs_dim, config_.hidden, config_.hidden, action_count}, nn::Activation::relu,
                    derive_seed(seed, Stream::init, 2)) {
    if (!(config_.alpha > 0.0 && config_.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (config_.lambda_grid.empty()) throw std::invalid_argument("lambda grid must be non-empty");
    for (double l : config_.lambda_grid) {
      if (!(l >= 0.0)) throw std::invalid_argument("lambda grid entries must be >= 0");
    }
  }

  const ConformalConfig& config() const noexcept { return config_; }
  const nn::Mlp& classifier() const noexcept { return classifier_; }
  nn::Mlp& classifier() noexcept { return classifier_; }
  std::size_t obs_dim() const { return classifier_.input_dim(); }
  std::size_t action_count() const { return classifier_.output_dim(); }
  bool calibrated() const noexcept { return calibrated_; }
  double tau() const noexcept { return tau_; }
  double lambda() const noexcept { return lambda_; }
  int k_reg() const noexcept { return k_reg_; }
  double alpha() const noexcept { return config_.alpha; }
  std::size_t update_count() const noexcept { return update_count_; }

  std::vector<double> probabilities(std::span<const double> obs) const {
    return nn::softmax(classifier_.forward_one(obs));
  }

  nn::Matrix probabilities(const LabeledData& data) const {
    return nn::softmax_rows(classifier_.forward(to_matrix(data)));
  }

  /// Last hidden-layer activations of the classifier.
  std::vector<double> penultimate_embedding(std::span<const double> obs) const {
    return classifier_.last_hidden(obs);
  }

  ClassifierStats evaluate(const LabeledData& data) const {
    if (data.empty()) throw std::invalid_argument("evaluate: empty data");
    const nn::Matrix logits = classifier_.forward(to_matrix(data));
    ClassifierStats stats;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const int label = data[static_cast<std::size_t>(r)].action;
      std::vector<double> row(static_cast<std::size_t>(logits.cols()));
      for (Eigen::Index c = 0; c < logits.cols(); ++c) row[static_cast<std::size_t>(c)] = logits(r, c);
      stats.mean_loss += nn::softmax_cross_entropy(row, label).loss;
      Eigen::Index best = 0;
      logits.row(r).maxCoeff(&best);
      if (best == label) stats.accuracy += 1.0;
    }
    stats.accuracy /= static_cast<double>(data.size());
    stats.mean_loss /= static_cast<double>(data.size());
    return stats;
  }

  /// Minibatch cross-entropy fit on `train` only; stats are measured on
  /// `train` after fitting. The classifier is warm-started across calls.
  ClassifierStats train_classifier(const LabeledData& train, int epochs, Rng& rng) {
    if (train.empty()) throw std::invalid_argument("train_classifier: empty training split");
    const std::size_t n = train.size();
    const auto d = static_cast<Eigen::Index>(obs_dim());
    const auto classes = static_cast<Eigen::Index>(action_count());
    nn::AdamConfig adam;
    adam.lr = config_.lr;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int e = 0; e < epochs; ++e) {
      rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t start = 0; start < n; start += config_.batch) {
        const std::size_t end = std::min(n, start + config_.batch);
        const auto b = static_cast<Eigen::Index>(end - start);
        nn::Matrix x(b, d);
        for (Eigen::Index r = 0; r < b; ++r) {
          const auto& obs = train[order[start + static_cast<std::size_t>(r)]].obs;
          if (obs.size() != obs_dim()) throw std::invalid_argument("train_classifier: observation width mismatch");
          for (Eigen::Index c = 0; c < d; ++c) x(r, c) = obs[static_cast<std::size_t>(c)];
        }
        nn::ForwardCache cache;
        nn::Matrix grad = nn::softmax_rows(classifier_.forward(x, &cache));
        for (Eigen::Index r = 0; r < b; ++r) {
          const int label = train[order[start + static_cast<std::size_t>(r)]].action;
          if (label < 0 || label >= classes) throw std::out_of_range("train_classifier: label out of range");
          grad(r, label) -= 1.0;
        }
        grad /= static_cast<double>(b);
        classifier_.adam_step(classifier_.backward(cache, grad), adam);
      }
    }
    ++update_count_;
    return evaluate(train);
  }

  /// Sets tau from calibration set_scores under fixed (lambda, k_reg).
  double calibrate(const LabeledData& calibration, double lambda, int k_reg, Rng& rng) {
    if (calibration.empty()) throw std::invalid_argument("calibrate: empty calibration split");
    const nn::Matrix probs = probabilities(calibration);
    std::vector<double> scores;
    scores.reserve(calibration.size());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      const auto p = row_of(probs, r);
      scores.push_back(set_score(p, calibration[static_cast<std::size_t>(r)].action, rng.uniform(), lambda, k_reg));
    }
    set_calibration(calibrate_tau(std::move(scores), config_.alpha), lambda, k_reg);
    return tau_;
  }

  /// k_reg from the calibration rank distribution; lambda by the smallest
  /// mean set size on one half of the calibration split, each candidate
  /// calibrated on the other half; tau then recalibrated on the whole split.
  RegularizationChoice select_regularization(const LabeledData& calibration, Rng& rng) {
    return select_regularization(calibration, config_.alpha, config_.lambda_grid, rng);
  }

  RegularizationChoice select_regularization(const LabeledData& calibration, double alpha,
                                             std::span<const double> lambda_grid, Rng& rng) {
    if (calibration.size() < 2) throw std::invalid_argument("select_regularization: need at least 2 calibration records");
    if (lambda_grid.empty()) throw std::invalid_argument("select_regularization: empty lambda grid");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("select_regularization: alpha must lie in (0, 1)");
    config_.alpha = alpha;
    const nn::Matrix probs = probabilities(calibration);
    const std::size_t n = calibration.size();
    std::vector<std::vector<double>> rows(n);
    std::vector<int> ranks(n);
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) {
      rows[i] = row_of(probs, static_cast<Eigen::Index>(i));
      ranks[i] = label_rank(rows[i], calibration[i].action);
      u[i] = rng.uniform();
    }
    RegularizationChoice choice;
    choice.k_reg = adaptive_k_reg(ranks, alpha);

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t half = n / 2;
    const std::span<const std::size_t> fit(idx.data(), half);
    const std::span<const std::size_t> tune(idx.data() + half, n - half);

    double best = std::numeric_limits<double>::infinity();
    for (double lambda : lambda_grid) {
      std::vector<double> scores;
      scores.reserve(fit.size());
      for (std::size_t i : fit) {
        scores.push_back(set_score(rows[i], calibration[i].action, u[i], lambda, choice.k_reg));
      }
      const double tau = calibrate_tau(std::move(scores), alpha);
      double total = 0.0;
      for (std::size_t i : tune) total += static_cast<double>(predict_set(rows[i], tau, lambda, choice.k_reg, u[i]).size());
      const double mean = total / static_cast<double>(tune.size());
      choice.mean_sizes.push_back(mean);
      if (mean < best) {
        best = mean;
        choice.lambda = lambda;
      }
    }

    std::vector<double> scores;
    scores.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores.push_back(set_score(rows[i], calibration[i].action, u[i], choice.lambda, choice.k_reg));
    }
    choice.tau = calibrate_tau(std::move(scores), alpha);
    set_calibration(choice.tau, choice.lambda, choice.k_reg);
    return choice;
  }

  /// One conformal update: fresh train/calibration split, classifier fit,
  /// regularization selection and tau calibration.
  UpdateReport update(const LabeledObsBuffer& buffer, Rng& rng) {
    if (buffer.size() < 4) throw std::invalid_argument("conformal update: buffer needs at least 4 records");
    DataSplit split = buffer.split(rng, config_.train_fraction);
    UpdateReport report;
    report.train_size = split.train.size();
    report.calibration_size = split.calibration.size();
    report.classifier = train_classifier(split.train, config_.epochs, rng);
    report.heldout = evaluate(split.calibration);
    report.regularization = select_regularization(split.calibration, rng);
    return report;
  }

  /// Classifier-only update (no calibration); used by the prediction baselines.
  ClassifierStats update_classifier_only(const LabeledObsBuffer& buffer, Rng& rng) {
    if (buffer.size() < 2) throw std::invalid_argument("classifier update: buffer needs at least 2 records");
    DataSplit split = buffer.split(rng, config_.train_fraction);
    return train_classifier(split.train, config_.epochs, rng);
  }

  /// Before the first calibration every action is returned (ranked).
  ConformalSet predict(std::span<const double> obs, Rng& rng) const {
    const auto probs = probabilities(obs);
    if (!calibrated_) return full_set(probs);
    return predict_set(probs, tau_, lambda_, k_reg_, rng.uniform());
  }

  CoverageReport coverage_report(const LabeledData& pairs, Rng& rng) const {
    if (pairs.empty()) throw std::invalid_argument("empirical_coverage: no pairs");
    const nn::Matrix probs = probabilities(pairs);
    std::size_t hits = 0;
    double total_size = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto p = row_of(probs, static_cast<Eigen::Index>(i));
      const ConformalSet set = calibrated_ ? predict_set(p, tau_, lambda_, k_reg_, rng.uniform()) : full_set(p);
      if (set.contains(pairs[i].action)) ++hits;
      total_size += static_cast<double>(set.size());
    }
    const double n = static_cast<double>(pairs.size());
    return {static_cast<double>(hits) / n, total_size / n};
  }

  /// Fraction of pairs whose action lies in the predicted set.
  double empirical_coverage(const LabeledData& pairs, Rng& rng) const {
    return coverage_report(pairs, rng).coverage;
  }

  void set_calibration(double tau, double lambda, int k_reg) {
    if (std::isnan(tau)) throw std::invalid_argument("tau must not be NaN");
    tau_ = tau;
    lambda_ = lambda;
    k_reg_ = k_reg;
    calibrated_ = true;
  }

 private:
  nn::Matrix to_matrix(const LabeledData& data) const {
    const auto d = static_cast<Eigen::Index>(obs_dim());
    nn::Matrix x(static_cast<Eigen::Index>(data.size()), d);
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].obs.size() != obs_dim()) throw std::invalid_argument("observation width mismatch");
      for (Eigen::Index c = 0; c < d; ++c) x(static_cast<Eigen::Index>(i), c) = data[i].obs[static_cast<std::size_t>(c)];
    }
    return x;
  }

  static std::vector<double> row_of(const nn::Matrix& m, Eigen::Index r) {
    std::vector<double> out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = m(r, c);
    // Renormalize away rounding so validation never trips on sum != 1.
    double s = 0.0;
    for (double v : out) s += v;
    for (double& v : out) v /= s;
    return out;
  }

  ConformalConfig config_;
  nn::Mlp classifier_;
  bool calibrated_ = false;
  double tau_ = std::numeric_limits<double>::infinity();
  double lambda_ = 0.0;
  int k_reg_ = 0;
  std::size_t update_count_ = 0;
};

}  // namespace cammarl::conformal
