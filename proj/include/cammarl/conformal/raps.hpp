#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cammarl::conformal {

/// Prediction set over discrete actions, ordered by decreasing classifier
/// probability, with the parameters that produced it.
struct ConformalSet {
  std::vector<int> actions;
  double tau = std::numeric_limits<double>::infinity();
  double lambda = 0.0;
  int k_reg = 0;
  double u = 0.0;

  std::size_t size() const noexcept { return actions.size(); }
  bool contains(int a) const { return std::find(actions.begin(), actions.end(), a) != actions.end(); }
};

inline void validate_probabilities(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("probability vector is empty");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("probability vector has a negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
}

/// Action ids by decreasing probability; equal probabilities by ascending id.
inline std::vector<int> rank_order(std::span<const double> probs) {
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
  });
  return order;
}

/// 1-based rank of `label` under rank_order.
inline int label_rank(std::span<const double> probs, int label) {
  const double p = probs[static_cast<std::size_t>(label)];
  int rank = 1;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    if (probs[a] > p || (probs[a] == p && static_cast<int>(a) < label)) ++rank;
  }
  return rank;
}

/// Probability mass of the actions strictly more probable than `label`,
/// summed in ascending id order.
inline double mass_above(std::span<const double> probs, int label) {
  const double p = probs[static_cast<std::size_t>(label)];
  double mass = 0.0;
  for (double q : probs) {
    if (q > p) mass += q;
  }
  return mass;
}

/// Randomized regularized score:
/// mass_above(label) + p(label) * u + lambda * max(0, rank(label) - k_reg).
inline double generalized_score(std::span<const double> probs, int label, double u, double lambda,
                                int k_reg) {
  validate_probabilities(probs);
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw std::out_of_range("generalized_score: label out of range");
  }
  if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("generalized_score: u must lie in [0, 1]");
  if (lambda < 0.0 || k_reg < 0) throw std::invalid_argument("generalized_score: lambda and k_reg must be >= 0");
  const double penalty = lambda * std::max(0, label_rank(probs, label) - k_reg);
  return mass_above(probs, label) + probs[static_cast<std::size_t>(label)] * u + penalty;
}

/// Score under which predict_set membership is exactly `score <= tau` once
/// the top-1 action is forced into empty sets: the top-ranked label is
/// always covered, so it scores 0 (every calibrated tau is >= 0). Calibrating
/// on this keeps the coverage guarantee for the sets actually emitted.
inline double set_score(std::span<const double> probs, int label, double u, double lambda, int k_reg) {
  const double raw = generalized_score(probs, label, u, lambda, k_reg);
  return label_rank(probs, label) == 1 ? 0.0 : raw;
}

/// Conformal quantile: the ceil((n+1)(1-alpha))-th smallest score, or +inf
/// when that index exceeds n. A 1e-9 slack absorbs rounding in (n+1)(1-alpha).
inline double calibrate_tau(std::vector<double> scores, double alpha) {
  if (scores.empty()) throw std::invalid_argument("calibrate_tau: empty calibration set");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("calibrate_tau: alpha must lie in (0, 1)");
  const std::size_t n = scores.size();
  const double q = static_cast<double>(n + 1) * (1.0 - alpha);
  const auto k = static_cast<std::size_t>(std::ceil(q - 1e-9));
  if (k > n) return std::numeric_limits<double>::infinity();
  const std::size_t idx = k == 0 ? 0 : k - 1;
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(idx), scores.end());
  return scores[idx];
}

/// All actions whose generalized score is <= tau, most probable first. An
/// empty result is replaced by the top-ranked action.
inline ConformalSet predict_set(std::span<const double> probs, double tau, double lambda, int k_reg,
                                double u) {
  validate_probabilities(probs);
  if (std::isnan(tau)) throw std::invalid_argument("predict_set: tau is not calibrated");
  if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("predict_set: u must lie in [0, 1]");
  if (lambda < 0.0 || k_reg < 0) throw std::invalid_argument("predict_set: lambda and k_reg must be >= 0");
  ConformalSet set;
  set.tau = tau;
  set.lambda = lambda;
  set.k_reg = k_reg;
  set.u = u;
  const std::vector<int> order = rank_order(probs);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const int a = order[pos];
    const int rank = static_cast<int>(pos) + 1;
    const double score = mass_above(probs, a) + probs[static_cast<std::size_t>(a)] * u +
                         lambda * std::max(0, rank - k_reg);
    if (score <= tau) set.actions.push_back(a);
  }
  if (set.actions.empty()) set.actions.push_back(order.front());
  // Scores are non-decreasing along the ranking, so the members already form
  // a prefix of `order`.
  return set;
}

/// Set containing every action, ranked.
inline ConformalSet full_set(std::span<const double> probs) {
  ConformalSet set;
  set.actions = rank_order(probs);
  return set;
}

}  // namespace cammarl::conformal
