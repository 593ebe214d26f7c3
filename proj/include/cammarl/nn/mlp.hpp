#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cammarl/rng.hpp"

namespace cammarl::nn {

using Matrix = Eigen::MatrixXd;  // rows are samples
using Vector = Eigen::VectorXd;

enum class Activation { tanh, relu };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

/// Weights are stored [out x in]; one bias vector per layer. Also used for
/// gradients and Adam moments.
struct Parameters {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  Parameters zeros_like() const {
    Parameters p;
    for (const auto& w : weights) p.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& b : biases) p.biases.push_back(Vector::Zero(b.size()));
    return p;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
    return n;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& w : weights) s += w.squaredNorm();
    for (const auto& b : biases) s += b.squaredNorm();
    return s;
  }

  Parameters& operator+=(const Parameters& o) {
    check_same_shape(o);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += o.weights[l];
      biases[l] += o.biases[l];
    }
    return *this;
  }

  Parameters& operator*=(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
    return *this;
  }

  bool all_finite() const {
    for (const auto& w : weights) {
      if (!w.allFinite()) return false;
    }
    for (const auto& b : biases) {
      if (!b.allFinite()) return false;
    }
    return true;
  }

  /// Per layer: W row-major, then b.
  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(size());
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) flat.push_back(weights[l](r, c));
      }
      for (Eigen::Index i = 0; i < biases[l].size(); ++i) flat.push_back(biases[l](i));
    }
    return flat;
  }

  void assign_flat(std::span<const double> flat) {
    if (flat.size() != size()) throw std::invalid_argument("parameter vector has wrong length");
    std::size_t k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) weights[l](r, c) = flat[k++];
      }
      for (Eigen::Index i = 0; i < biases[l].size(); ++i) biases[l](i) = flat[k++];
    }
  }

  void check_same_shape(const Parameters& o) const {
    if (o.weights.size() != weights.size()) throw std::invalid_argument("parameter layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (o.weights[l].rows() != weights[l].rows() || o.weights[l].cols() != weights[l].cols() ||
          o.biases[l].size() != biases[l].size()) {
        throw std::invalid_argument("parameter shape mismatch at layer " + std::to_string(l));
      }
    }
  }
};

/// Per-layer inputs and pre-activations of one forward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;  // inputs[l] enters layer l; inputs[0] is the batch
  std::vector<Matrix> pre;     // affine outputs of layer l
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Dense feed-forward net. Hidden layers use the chosen activation; the last
/// layer is linear (logits or values).
class Mlp {
 public:
  Mlp() = default;

  /// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
  /// `output_scale` shrinks the final layer, e.g. 0.01 for near-uniform
  /// initial policies.
  Mlp(std::vector<std::size_t> dims, Activation activation, std::uint64_t seed,
      double output_scale = 1.0)
      : dims_(std::move(dims)), activation_(activation) {
    if (dims_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
    for (std::size_t d : dims_) {
      if (d == 0) throw std::invalid_argument("Mlp layer sizes must be >= 1");
    }
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(dims_[l]);
      const auto out = static_cast<Eigen::Index>(dims_[l + 1]);
      const double bound = init_bound(dims_[l], dims_[l + 1]);
      const double scale = (l + 2 == dims_.size()) ? output_scale : 1.0;
      Matrix w(out, in);
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) w(r, c) = scale * rng.uniform(-bound, bound);
      }
      params_.weights.push_back(std::move(w));
      params_.biases.push_back(Vector::Zero(out));
    }
    m_ = params_.zeros_like();
    v_ = params_.zeros_like();
  }

  static double init_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t layer_count() const { return params_.weights.size(); }
  Activation activation() const noexcept { return activation_; }
  const Parameters& params() const noexcept { return params_; }
  Parameters& params() noexcept { return params_; }
  std::uint64_t step_count() const noexcept { return step_; }

  Matrix forward(const Matrix& batch, ForwardCache* cache = nullptr) const {
    if (static_cast<std::size_t>(batch.cols()) != input_dim()) {
      throw std::invalid_argument("Mlp::forward: batch has " + std::to_string(batch.cols()) +
                                  " columns, expected " + std::to_string(input_dim()));
    }
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    Matrix a = batch;
    for (std::size_t l = 0; l < layer_count(); ++l) {
      Matrix z = a * params_.weights[l].transpose();
      z.rowwise() += params_.biases[l].transpose();
      if (cache) {
        cache->inputs.push_back(a);
        cache->pre.push_back(z);
      }
      if (l + 1 < layer_count()) {
        a = activate(z);
      } else {
        a = std::move(z);
      }
    }
    return a;
  }

  std::vector<double> forward_one(std::span<const double> x) const {
    const Matrix out = forward(row(x));
    return {out.data(), out.data() + out.size()};
  }

  /// Activations of the last hidden layer for a single input.
  std::vector<double> last_hidden(std::span<const double> x) const {
    if (layer_count() < 2) throw std::logic_error("Mlp::last_hidden: network has no hidden layer");
    ForwardCache cache;
    forward(row(x), &cache);
    const Matrix& h = cache.inputs.back();
    return {h.data(), h.data() + h.size()};
  }

  /// Exact gradients of sum_ij output_grad(i,j) * output(i,j).
  Parameters backward(const ForwardCache& cache, const Matrix& output_grad) const {
    if (cache.pre.size() != layer_count()) throw std::invalid_argument("Mlp::backward: stale cache");
    const Matrix& last = cache.pre.back();
    if (output_grad.rows() != last.rows() || output_grad.cols() != last.cols()) {
      throw std::invalid_argument("Mlp::backward: output gradient shape mismatch");
    }
    Parameters grads = params_.zeros_like();
    Matrix delta = output_grad;
    for (std::size_t l = layer_count(); l-- > 0;) {
      grads.weights[l].noalias() = delta.transpose() * cache.inputs[l];
      grads.biases[l] = delta.colwise().sum().transpose();
      if (l > 0) {
        Matrix upstream = delta * params_.weights[l];
        delta = upstream.cwiseProduct(activation_derivative(cache.pre[l - 1]));
      }
    }
    return grads;
  }

  /// Bias-corrected Adam.
  void adam_step(const Parameters& grads, const AdamConfig& cfg) {
    params_.check_same_shape(grads);
    ++step_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      p.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
    };
    for (std::size_t l = 0; l < layer_count(); ++l) {
      update(params_.weights[l], m_.weights[l], v_.weights[l], grads.weights[l]);
      update(params_.biases[l], m_.biases[l], v_.biases[l], grads.biases[l]);
    }
  }

  static Matrix row(std::span<const double> x) {
    Matrix m(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = x[i];
    return m;
  }

  nlohmann::json to_json() const {
    return {{"format", "cammarl.mlp"},
            {"version", 1},
            {"dims", dims_},
            {"activation", to_string(activation_)},
            {"parameters", params_.flatten()}};
  }

  static Mlp from_json(const nlohmann::json& j) {
    if (j.at("format").get<std::string>() != "cammarl.mlp") throw std::invalid_argument("not an mlp checkpoint");
    if (j.at("version").get<int>() != 1) throw std::invalid_argument("unsupported mlp checkpoint version");
    Mlp mlp(j.at("dims").get<std::vector<std::size_t>>(),
            activation_from_string(j.at("activation").get<std::string>()), 0);
    mlp.params_.assign_flat(j.at("parameters").get<std::vector<double>>());
    return mlp;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << to_json().dump();
  }

  static Mlp load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    return from_json(nlohmann::json::parse(in));
  }

 private:
  Matrix activate(const Matrix& z) const {
    if (activation_ == Activation::tanh) return z.array().tanh().matrix();
    return z.cwiseMax(0.0);
  }

  Matrix activation_derivative(const Matrix& z) const {
    if (activation_ == Activation::tanh) {
      const Eigen::ArrayXXd t = z.array().tanh();
      return (1.0 - t.square()).matrix();
    }
    return (z.array() > 0.0).cast<double>().matrix();
  }

  std::vector<std::size_t> dims_;
  Activation activation_ = Activation::tanh;
  Parameters params_;
  Parameters m_;
  Parameters v_;
  std::uint64_t step_ = 0;
};

/// Stable softmax of one logit vector.
inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

/// Row-wise softmax.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> grad;  // softmax(logits) - one_hot(label)
};

inline CrossEntropy softmax_cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw std::out_of_range("softmax_cross_entropy: label out of range");
  }
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  CrossEntropy out;
  out.loss = lse - logits[static_cast<std::size_t>(label)];
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logits[i] - lse);
  out.grad[static_cast<std::size_t>(label)] -= 1.0;
  return out;
}

}  // namespace cammarl::nn
