#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "cammarl/nn/mlp.hpp"
#include "support/gradcheck.hpp"

using namespace cammarl::nn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("init: deterministic, zero biases, weights within the Glorot bound") {
  const Mlp a({4, 64, 64, 5}, Activation::tanh, 1);
  const Mlp b({4, 64, 64, 5}, Activation::tanh, 1);
  const Mlp c({4, 64, 64, 5}, Activation::tanh, 2);
  CHECK(a.params().flatten() == b.params().flatten());
  CHECK(a.params().flatten() != c.params().flatten());
  const std::vector<std::size_t> dims{4, 64, 64, 5};
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    CHECK(a.params().biases[l].isZero(0.0));
    const double bound = std::sqrt(6.0 / double(dims[l] + dims[l + 1]));
    CHECK(a.params().weights[l].cwiseAbs().maxCoeff() <= bound);
    CHECK(a.params().weights[l].rows() == static_cast<Eigen::Index>(dims[l + 1]));
  }
  const Mlp small({4, 8, 3}, Activation::tanh, 1, 0.01);
  const Mlp full({4, 8, 3}, Activation::tanh, 1, 1.0);
  CHECK(small.params().weights[1].isApprox(0.01 * full.params().weights[1]));
  CHECK_THROWS_AS(Mlp({4}, Activation::tanh, 1), std::invalid_argument);
  CHECK_THROWS_AS(Mlp({4, 0, 2}, Activation::tanh, 1), std::invalid_argument);
}

TEST_CASE("forward: zero net, identity net, and a straight-line re-evaluation") {
  Mlp zero({3, 4, 2}, Activation::tanh, 1);
  for (auto& w : zero.params().weights) w.setZero();
  Matrix x(2, 3);
  x << 1, 2, 3, -1, 0.5, 2;
  CHECK(zero.forward(x).isZero(0.0));

  Mlp id({3, 3}, Activation::relu, 1);
  id.params().weights[0] = Matrix::Identity(3, 3);
  CHECK(id.forward(x) == x);

  Mlp net({3, 5, 2}, Activation::tanh, 9);
  const Matrix out = net.forward(x);
  const auto& W = net.params().weights;
  const auto& B = net.params().biases;
  for (Eigen::Index r = 0; r < 2; ++r) {
    for (Eigen::Index o = 0; o < 2; ++o) {
      double y = B[1](o);
      for (Eigen::Index h = 0; h < 5; ++h) {
        double z = B[0](h);
        for (Eigen::Index i = 0; i < 3; ++i) z += W[0](h, i) * x(r, i);
        y += W[1](o, h) * std::tanh(z);
      }
      CHECK_THAT(out(r, o), WithinAbs(y, 1e-12));
    }
  }
  CHECK_THROWS_AS(net.forward(Matrix::Zero(1, 4)), std::invalid_argument);
}

TEST_CASE("backward: zero upstream, linearity, finite differences") {
  Mlp net({3, 8, 4}, Activation::tanh, 3);
  cammarl::Rng rng(5);
  const Matrix x = testsupport::random_matrix(6, 3, rng);
  const Matrix g1 = testsupport::random_matrix(6, 4, rng);
  const Matrix g2 = testsupport::random_matrix(6, 4, rng);
  ForwardCache cache;
  net.forward(x, &cache);
  CHECK(net.backward(cache, Matrix::Zero(6, 4)).squared_norm() == 0.0);
  Parameters sum = net.backward(cache, g1);
  sum += net.backward(cache, g2);
  const auto joint = net.backward(cache, g1 + g2).flatten();
  const auto separate = sum.flatten();
  for (std::size_t i = 0; i < joint.size(); ++i) CHECK_THAT(joint[i], WithinAbs(separate[i], 1e-12));

  for (auto act : {Activation::tanh, Activation::relu}) {
    const auto r = testsupport::finite_difference_check(Mlp({3, 8, 4}, act, 11), 5, 12);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.checked == 3 * 8 + 8 + 8 * 4 + 4);
  }
}

TEST_CASE("adam: zero gradient is a no-op; first step moves lr against the gradient") {
  Mlp net({1, 1}, Activation::tanh, 1);
  const auto before = net.params().flatten();
  AdamConfig cfg;
  cfg.lr = 0.1;
  net.adam_step(net.params().zeros_like(), cfg);
  CHECK(net.params().flatten() == before);

  Mlp one({1, 1}, Activation::tanh, 1);
  Parameters g = one.params().zeros_like();
  g.weights[0](0, 0) = 1.0;
  const double w0 = one.params().weights[0](0, 0);
  one.adam_step(g, cfg);
  // bias-corrected: m_hat = 1, v_hat = 1 -> step lr / (1 + eps)
  CHECK_THAT(one.params().weights[0](0, 0), WithinAbs(w0 - 0.1, 1e-8));
  CHECK(one.params().biases[0](0) == 0.0);

  Mlp a({2, 3, 2}, Activation::tanh, 4), b({2, 3, 2}, Activation::tanh, 4);
  Parameters ga = a.params().zeros_like();
  ga.weights[0].setConstant(0.3);
  a.adam_step(ga, cfg);
  b.adam_step(ga, cfg);
  CHECK(a.params().flatten() == b.params().flatten());
  CHECK(a.step_count() == 1);
}

TEST_CASE("softmax cross-entropy") {
  const std::vector<double> uniform(7, 0.4);
  CHECK_THAT(softmax_cross_entropy(uniform, 3).loss, WithinRel(std::log(7.0), 1e-12));
  const std::vector<double> two{1.0, 0.0};
  const auto ce = softmax_cross_entropy(two, 0);
  CHECK_THAT(ce.loss, WithinAbs(std::log1p(std::exp(-1.0)), 1e-12));
  CHECK_THAT(ce.loss, WithinAbs(0.31326, 1e-5));
  CHECK_THAT(std::accumulate(ce.grad.begin(), ce.grad.end(), 0.0), WithinAbs(0.0, 1e-12));
  // huge logits do not overflow
  const std::vector<double> big{1000.0, 0.0, -1000.0};
  CHECK(std::isfinite(softmax_cross_entropy(big, 2).loss));
  CHECK_THROWS_AS(softmax_cross_entropy(two, 2), std::out_of_range);
}

TEST_CASE("softmax is a probability vector") {
  cammarl::Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(1 + rng.below(9));
    for (double& v : z) v = rng.normal(0.0, 20.0);
    const auto p = softmax(z);
    for (double v : p) CHECK(v >= 0.0);
    CHECK_THAT(std::accumulate(p.begin(), p.end(), 0.0), WithinAbs(1.0, 1e-9));
  }
  const Matrix rows = softmax_rows(testsupport::random_matrix(4, 3, rng));
  for (Eigen::Index r = 0; r < 4; ++r) CHECK_THAT(rows.row(r).sum(), WithinAbs(1.0, 1e-12));
}

TEST_CASE("last_hidden equals the cached activations entering the output layer") {
  Mlp net({4, 6, 5, 3}, Activation::relu, 2);
  const std::vector<double> x{0.1, -0.2, 0.3, 0.4};
  ForwardCache cache;
  net.forward(Mlp::row(x), &cache);
  const auto h = net.last_hidden(x);
  REQUIRE(h.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(h[i] == cache.inputs.back()(0, static_cast<Eigen::Index>(i)));
}

TEST_CASE("checkpoint round trip") {
  const Mlp net({3, 4, 2}, Activation::relu, 6);
  const Mlp back = Mlp::from_json(net.to_json());
  CHECK(back.dims() == net.dims());
  CHECK(back.activation() == Activation::relu);
  CHECK(back.params().flatten() == net.params().flatten());
  const auto path = std::filesystem::temp_directory_path() / "cammarl_mlp_roundtrip.json";
  net.save(path.string());
  CHECK(Mlp::load(path.string()).params().flatten() == net.params().flatten());
  std::filesystem::remove(path);
  auto bad = net.to_json();
  bad["format"] = "other";
  CHECK_THROWS_AS(Mlp::from_json(bad), std::invalid_argument);
}
