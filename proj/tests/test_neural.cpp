#include <doctest.h>

#include "gradient_checks.hpp"
#include "nidda/error.hpp"
#include "nidda/neural.hpp"

using namespace nidda;
using namespace nidda::nn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

DenseNetd single(const MatrixXd& w, const VectorXd& b, Activation a) {
  return DenseNetd::from_layers({DenseLayer<double>{w, b, a}});
}

}  // namespace

TEST_CASE("identity layer passes input through") {
  const auto net = single(MatrixXd::Identity(3, 3), VectorXd::Zero(3), Activation::Linear);
  MatrixXd x(2, 3);
  x << 1, -2, 3, 0.5, 0, -7;
  CHECK(forward(net, x).output == x);
}

TEST_CASE("zero sigmoid unit outputs one half") {
  const auto net = single(MatrixXd::Zero(1, 4), VectorXd::Zero(1), Activation::Sigmoid);
  RandomSource r(1);
  MatrixXd x(5, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = sample_gaussian(r, 0, 10);
  CHECK((forward(net, x).output.array() == 0.5).all());
}

TEST_CASE("hand-computed two-layer composition") {
  MatrixXd w1(2, 2), w2(1, 2);
  w1 << 1, -1, 0.5, 2;
  w2 << 3, -0.25;
  VectorXd b1(2), b2(1);
  b1 << 0.1, -4;
  b2 << 0.7;
  const auto net = DenseNetd::from_layers({{w1, b1, Activation::Relu}, {w2, b2, Activation::Sigmoid}});
  MatrixXd x(1, 2);
  x << 2, 0.5;
  const double h0 = std::max(0.0, 1 * 2 - 1 * 0.5 + 0.1);    // 1.6
  const double h1 = std::max(0.0, 0.5 * 2 + 2 * 0.5 - 4.0);  // 0
  const double expect = 1.0 / (1.0 + std::exp(-(3 * h0 - 0.25 * h1 + 0.7)));
  CHECK(std::fabs(forward(net, x).output(0, 0) - expect) < 1e-12);
}

TEST_CASE("softmax rows sum to one and sigmoid stays inside (0,1)") {
  RandomSource r(2);
  auto soft = test::random_tiny_net(r, 4, 5, Activation::Softmax);
  auto sig = test::random_tiny_net(r, 4, 3, Activation::Sigmoid);
  MatrixXd x(20, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = sample_gaussian(r, 0, 50);
  const MatrixXd p = forward(soft, x).output;
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::fabs(p.row(i).sum() - 1.0) < 1e-12);
  const MatrixXd s = forward(sig, x).output;
  CHECK((s.array() > 0.0).all());
  CHECK((s.array() < 1.0).all());
}

TEST_CASE("forward errors") {
  const auto net = single(MatrixXd::Identity(3, 3), VectorXd::Zero(3), Activation::Linear);
  CHECK_THROWS_AS(forward(net, MatrixXd::Zero(2, 4)), DimensionError);
  MatrixXd bad = MatrixXd::Zero(1, 3);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(forward(net, bad), DomainError);
  CHECK_THROWS_AS(DenseNetd::from_layers({{MatrixXd::Zero(2, 3), VectorXd::Zero(2), Activation::Relu},
                                          {MatrixXd::Zero(1, 3), VectorXd::Zero(1), Activation::Linear}}),
                  DimensionError);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  RandomSource r(3);
  auto net = test::random_tiny_net(r, 3, 2, Activation::Relu);
  const auto fw = forward(net, MatrixXd::Ones(4, 3));
  const auto g = backward(net, fw.cache, MatrixXd::Zero(4, 2));
  CHECK(g.flatten().isZero());
}

TEST_CASE("single sigmoid unit with a BCE-style upstream matches the closed form") {
  MatrixXd w(1, 2);
  w << 0.3, -0.8;
  VectorXd b(1);
  b << 0.2;
  const auto net = single(w, b, Activation::Sigmoid);
  MatrixXd x(1, 2);
  x << 1.5, 0.5;
  const auto fw = forward(net, x);
  const double s = fw.output(0, 0);
  // loss = -log s, d loss / d s = -1/s; d loss / d w = -(1 - s) x.
  const auto g = backward(net, fw.cache, MatrixXd::Constant(1, 1, -1.0 / s));
  CHECK(std::fabs(g.layers[0].weight(0, 0) - (-(1 - s) * 1.5)) < 1e-12);
  CHECK(std::fabs(g.layers[0].weight(0, 1) - (-(1 - s) * 0.5)) < 1e-12);
  CHECK(std::fabs(g.layers[0].bias[0] - (-(1 - s))) < 1e-12);
  CHECK(std::fabs(s * (1 - s) - (1.0 / (1.0 + std::exp(-(0.45 - 0.4 + 0.2)))) *
                                      (1 - 1.0 / (1.0 + std::exp(-(0.45 - 0.4 + 0.2))))) < 1e-12);
}

TEST_CASE("backward matches finite differences") {
  RandomSource r(100);
  for (int i = 0; i < 60; ++i) {
    const auto res = test::neural_gradient_check(r, i % 3 == 0);
    CAPTURE(i);
    CHECK(res.param_error < 1e-4);
    CHECK(res.input_error < 1e-4);
  }
}

TEST_CASE("stale caches are rejected") {
  RandomSource r(4);
  auto net = test::random_tiny_net(r, 2, 1, Activation::Linear);
  const auto fw = forward(net, MatrixXd::Ones(3, 2));
  auto other = net;
  CHECK_THROWS_AS(backward(other, fw.cache, MatrixXd::Ones(3, 1)), DimensionError);
  auto st = AdamState<double>::for_net(net, 1e-3);
  auto g = backward(net, fw.cache, MatrixXd::Ones(3, 1));
  adam_update(net, g, st);
  CHECK_THROWS_AS(backward(net, fw.cache, MatrixXd::Ones(3, 1)), DimensionError);
  CHECK_THROWS_AS(backward(net, forward(net, MatrixXd::Ones(3, 2)).cache, MatrixXd::Ones(2, 1)), DimensionError);
}

TEST_CASE("inverted dropout preserves the expected pre-activation") {
  MatrixXd w1(3, 2), w2(1, 3);
  w1 << 1, 2, -1, 0.5, 0.3, 0.3;
  w2 << 0.7, -1.2, 2.0;
  const auto net = DenseNetd::from_layers(
      {{w1, VectorXd::Constant(3, 0.5), Activation::Relu}, {w2, VectorXd::Zero(1), Activation::Linear}});
  MatrixXd x(1, 2);
  x << 1.0, 0.4;
  const double clean = forward(net, x).output(0, 0);
  RandomSource r(5);
  const int n = 10000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = forward(net, x, DropoutPlan::training(0.2, r)).output(0, 0);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double sd = std::sqrt((s2 - n * mean * mean) / (n - 1));
  CHECK(std::fabs(mean - clean) < 3 * sd / std::sqrt(double(n)));
  // Inference plan is the identity.
  CHECK(forward(net, x, DropoutPlan::inference()).output(0, 0) == clean);
}

TEST_CASE("Adam steps") {
  auto net = single(MatrixXd::Zero(1, 1), VectorXd::Zero(1), Activation::Linear);
  auto st = AdamState<double>::for_net(net, 2e-4);
  CHECK(st.beta1 == 0.9);
  CHECK(st.beta2 == 0.99);
  Gradients<double> zero{{{MatrixXd::Zero(1, 1), VectorXd::Zero(1)}}, {}};
  adam_update(net, zero, st);
  CHECK(net.parameters().isZero());
  CHECK(st.step == 1);

  auto net2 = single(MatrixXd::Zero(1, 1), VectorXd::Zero(1), Activation::Linear);
  auto st2 = AdamState<double>::for_net(net2, 2e-4);
  Gradients<double> one{{{MatrixXd::Ones(1, 1), VectorXd::Ones(1)}}, {}};
  adam_update(net2, one, st2);
  CHECK(net2.parameters()[0] == doctest::Approx(-2e-4).epsilon(1e-6));

  double prev = net2.parameters()[0], prev_step = 0;
  for (int i = 0; i < 100; ++i) {
    adam_update(net2, one, st2);
    const double p = net2.parameters()[0];
    CHECK(p < prev);
    if (i > 0) CHECK(prev - p == doctest::Approx(prev_step).epsilon(1e-6));
    prev_step = prev - p;
    prev = p;
  }
  CHECK(st2.step == 101);

  Gradients<double> bad{{{MatrixXd::Constant(1, 1, std::nan("")), VectorXd::Zero(1)}}, {}};
  CHECK_THROWS_AS(adam_update(net2, bad, st2), DivergenceError);
}

TEST_CASE("parameters round-trip and checkpoint JSON") {
  RandomSource r(6);
  const std::array<Eigen::Index, 4> w{4, 7, 3, 2};
  const std::array<Activation, 3> a{Activation::Relu, Activation::Sigmoid, Activation::Softmax};
  auto net = DenseNetd::build(w, a, r);
  CHECK(net.widths() == std::vector<Eigen::Index>{4, 7, 3, 2});
  CHECK(net.parameter_count() == 4 * 7 + 7 + 7 * 3 + 3 + 3 * 2 + 2);
  for (const auto& l : net.layers()) {
    const double bound = std::sqrt(6.0 / double(l.in_dim() + l.out_dim()));
    CHECK(l.weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(l.bias.isZero());
  }
  auto copy = net;
  copy.set_parameters(net.parameters());
  CHECK(copy == net);
  const auto text = to_checkpoint_json(net);
  const auto back = from_checkpoint_json(text);
  CHECK(back == net);
  CHECK(to_checkpoint_json(back) == text);
  CHECK_THROWS_AS(from_checkpoint_json("{\"format\":\"other\"}"), ParseError);
  CHECK(activation_from_string(to_string(Activation::Softmax)) == Activation::Softmax);
}
