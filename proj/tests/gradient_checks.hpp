#pragma once

// Randomized finite-difference checks of the neural and adversarial
// gradients, shared by the unit tests and the acceptance binary.

#include <array>

#include "nidda/dgnn.hpp"
#include "nidda/neural.hpp"
#include "oracles.hpp"

namespace nidda::test {

using nn::Activation;
using nn::DenseNetd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Random net with 1-3 layers of at most 6 units; the last activation is
/// drawn from all four kinds.
inline DenseNetd random_tiny_net(RandomSource& rng, Eigen::Index in, Eigen::Index out, Activation last) {
  const std::size_t depth = 1 + rng.below(3);
  std::vector<Eigen::Index> widths{in};
  std::vector<Activation> acts;
  const std::array<Activation, 3> hidden{Activation::Relu, Activation::Sigmoid, Activation::Linear};
  for (std::size_t i = 0; i + 1 < depth; ++i) {
    widths.push_back(2 + static_cast<Eigen::Index>(rng.below(5)));
    acts.push_back(hidden[rng.below(hidden.size())]);
  }
  widths.push_back(out);
  acts.push_back(last);
  auto net = DenseNetd::build(widths, acts, rng);
  auto p = net.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.3 * sample_gaussian(rng, 0, 1);
  net.set_parameters(p);
  return net;
}

struct NeuralCheck {
  double param_error = 0;
  double input_error = 0;
};

/// Checks backward() against central differences of
/// (1/L) sum_l sum_j c_lj out_lj (or mean cross-entropy for a fused softmax).
inline NeuralCheck neural_gradient_check(RandomSource& rng, bool with_dropout) {
  const std::array<Activation, 4> kinds{Activation::Linear, Activation::Relu, Activation::Sigmoid, Activation::Softmax};
  const Activation last = kinds[rng.below(4)];
  const Eigen::Index in = 1 + static_cast<Eigen::Index>(rng.below(5));
  const Eigen::Index out = last == Activation::Softmax ? 2 + static_cast<Eigen::Index>(rng.below(3))
                                                       : 1 + static_cast<Eigen::Index>(rng.below(4));
  DenseNetd net = random_tiny_net(rng, in, out, last);
  const Eigen::Index l = 1 + static_cast<Eigen::Index>(rng.below(6));
  MatrixXd x(l, in), c(l, out);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = sample_gaussian(rng, 0, 1);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = sample_gaussian(rng, 0, 1);
  const bool fused = last == Activation::Softmax && rng.below(2) == 0;
  std::vector<Eigen::Index> target(static_cast<std::size_t>(l));
  for (auto& t : target) t = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(out)));
  const std::uint64_t mask_seed = rng.next_u64();
  const double rate = with_dropout ? 0.3 : 0.0;

  auto loss_rows = [&](const MatrixXd& y) {
    VectorXd per(l);
    for (Eigen::Index r = 0; r < l; ++r) {
      per[r] = fused ? -std::log(y(r, target[static_cast<std::size_t>(r)])) : y.row(r).dot(c.row(r));
    }
    return per;
  };
  auto run = [&](const DenseNetd& n, const MatrixXd& input) {
    RandomSource masks(mask_seed);
    return nn::forward(n, input, nn::DropoutPlan::training(rate, masks));
  };

  const auto fw = run(net, x);
  MatrixXd up = c;
  if (fused) {
    up = fw.output;
    for (Eigen::Index r = 0; r < l; ++r) up(r, target[static_cast<std::size_t>(r)]) -= 1.0;
  }
  const auto g = nn::backward(net, fw.cache, up, fused ? nn::Upstream::PreActivation : nn::Upstream::Output);

  DenseNetd probe = net;
  const VectorXd theta = net.parameters();
  const VectorXd numeric = oracle::central_difference(
      [&](const VectorXd& p) {
        probe.set_parameters(p);
        return loss_rows(run(probe, x).output).mean();
      },
      theta);
  NeuralCheck res;
  res.param_error = oracle::gradient_error(g.flatten(), numeric);

  // Input gradient is per sample: d loss_l / d x_l.
  const VectorXd xv = Eigen::Map<const VectorXd>(x.data(), x.size());
  const VectorXd numeric_x = oracle::central_difference(
      [&](const VectorXd& v) {
        const MatrixXd xi = Eigen::Map<const MatrixXd>(v.data(), l, in);
        return loss_rows(run(net, xi).output).sum();
      },
      xv);
  const VectorXd analytic_x = Eigen::Map<const VectorXd>(g.input.data(), g.input.size());
  res.input_error = oracle::gradient_error(analytic_x, numeric_x);
  return res;
}

/// A GanPair with the full activation pattern but scaled-down widths.
inline dgnn::GanPair tiny_gan(RandomSource& rng, Eigen::Index k) {
  const std::array<Eigen::Index, 6> dw{k, 5, 4, 4, 3, 1};
  const std::array<Activation, 5> da{Activation::Relu, Activation::Relu, Activation::Relu, Activation::Relu,
                                     Activation::Sigmoid};
  const std::array<Eigen::Index, 5> gw{k, 4, 4, 3, k};
  const std::array<Activation, 4> ga{Activation::Relu, Activation::Relu, Activation::Sigmoid, Activation::Linear};
  dgnn::GanPair p;
  p.discriminator = DenseNetd::build(dw, da, rng);
  p.generator = DenseNetd::build(gw, ga, rng);
  for (auto* n : {&p.discriminator, &p.generator}) {
    auto th = n->parameters();
    for (Eigen::Index i = 0; i < th.size(); ++i) th[i] += 0.1 * sample_gaussian(rng, 0, 1);
    n->set_parameters(th);
  }
  p.scaler = dgnn::FeatureScaler::identity(k);
  return p;
}

/// The batch objective computed directly from forward passes.
inline double objective(dgnn::Phase phase, const dgnn::GanPair& p, const MatrixXd& x, const MatrixXd& y,
                        const MatrixXd& z) {
  const MatrixXd& real = phase == dgnn::Phase::Pretrain ? y : x;
  const MatrixXd g_in = phase == dgnn::Phase::Pretrain ? z : MatrixXd(y + z);
  const MatrixXd fake = nn::forward(p.generator, g_in).output;
  const MatrixXd d_fake = nn::forward(p.discriminator, fake).output;
  const MatrixXd d_real = nn::forward(p.discriminator, real).output;
  return d_real.array().log().mean() + (1.0 - d_fake.array()).log().mean();
}

struct AdversarialCheck {
  double d_error = 0;
  double g_error = 0;
  double value_error = 0;
};

inline AdversarialCheck adversarial_gradient_check(RandomSource& rng, dgnn::Phase phase) {
  const Eigen::Index k = 3;
  const Eigen::Index l = 2 + static_cast<Eigen::Index>(rng.below(4));
  dgnn::GanPair pair = tiny_gan(rng, k);
  MatrixXd x(l, k), y(l, k), z(l, k);
  for (auto* m : {&x, &y, &z}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = sample_gaussian(rng, 0, 1);
  }
  const auto g = dgnn::adversarial_gradients(phase, pair, phase == dgnn::Phase::Finetune ? &x : nullptr, y, z);
  AdversarialCheck res;
  res.value_error = std::fabs(g.value - objective(phase, pair, x, y, z));

  dgnn::GanPair probe = pair;
  const VectorXd nd = oracle::central_difference(
      [&](const VectorXd& p) {
        probe.discriminator.set_parameters(p);
        return objective(phase, probe, x, y, z);
      },
      pair.discriminator.parameters());
  probe = pair;
  const VectorXd ng = oracle::central_difference(
      [&](const VectorXd& p) {
        probe.generator.set_parameters(p);
        return objective(phase, probe, x, y, z);
      },
      pair.generator.parameters());
  res.d_error = oracle::gradient_error(g.grad_d.flatten(), nd);
  res.g_error = oracle::gradient_error(g.grad_g.flatten(), ng);
  return res;
}

}  // namespace nidda::test
