#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nidda/error.hpp"
#include "nidda/random.hpp"

/// Sequential dense networks with reverse-mode gradients and Adam.
///
/// Batches are row-major in meaning: one sample per row. A layer maps an
/// [L x in] batch to [L x out] as act(X W^T + 1 b^T).
namespace nidda::nn {

enum class Activation { Linear, Relu, Sigmoid, Softmax };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

/// Sigmoid outputs are clamped to [kProbClamp, 1 - kProbClamp] so that
/// log D and log(1 - D) stay finite.
inline constexpr double kProbClamp = 1e-7;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out
  Activation activation = Activation::Linear;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

template <typename Scalar>
class DenseNet {
 public:
  DenseNet() = default;

  /// Layers with widths[i] -> widths[i+1] and the given activations,
  /// Glorot-uniform weights and zero biases.
  static DenseNet build(std::span<const Eigen::Index> widths, std::span<const Activation> activations,
                        RandomSource& rng) {
    if (widths.size() < 2 || activations.size() != widths.size() - 1) {
      throw DimensionError("DenseNet::build: need one activation per layer");
    }
    DenseNet net;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const Eigen::Index in = widths[i];
      const Eigen::Index out = widths[i + 1];
      if (in < 1 || out < 1) throw DimensionError("DenseNet::build: widths must be positive");
      DenseLayer<Scalar> layer;
      const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
      layer.weight.resize(out, in);
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) {
          layer.weight(r, c) = static_cast<Scalar>((2.0 * rng.uniform() - 1.0) * bound);
        }
      }
      layer.bias = Vector<Scalar>::Zero(out);
      layer.activation = activations[i];
      net.layers_.push_back(std::move(layer));
    }
    return net;
  }

  static DenseNet from_layers(std::vector<DenseLayer<Scalar>> layers) {
    DenseNet net;
    net.layers_ = std::move(layers);
    net.validate();
    return net;
  }

  void validate() const {
    if (layers_.empty()) throw DimensionError("DenseNet: no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.bias.size() != l.out_dim()) throw DimensionError("DenseNet: bias/weight size mismatch");
      if (i > 0 && l.in_dim() != layers_[i - 1].out_dim()) {
        throw DimensionError("DenseNet: layer " + std::to_string(i) + " does not chain");
      }
      if (!l.weight.allFinite() || !l.bias.allFinite()) throw DomainError("DenseNet: non-finite parameter");
    }
  }

  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  std::vector<DenseLayer<Scalar>>& layers() { return layers_; }
  Eigen::Index input_dim() const { return layers_.front().in_dim(); }
  Eigen::Index output_dim() const { return layers_.back().out_dim(); }

  std::vector<Eigen::Index> widths() const {
    std::vector<Eigen::Index> w{input_dim()};
    for (const auto& l : layers_) w.push_back(l.out_dim());
    return w;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// All parameters, layer by layer: weights row-major, then biases.
  Vector<Scalar> parameters() const {
    Vector<Scalar> p(parameter_count());
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) p[k++] = l.weight(r, c);
      }
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) p[k++] = l.bias[r];
    }
    return p;
  }

  void set_parameters(const Vector<Scalar>& p) {
    if (p.size() != parameter_count()) throw DimensionError("DenseNet::set_parameters: size mismatch");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = p[k++];
      }
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = p[k++];
    }
    ++revision_;
  }

  /// Bumped on every parameter change; caches remember the revision they saw.
  std::uint64_t revision() const { return revision_; }
  void touch() { ++revision_; }

  bool operator==(const DenseNet& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& a = layers_[i];
      const auto& b = o.layers_[i];
      if (a.activation != b.activation || a.weight.rows() != b.weight.rows() ||
          a.weight.cols() != b.weight.cols() || a.weight != b.weight || a.bias != b.bias) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<DenseLayer<Scalar>> layers_;
  std::uint64_t revision_ = 0;
};

/// Inverted dropout on the outputs of every hidden layer.
struct DropoutPlan {
  double rate = 0.0;
  bool active = false;
  RandomSource* rng = nullptr;

  static DropoutPlan inference() { return {}; }
  static DropoutPlan training(double rate, RandomSource& rng) { return {rate, rate > 0.0, &rng}; }
};

template <typename Scalar>
struct ForwardCache {
  std::vector<Matrix<Scalar>> inputs;   // input seen by each layer
  std::vector<Matrix<Scalar>> outputs;  // activation of each layer, before dropout
  std::vector<Matrix<Scalar>> masks;    // dropout multipliers per hidden layer (empty when off)
  std::uint64_t revision = 0;
  const void* owner = nullptr;
};

template <typename Scalar>
struct ForwardResult {
  Matrix<Scalar> output;
  ForwardCache<Scalar> cache;
};

template <typename Scalar>
struct LayerGradient {
  Matrix<Scalar> weight;
  Vector<Scalar> bias;
};

template <typename Scalar>
struct Gradients {
  std::vector<LayerGradient<Scalar>> layers;
  /// Per-sample gradient with respect to the input rows (not batch-averaged).
  Matrix<Scalar> input;

  Vector<Scalar> flatten() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    Vector<Scalar> g(n);
    Eigen::Index k = 0;
    for (const auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) g[k++] = l.weight(r, c);
      }
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) g[k++] = l.bias[r];
    }
    return g;
  }

  Gradients& operator*=(Scalar s) {
    for (auto& l : layers) {
      l.weight *= s;
      l.bias *= s;
    }
    input *= s;
    return *this;
  }
};

namespace detail {

template <typename Scalar>
void activate(Matrix<Scalar>& z, Activation a) {
  switch (a) {
    case Activation::Linear:
      break;
    case Activation::Relu:
      z = z.cwiseMax(Scalar(0));
      break;
    case Activation::Sigmoid: {
      const Scalar lo = static_cast<Scalar>(kProbClamp);
      const Scalar hi = static_cast<Scalar>(1.0 - kProbClamp);
      z = z.unaryExpr([lo, hi](Scalar v) {
        const Scalar s = v >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-v))
                                        : std::exp(v) / (Scalar(1) + std::exp(v));
        return std::min(std::max(s, lo), hi);
      });
      break;
    }
    case Activation::Softmax:
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
      }
      break;
  }
}

// Upstream gradient w.r.t. activations -> gradient w.r.t. pre-activations.
template <typename Scalar>
Matrix<Scalar> activation_backward(const Matrix<Scalar>& grad, const Matrix<Scalar>& out, Activation a) {
  switch (a) {
    case Activation::Linear:
      return grad;
    case Activation::Relu:
      return (out.array() > Scalar(0)).select(grad, Scalar(0));
    case Activation::Sigmoid:
      return (grad.array() * out.array() * (Scalar(1) - out.array())).matrix();
    case Activation::Softmax: {
      const Vector<Scalar> dot = (grad.array() * out.array()).rowwise().sum();
      return (out.array() * (grad.colwise() - dot).array()).matrix();
    }
  }
  return grad;
}

}  // namespace detail

template <typename Scalar, typename Derived>
ForwardResult<Scalar> forward(const DenseNet<Scalar>& net, const Eigen::MatrixBase<Derived>& batch,
                              const DropoutPlan& dropout = DropoutPlan::inference()) {
  if (batch.cols() != net.input_dim()) {
    throw DimensionError("forward: batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                         std::to_string(net.input_dim()));
  }
  if (!batch.allFinite()) throw DomainError("forward: non-finite input");
  const bool drop = dropout.active && dropout.rate > 0.0;
  if (drop && (dropout.rng == nullptr || dropout.rate >= 1.0)) {
    throw DomainError("forward: dropout needs a random source and a rate below 1");
  }
  ForwardResult<Scalar> res;
  auto& cache = res.cache;
  cache.revision = net.revision();
  cache.owner = &net;
  const auto& layers = net.layers();
  Matrix<Scalar> a = batch;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    cache.inputs.push_back(a);
    Matrix<Scalar> z = a * l.weight.transpose();
    z.rowwise() += l.bias.transpose();
    detail::activate(z, l.activation);
    cache.outputs.push_back(z);
    const bool hidden = i + 1 < layers.size();
    if (hidden && drop) {
      const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - dropout.rate));
      Matrix<Scalar> mask(z.rows(), z.cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c) {
        for (Eigen::Index r = 0; r < mask.rows(); ++r) {
          mask(r, c) = dropout.rng->uniform() < dropout.rate ? Scalar(0) : keep_scale;
        }
      }
      a = z.cwiseProduct(mask);
      cache.masks.push_back(std::move(mask));
    } else {
      a = std::move(z);
      if (hidden) cache.masks.emplace_back();
    }
  }
  res.output = std::move(a);
  return res;
}

/// What the rows of the upstream gradient differentiate against.
enum class Upstream {
  Output,        // d loss / d activation of the last layer
  PreActivation  // d loss / d pre-activation of the last layer (fused softmax cross-entropy)
};

/// Parameter gradients of (1/L) sum_l loss_l given d loss_l / d output_l
/// in row l of `output_gradient`.
template <typename Scalar, typename Derived>
Gradients<Scalar> backward(const DenseNet<Scalar>& net, const ForwardCache<Scalar>& cache,
                           const Eigen::MatrixBase<Derived>& output_gradient, Upstream upstream = Upstream::Output) {
  const auto& layers = net.layers();
  if (cache.owner != &net || cache.revision != net.revision() || cache.inputs.size() != layers.size()) {
    throw DimensionError("backward: cache does not belong to the current network state");
  }
  const Eigen::Index batch = cache.inputs.front().rows();
  if (output_gradient.rows() != batch || output_gradient.cols() != net.output_dim()) {
    throw DimensionError("backward: output gradient shape mismatch");
  }
  const Scalar inv_l = batch > 0 ? Scalar(1) / static_cast<Scalar>(batch) : Scalar(0);
  Gradients<Scalar> g;
  g.layers.resize(layers.size());
  Matrix<Scalar> grad = output_gradient;
  for (std::size_t ii = layers.size(); ii-- > 0;) {
    const auto& l = layers[ii];
    const bool fused = upstream == Upstream::PreActivation && ii + 1 == layers.size();
    const Matrix<Scalar> dz = fused ? grad : detail::activation_backward(grad, cache.outputs[ii], l.activation);
    g.layers[ii].weight = (dz.transpose() * cache.inputs[ii]) * inv_l;
    g.layers[ii].bias = dz.colwise().sum().transpose() * inv_l;
    grad = dz * l.weight;
    if (ii > 0 && cache.masks[ii - 1].size() != 0) grad = grad.cwiseProduct(cache.masks[ii - 1]);
  }
  g.input = std::move(grad);
  return g;
}

template <typename Scalar>
struct AdamState {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<LayerGradient<Scalar>> first;
  std::vector<LayerGradient<Scalar>> second;

  static AdamState for_net(const DenseNet<Scalar>& net, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& l : net.layers()) {
      LayerGradient<Scalar> z{Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                              Vector<Scalar>::Zero(l.bias.size())};
      s.first.push_back(z);
      s.second.push_back(z);
    }
    return s;
  }
};

/// One bias-corrected Adam descent step along `grads`.
template <typename Scalar>
void adam_update(DenseNet<Scalar>& net, const Gradients<Scalar>& grads, AdamState<Scalar>& state) {
  auto& layers = net.layers();
  if (grads.layers.size() != layers.size() || state.first.size() != layers.size()) {
    throw DimensionError("adam_update: layer count mismatch");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& g = grads.layers[i];
    if (g.weight.rows() != layers[i].weight.rows() || g.weight.cols() != layers[i].weight.cols() ||
        g.bias.size() != layers[i].bias.size()) {
      throw DimensionError("adam_update: gradient shape mismatch in layer " + std::to_string(i));
    }
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw DivergenceError("adam_update: non-finite gradient in layer " + std::to_string(i));
    }
  }
  ++state.step;
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, static_cast<double>(state.step)));
  const Scalar lr = static_cast<Scalar>(state.lr);
  const Scalar eps = static_cast<Scalar>(state.eps);
  auto step = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    step(layers[i].weight, grads.layers[i].weight, state.first[i].weight, state.second[i].weight);
    step(layers[i].bias, grads.layers[i].bias, state.first[i].bias, state.second[i].bias);
  }
  net.touch();
}

using DenseNetd = DenseNet<double>;
using Matrixd = Matrix<double>;
using Vectord = Vector<double>;

/// JSON checkpoint: {"format":"nidda-densenet","version":1,"layers":[{"in","out",
/// "activation","weights" (row-major),"bias"}]}.
std::string to_checkpoint_json(const DenseNetd& net);
DenseNetd from_checkpoint_json(std::string_view text);

}  // namespace nidda::nn
