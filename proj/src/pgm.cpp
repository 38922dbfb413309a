#include "nidda/pgm.hpp"

#include <cmath>
#include <cstring>
#include <string_view>

#include "nidda/error.hpp"

namespace nidda::pgm {

Eigen::VectorXd GammaPosterior::mean() const {
  Eigen::VectorXd m = (shape.array() / rate.array()).matrix();
  for (Eigen::Index i = 0; i < dim(); ++i) {
    if (pinned[i]) m[i] = pinned_value[i];
  }
  return m;
}

Eigen::VectorXd GammaPosterior::variance() const {
  Eigen::VectorXd v = (shape.array() / rate.array().square()).matrix();
  for (Eigen::Index i = 0; i < dim(); ++i) {
    if (pinned[i]) v[i] = 0.0;
  }
  return v;
}

GammaPrior estimate_prior(const Eigen::MatrixXd& seeds) {
  if (seeds.rows() == 0) throw DomainError("estimate_prior: no seed records");
  if (!seeds.allFinite() || (seeds.array() < 0.0).any()) {
    throw DomainError("estimate_prior: seed features must be finite and non-negative");
  }
  const Eigen::Index k = seeds.cols();
  GammaPrior p;
  p.shape = Eigen::VectorXd::Ones(k);
  p.rate = Eigen::VectorXd::Ones(k);
  p.pinned = Eigen::ArrayX<bool>::Constant(k, false);
  p.pinned_value = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto col = seeds.col(i).array();
    const double mean = col.mean();
    const double var = (col - mean).square().mean();
    if (var == 0.0) {
      p.pinned[i] = true;
      p.pinned_value[i] = mean;
      continue;
    }
    const double v = std::max(var, kVarianceFloor);
    p.shape[i] = mean * mean / v;
    p.rate[i] = mean / v;
  }
  return p;
}

GammaPosterior compute_posterior(const Eigen::MatrixXd& evidence, const GammaPrior& prior) {
  const Eigen::Index k = prior.dim();
  if (evidence.rows() > 0 && evidence.cols() != k) {
    throw DimensionError("compute_posterior: evidence has " + std::to_string(evidence.cols()) +
                         " features, prior has " + std::to_string(k));
  }
  GammaPosterior post;
  post.m = static_cast<std::size_t>(evidence.rows());
  post.shape = prior.shape;
  post.rate = prior.rate;
  if (evidence.rows() > 0) {
    post.shape += evidence.colwise().sum().transpose();
    post.rate.array() += static_cast<double>(evidence.rows());
  }
  post.pinned = prior.pinned;
  post.pinned_value = prior.pinned_value;
  return post;
}

SynthesisedSet gibbs_generate(RandomSource& rng, const GammaPosterior& posterior, std::size_t count,
                              std::size_t burn_in) {
  const Eigen::Index k = posterior.dim();
  SynthesisedSet out;
  out.burn_in = burn_in;
  out.count = count;
  out.y.resize(static_cast<Eigen::Index>(count), k);
  Eigen::VectorXd lambda(k);
  for (std::size_t t = 1; t <= count + burn_in; ++t) {
    for (Eigen::Index i = 0; i < k; ++i) {
      lambda[i] = posterior.pinned[i] ? posterior.pinned_value[i]
                                      : sample_gamma(rng, posterior.shape[i], posterior.rate[i]);
    }
    if (t <= burn_in) continue;
    const auto row = static_cast<Eigen::Index>(t - burn_in - 1);
    for (Eigen::Index i = 0; i < k; ++i) {
      out.y(row, i) = posterior.pinned[i] ? lambda[i] : static_cast<double>(sample_poisson(rng, lambda[i]));
    }
  }
  return out;
}

SynthesisedSet gibbs_generate(RandomSource& rng, const Eigen::MatrixXd& seeds, std::size_t count,
                              std::size_t burn_in) {
  const GammaPosterior post = compute_posterior(seeds, estimate_prior(seeds));
  SynthesisedSet out = gibbs_generate(rng, post, count, burn_in);
  out.seed_hash = hash_matrix(seeds);
  return out;
}

std::uint64_t hash_matrix(const Eigen::MatrixXd& m) {
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  std::uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(dims), sizeof dims));
  // Row-major traversal so the hash matches the CSV row order.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
    }
  }
  return h;
}

}  // namespace nidda::pgm
