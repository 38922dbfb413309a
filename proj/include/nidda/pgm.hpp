#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>

#include "nidda/random.hpp"

/// Poisson-Gamma model of per-feature event intensities.
///
/// Each feature is an independent Poisson count whose intensity carries a
/// Gamma(shape, rate) prior, moment-matched to the seed records. The
/// posterior after M records is Gamma(shape + column sum, rate + M), and the
/// Gibbs generator alternates intensity draws from it with Poisson draws.
namespace nidda::pgm {

inline constexpr double kVarianceFloor = 1e-6;

/// Per-feature Gamma prior. Zero-variance columns are pinned: no Gamma is
/// fitted and the generator reproduces the constant.
struct GammaPrior {
  Eigen::VectorXd shape;
  Eigen::VectorXd rate;
  Eigen::ArrayX<bool> pinned;
  Eigen::VectorXd pinned_value;

  Eigen::Index dim() const { return shape.size(); }
};

struct GammaPosterior {
  Eigen::VectorXd shape;
  Eigen::VectorXd rate;
  std::size_t m = 0;
  Eigen::ArrayX<bool> pinned;
  Eigen::VectorXd pinned_value;

  Eigen::Index dim() const { return shape.size(); }
  /// Posterior mean of the intensity; also the predictive mean of a draw.
  Eigen::VectorXd mean() const;
  Eigen::VectorXd variance() const;
};

/// Synthesised records (non-negative integers except pinned columns, which
/// repeat their constant) with provenance.
struct SynthesisedSet {
  Eigen::MatrixXd y;
  std::uint64_t seed_hash = 0;
  std::size_t burn_in = 0;
  std::size_t count = 0;
};

GammaPrior estimate_prior(const Eigen::MatrixXd& seeds);
GammaPosterior compute_posterior(const Eigen::MatrixXd& evidence, const GammaPrior& prior);

/// Runs burn_in + count Gibbs iterations on the posterior built from
/// `seeds` and keeps the Poisson draws of the last `count`.
SynthesisedSet gibbs_generate(RandomSource& rng, const Eigen::MatrixXd& seeds, std::size_t count,
                              std::size_t burn_in);
SynthesisedSet gibbs_generate(RandomSource& rng, const GammaPosterior& posterior, std::size_t count,
                              std::size_t burn_in);

/// Content hash of a seed matrix (dimensions and raw doubles).
std::uint64_t hash_matrix(const Eigen::MatrixXd& m);

}  // namespace nidda::pgm
