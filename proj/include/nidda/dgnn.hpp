#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nidda/neural.hpp"
#include "nidda/random.hpp"

/// Adversarial refinement of synthesised intrusion records.
///
/// The discriminator is first trained to tell synthesised records Y from
/// G(z) (pre-training), then to tell the real seeds X from G(y + z)
/// (fine-tuning). Both phases alternate k_d discriminator ascent steps with
/// k_g generator descent steps on the saturating objective
///   V = mean log D(real) + mean log(1 - D(G(input))).
namespace nidda::dgnn {

inline constexpr std::array<Eigen::Index, 4> kDiscriminatorHidden{70, 50, 40, 20};
inline constexpr std::array<Eigen::Index, 3> kGeneratorHidden{40, 30, 20};

/// Affine map between raw feature space and the standardized space the
/// networks operate in. Identity for a freshly built pair.
struct FeatureScaler {
  Eigen::VectorXd offset;
  Eigen::VectorXd scale;

  static FeatureScaler identity(Eigen::Index k);
  /// Column mean/std of the stacked rows; zero-spread columns keep scale 1.
  static FeatureScaler fit(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
  Eigen::MatrixXd to_model(const Eigen::MatrixXd& raw) const;
  Eigen::MatrixXd to_raw(const Eigen::MatrixXd& model) const;
};

struct GanPair {
  nn::DenseNetd discriminator;  // K -> 70 -> 50 -> 40 -> 20 -> 1
  nn::DenseNetd generator;      // K -> 40 -> 30 -> 20 -> K
  FeatureScaler scaler;
};

GanPair build_gan(Eigen::Index k, RandomSource& rng);

struct TrainSchedule {
  std::size_t batch = 15;  // L
  std::size_t d_steps = 8;
  std::size_t g_steps = 2;
  std::size_t pretrain_iters = 3000;
  std::size_t finetune_iters = 300;
  double lr_d = 2e-4;
  double lr_g = 2e-4;
  double dropout = 0.2;
  double divergence_limit = 1e3;

  /// Throws ConfigError unless all counts are positive and batch < min(M, N).
  void validate(std::size_t m, std::size_t n) const;
};

enum class Phase { Pretrain, Finetune };
std::string_view to_string(Phase p);

struct AdversarialGradients {
  nn::Gradients<double> grad_d;  // dV/d theta_d (ascent direction)
  nn::Gradients<double> grad_g;  // dV/d theta_g (descent direction)
  double value = 0.0;            // V on this batch
};

/// Gradients of the batch objective. In pre-training `y_batch` is the real
/// side and the generator sees `z_batch`; in fine-tuning `x_batch` is the
/// real side and the generator sees y + z. All batches are in model space.
AdversarialGradients adversarial_gradients(Phase phase, const GanPair& pair, const Eigen::MatrixXd* x_batch,
                                           const Eigen::MatrixXd& y_batch, const Eigen::MatrixXd& z_batch,
                                           const nn::DropoutPlan& d_dropout = nn::DropoutPlan::inference(),
                                           const nn::DropoutPlan& g_dropout = nn::DropoutPlan::inference());

struct LossRecord {
  std::size_t iteration;
  Phase phase;
  double value;
};

enum class RealSource { Seeds, Synthesised };

/// Sees which rows feed the discriminator's real side at every D-step.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_real_batch(Phase phase, RealSource source, std::span<const std::size_t> rows) = 0;
};

struct TrainResult {
  GanPair pair;
  std::vector<LossRecord> history;  // V at the last D-step of each iteration
  std::size_t d_updates = 0;
  std::size_t g_updates = 0;
};

/// Pre-trains on (Y, Z) then fine-tunes on (X, Y, Z). X and Y are raw rows.
/// Z is a pool of N standard-normal vectors drawn up front.
TrainResult train_dgnn(RandomSource& rng, const Eigen::MatrixXd& seeds, const Eigen::MatrixXd& synthesised,
                       const TrainSchedule& schedule, TrainObserver* observer = nullptr);
/// Same, starting from an existing pair (its networks are trained in place).
TrainResult train_dgnn(RandomSource& rng, GanPair pair, const Eigen::MatrixXd& seeds,
                       const Eigen::MatrixXd& synthesised, const TrainSchedule& schedule,
                       TrainObserver* observer = nullptr);

struct AugmentedSet {
  Eigen::MatrixXd samples;  // raw feature space, clamped at 0
  std::string checkpoint;
};

/// n samples of G(y + z), y drawn uniformly with replacement from Y.
AugmentedSet generate_augmented(RandomSource& rng, const GanPair& pair, const Eigen::MatrixXd& synthesised,
                                std::ptrdiff_t n);

std::string to_checkpoint_json(const GanPair& pair);
GanPair gan_from_checkpoint_json(std::string_view text);

}  // namespace nidda::dgnn
