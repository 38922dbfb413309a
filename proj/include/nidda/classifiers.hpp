#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nidda/neural.hpp"
#include "nidda/random.hpp"

namespace nidda::clf {

enum class LinearKind { Logistic, Hinge };

/// Linear scorer w.x + b. Logistic models label {0, 1}; hinge models label
/// {-1, +1}. Either way the positive class wins when the score is > 0.
struct LinearModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  LinearKind kind = LinearKind::Logistic;

  Eigen::VectorXd scores(const Eigen::MatrixXd& x) const;
  int positive_label() const { return 1; }
  int negative_label() const { return kind == LinearKind::Logistic ? 0 : -1; }
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 32;          // DNN minibatch
  double learning_rate = 0.1;      // initial step (linear) or Adam rate (DNN)
  double regularization = 1e-4;    // L2 strength
  std::size_t patience = 5;        // DNN: epochs without validation gain before halving the rate
  double validation_fraction = 0.1;
  double dropout = 0.2;
  std::vector<Eigen::Index> hidden{64, 32, 16};

  void validate() const;
  static TrainConfig dnn_defaults();
};

/// L2-regularized log-loss by stochastic gradient descent. The returned
/// model is the average iterate of the final epoch; `epoch_loss` receives
/// the data loss of each epoch's average.
LinearModel train_logreg(const Eigen::MatrixXd& x, std::span<const int> y, const TrainConfig& cfg,
                         RandomSource& rng, std::vector<double>* epoch_loss = nullptr);
/// L2-regularized hinge loss by stochastic subgradient descent.
LinearModel train_svm(const Eigen::MatrixXd& x, std::span<const int> y, const TrainConfig& cfg, RandomSource& rng);

/// Mean log-loss (logistic) or hinge loss of the model on (x, y), without the penalty.
double data_loss(const LinearModel& m, const Eigen::MatrixXd& x, std::span<const int> y);

/// One binary model per class, class c against the rest.
struct OneVsRest {
  std::vector<LinearModel> models;
  std::size_t num_classes() const { return models.size(); }
};

OneVsRest train_one_vs_rest(const Eigen::MatrixXd& x, std::span<const int> y, std::size_t num_classes,
                            LinearKind kind, const TrainConfig& cfg, RandomSource& rng);

struct DnnClassifier {
  nn::DenseNetd net;  // input -> hidden... -> C softmax
  std::size_t num_classes() const { return static_cast<std::size_t>(net.output_dim()); }
};

/// Softmax cross-entropy with Adam, dropout on hidden layers, learning rate
/// halved on validation plateaus; returns the best-validation weights.
DnnClassifier train_dnn_classifier(const Eigen::MatrixXd& x, std::span<const int> y, std::size_t num_classes,
                                   const TrainConfig& cfg, RandomSource& rng);

struct Prediction {
  std::vector<int> labels;
  Eigen::MatrixXd scores;  // one column for linear models, one per class otherwise
};

Prediction predict(const LinearModel& m, const Eigen::MatrixXd& x);
Prediction predict(const OneVsRest& m, const Eigen::MatrixXd& x);
Prediction predict(const DnnClassifier& m, const Eigen::MatrixXd& x);

std::string to_json(const LinearModel& m);
LinearModel linear_from_json(std::string_view text);
std::string to_json(const OneVsRest& m);
OneVsRest ovr_from_json(std::string_view text);

}  // namespace nidda::clf
