#include "nidda/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "nidda/error.hpp"

namespace nidda::clf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::VectorXd LinearModel::scores(const MatrixXd& x) const {
  if (x.rows() > 0 && x.cols() != weights.size()) throw DimensionError("LinearModel: feature dimension mismatch");
  if (x.rows() == 0) return VectorXd(0);
  return (x * weights).array() + bias;
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch == 0) throw ConfigError("train config: epochs and batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning rate must be positive");
  if (!(regularization >= 0.0)) throw ConfigError("train config: regularization must be non-negative");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train config: validation fraction must lie in [0, 1)");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train config: dropout must lie in [0, 1)");
}

TrainConfig TrainConfig::dnn_defaults() {
  TrainConfig c;
  c.epochs = 60;
  c.batch = 32;
  c.learning_rate = 1e-3;
  c.regularization = 0.0;
  return c;
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, RandomSource& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

// Maps labels to +-1, validating the label set for the model kind.
std::vector<double> signed_targets(std::span<const int> y, LinearKind kind) {
  const int neg = kind == LinearKind::Logistic ? 0 : -1;
  std::vector<double> t(y.size());
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1) {
      t[i] = 1.0;
      has_pos = true;
    } else if (y[i] == neg) {
      t[i] = -1.0;
      has_neg = true;
    } else {
      throw DomainError("linear classifier: label " + std::to_string(y[i]) + " outside {" + std::to_string(neg) +
                        ", 1}");
    }
  }
  if (!has_pos || !has_neg) throw DomainError("linear classifier: training data must contain both classes");
  return t;
}

double logistic_loss(double margin) {
  // log(1 + exp(-margin)) without overflow
  return margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

LinearModel train_linear(const MatrixXd& x, std::span<const int> y, const TrainConfig& cfg, RandomSource& rng,
                         LinearKind kind, std::vector<double>* epoch_loss) {
  cfg.validate();
  if (x.rows() != static_cast<Eigen::Index>(y.size())) throw DimensionError("linear classifier: X/y length mismatch");
  const auto target = signed_targets(y, kind);
  const double lambda = cfg.regularization;
  const double eta0 = cfg.learning_rate;
  LinearModel m;
  m.kind = kind;
  m.weights = VectorXd::Zero(x.cols());
  // Each epoch reports (and the last epoch returns) the average iterate of that epoch.
  LinearModel avg = m;
  const double n = static_cast<double>(y.size());
  double t = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    VectorXd w_sum = VectorXd::Zero(x.cols());
    double b_sum = 0.0;
    for (const std::size_t i : shuffled(y.size(), rng)) {
      t += 1.0;
      // eta * lambda stays below 1 so the shrink factor is positive.
      const double eta = eta0 / (1.0 + lambda * eta0 * t);
      // The bias is unregularized, so it gets its own slowly decaying rate.
      const double eta_b = eta0 / std::sqrt(1.0 + t / n);
      const auto row = x.row(static_cast<Eigen::Index>(i));
      const double s = row.dot(m.weights) + m.bias;
      const double yi = target[i];
      double g;  // d loss / d score
      if (kind == LinearKind::Logistic) {
        const double margin = yi * s;
        g = -yi / (1.0 + std::exp(margin));
      } else {
        g = yi * s < 1.0 ? -yi : 0.0;
      }
      if (lambda > 0.0) m.weights *= 1.0 - eta * lambda;
      if (g != 0.0) {
        m.weights -= eta * g * row.transpose();
        m.bias -= eta_b * g;
      }
      w_sum += m.weights;
      b_sum += m.bias;
    }
    avg.weights = w_sum / n;
    avg.bias = b_sum / n;
    if (epoch_loss) epoch_loss->push_back(data_loss(avg, x, y));
  }
  if (cfg.epochs > 0) m = avg;
  if (!m.weights.allFinite() || !std::isfinite(m.bias)) throw DivergenceError("linear classifier: training diverged");
  return m;
}

}  // namespace

double data_loss(const LinearModel& m, const MatrixXd& x, std::span<const int> y) {
  if (y.empty()) return 0.0;
  const VectorXd s = m.scores(x);
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double yi = y[i] == 1 ? 1.0 : -1.0;
    const double margin = yi * s[static_cast<Eigen::Index>(i)];
    total += m.kind == LinearKind::Logistic ? logistic_loss(margin) : std::max(0.0, 1.0 - margin);
  }
  return total / static_cast<double>(y.size());
}

LinearModel train_logreg(const MatrixXd& x, std::span<const int> y, const TrainConfig& cfg, RandomSource& rng,
                         std::vector<double>* epoch_loss) {
  return train_linear(x, y, cfg, rng, LinearKind::Logistic, epoch_loss);
}

LinearModel train_svm(const MatrixXd& x, std::span<const int> y, const TrainConfig& cfg, RandomSource& rng) {
  return train_linear(x, y, cfg, rng, LinearKind::Hinge, nullptr);
}

namespace {

void check_classes(std::span<const int> y, std::size_t num_classes) {
  if (num_classes < 2) throw DomainError("classifier: need at least two classes");
  std::vector<std::size_t> count(num_classes, 0);
  for (int v : y) {
    if (v < 0 || static_cast<std::size_t>(v) >= num_classes) {
      throw DomainError("classifier: label " + std::to_string(v) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    ++count[static_cast<std::size_t>(v)];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (count[c] == 0) throw DomainError("classifier: class " + std::to_string(c) + " absent from training data");
  }
}

}  // namespace

OneVsRest train_one_vs_rest(const MatrixXd& x, std::span<const int> y, std::size_t num_classes, LinearKind kind,
                            const TrainConfig& cfg, RandomSource& rng) {
  check_classes(y, num_classes);
  OneVsRest ovr;
  const int neg = kind == LinearKind::Logistic ? 0 : -1;
  std::vector<int> binary(y.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < y.size(); ++i) binary[i] = static_cast<std::size_t>(y[i]) == c ? 1 : neg;
    ovr.models.push_back(train_linear(x, binary, cfg, rng, kind, nullptr));
  }
  return ovr;
}

namespace {

MatrixXd gather_rows(const MatrixXd& x, std::span<const std::size_t> rows) {
  MatrixXd b(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) b.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return b;
}

double cross_entropy(const nn::DenseNetd& net, const MatrixXd& x, std::span<const int> y) {
  const auto fw = nn::forward(net, x);
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    total -= std::log(std::max(fw.output(static_cast<Eigen::Index>(i), y[i]), 1e-300));
  }
  return total / static_cast<double>(std::max<std::size_t>(y.size(), 1));
}

}  // namespace

DnnClassifier train_dnn_classifier(const MatrixXd& x, std::span<const int> y, std::size_t num_classes,
                                   const TrainConfig& cfg, RandomSource& rng) {
  cfg.validate();
  if (x.rows() != static_cast<Eigen::Index>(y.size())) throw DimensionError("dnn classifier: X/y length mismatch");
  check_classes(y, num_classes);

  // Hold out a validation split when it leaves every class in training.
  const auto order = shuffled(y.size(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(y.size())));
  std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  {
    std::vector<bool> seen(num_classes, false);
    for (auto r : train_rows) seen[static_cast<std::size_t>(y[r])] = true;
    if (n_val == 0 || std::find(seen.begin(), seen.end(), false) != seen.end()) {
      train_rows = order;
      val_rows = order;
    }
  }
  const MatrixXd xv = gather_rows(x, val_rows);
  std::vector<int> yv;
  for (auto r : val_rows) yv.push_back(y[r]);

  std::vector<Eigen::Index> widths{x.cols()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(static_cast<Eigen::Index>(num_classes));
  std::vector<nn::Activation> acts(cfg.hidden.size(), nn::Activation::Relu);
  acts.push_back(nn::Activation::Softmax);
  RandomSource init = rng.split();
  RandomSource drop_rng = rng.split();
  DnnClassifier best{nn::DenseNetd::build(widths, acts, init)};
  nn::DenseNetd net = best.net;
  auto adam = nn::AdamState<double>::for_net(net, cfg.learning_rate);
  const auto drop = nn::DropoutPlan::training(cfg.dropout, drop_rng);

  double best_loss = cross_entropy(net, xv, yv);
  std::size_t stale = 0;
  std::size_t halvings = 0;
  constexpr std::size_t kMaxHalvings = 4;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> perm = train_rows;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t start = 0; start < perm.size(); start += cfg.batch) {
      const std::size_t end = std::min(perm.size(), start + cfg.batch);
      const std::span<const std::size_t> rows(perm.data() + start, end - start);
      const MatrixXd xb = gather_rows(x, rows);
      const auto fw = nn::forward(net, xb, drop);
      MatrixXd dz = fw.output;  // softmax - onehot
      for (std::size_t i = 0; i < rows.size(); ++i) dz(static_cast<Eigen::Index>(i), y[rows[i]]) -= 1.0;
      auto g = nn::backward(net, fw.cache, dz, nn::Upstream::PreActivation);
      if (cfg.regularization > 0.0) {
        for (std::size_t li = 0; li < g.layers.size(); ++li) {
          g.layers[li].weight += cfg.regularization * net.layers()[li].weight;
        }
      }
      nn::adam_update(net, g, adam);
    }
    const double loss = cross_entropy(net, xv, yv);
    if (loss < best_loss - 1e-9) {
      best_loss = loss;
      best.net = net;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      if (++halvings > kMaxHalvings) break;
      adam.lr *= 0.5;
      stale = 0;
    }
  }
  return best;
}

Prediction predict(const LinearModel& m, const MatrixXd& x) {
  Prediction p;
  p.scores = m.scores(x);
  p.labels.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    p.labels[static_cast<std::size_t>(i)] = p.scores(i, 0) > 0.0 ? m.positive_label() : m.negative_label();
  }
  return p;
}

namespace {

std::vector<int> argmax_rows(const MatrixXd& s) {
  std::vector<int> labels(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    Eigen::Index best;
    s.row(i).maxCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace

Prediction predict(const OneVsRest& m, const MatrixXd& x) {
  if (m.models.empty()) throw DomainError("predict: empty one-vs-rest model");
  Prediction p;
  p.scores.resize(x.rows(), static_cast<Eigen::Index>(m.models.size()));
  for (std::size_t c = 0; c < m.models.size(); ++c) p.scores.col(static_cast<Eigen::Index>(c)) = m.models[c].scores(x);
  p.labels = argmax_rows(p.scores);
  return p;
}

Prediction predict(const DnnClassifier& m, const MatrixXd& x) {
  Prediction p;
  if (x.rows() == 0) {
    p.scores.resize(0, m.net.output_dim());
    return p;
  }
  p.scores = nn::forward(m.net, x).output;
  p.labels = argmax_rows(p.scores);
  return p;
}

std::string to_json(const LinearModel& m) {
  nlohmann::ordered_json j;
  j["format"] = "nidda-linear";
  j["version"] = 1;
  j["kind"] = m.kind == LinearKind::Logistic ? "logistic" : "svm-hinge";
  j["weights"] = std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size());
  j["bias"] = m.bias;
  return j.dump();
}

namespace {

LinearModel linear_from(const nlohmann::json& j) {
  if (j.value("format", "") != "nidda-linear" || j.value("version", 0) != 1) {
    throw ParseError("linear model: unsupported format or version", 0);
  }
  LinearModel m;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "logistic") m.kind = LinearKind::Logistic;
  else if (kind == "svm-hinge") m.kind = LinearKind::Hinge;
  else throw ParseError("linear model: unknown kind '" + kind + "'", 0);
  const auto w = j.at("weights").get<std::vector<double>>();
  m.weights = Eigen::Map<const VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  m.bias = j.at("bias").get<double>();
  return m;
}

nlohmann::json parse_json(std::string_view text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what(), 0);
  }
}

}  // namespace

LinearModel linear_from_json(std::string_view text) { return linear_from(parse_json(text, "linear model")); }

std::string to_json(const OneVsRest& m) {
  nlohmann::ordered_json j;
  j["format"] = "nidda-ovr";
  j["version"] = 1;
  auto& arr = j["models"] = nlohmann::ordered_json::array();
  for (const auto& lm : m.models) arr.push_back(nlohmann::ordered_json::parse(to_json(lm)));
  return j.dump();
}

OneVsRest ovr_from_json(std::string_view text) {
  const auto j = parse_json(text, "one-vs-rest model");
  if (j.value("format", "") != "nidda-ovr" || j.value("version", 0) != 1) {
    throw ParseError("one-vs-rest model: unsupported format or version", 0);
  }
  OneVsRest m;
  for (const auto& mj : j.at("models")) m.models.push_back(linear_from(mj));
  return m;
}

}  // namespace nidda::clf
