#include "nidda/dgnn.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "nidda/error.hpp"

namespace nidda::dgnn {

using nn::Activation;
using Eigen::MatrixXd;
using Eigen::VectorXd;

FeatureScaler FeatureScaler::identity(Eigen::Index k) {
  return {VectorXd::Zero(k), VectorXd::Ones(k)};
}

FeatureScaler FeatureScaler::fit(const MatrixXd& a, const MatrixXd& b) {
  const Eigen::Index k = a.rows() > 0 ? a.cols() : b.cols();
  const double n = static_cast<double>(a.rows() + b.rows());
  if (n == 0) return identity(k);
  VectorXd sum = VectorXd::Zero(k);
  if (a.rows() > 0) sum += a.colwise().sum().transpose();
  if (b.rows() > 0) sum += b.colwise().sum().transpose();
  const VectorXd mean = sum / n;
  VectorXd sq = VectorXd::Zero(k);
  if (a.rows() > 0) sq += (a.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  if (b.rows() > 0) sq += (b.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  VectorXd sd = (sq / n).array().sqrt().matrix();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(sd[i] > 1e-8)) sd[i] = 1.0;
  }
  return {mean, sd};
}

MatrixXd FeatureScaler::to_model(const MatrixXd& raw) const {
  return ((raw.rowwise() - offset.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

MatrixXd FeatureScaler::to_raw(const MatrixXd& model) const {
  return ((model.array().rowwise() * scale.transpose().array()).rowwise() + offset.transpose().array()).matrix();
}

GanPair build_gan(Eigen::Index k, RandomSource& rng) {
  if (k < 1) throw DimensionError("build_gan: feature dimension must be positive");
  const std::array<Eigen::Index, 6> dw{k, kDiscriminatorHidden[0], kDiscriminatorHidden[1],
                                       kDiscriminatorHidden[2], kDiscriminatorHidden[3], 1};
  const std::array<Activation, 5> da{Activation::Relu, Activation::Relu, Activation::Relu, Activation::Relu,
                                     Activation::Sigmoid};
  const std::array<Eigen::Index, 5> gw{k, kGeneratorHidden[0], kGeneratorHidden[1], kGeneratorHidden[2], k};
  const std::array<Activation, 4> ga{Activation::Relu, Activation::Relu, Activation::Sigmoid, Activation::Linear};
  GanPair p;
  p.discriminator = nn::DenseNetd::build(dw, da, rng);
  p.generator = nn::DenseNetd::build(gw, ga, rng);
  p.scaler = FeatureScaler::identity(k);
  return p;
}

void TrainSchedule::validate(std::size_t m, std::size_t n) const {
  if (batch == 0 || d_steps == 0 || g_steps == 0) {
    throw ConfigError("train schedule: batch size, d_steps and g_steps must be positive");
  }
  if (!(lr_d > 0.0) || !(lr_g > 0.0)) throw ConfigError("train schedule: learning rates must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train schedule: dropout must lie in [0, 1)");
  if (!(divergence_limit > 0.0)) throw ConfigError("train schedule: divergence_limit must be positive");
  if (batch >= std::min(m, n)) {
    throw ConfigError("train schedule: batch size " + std::to_string(batch) + " must be below min(M, N) = " +
                      std::to_string(std::min(m, n)));
  }
}

std::string_view to_string(Phase p) { return p == Phase::Pretrain ? "pretrain" : "finetune"; }

namespace {

struct Wanted {
  bool d = true;
  bool g = true;
};

void accumulate(nn::Gradients<double>& into, const nn::Gradients<double>& g) {
  for (std::size_t i = 0; i < into.layers.size(); ++i) {
    into.layers[i].weight += g.layers[i].weight;
    into.layers[i].bias += g.layers[i].bias;
  }
}

AdversarialGradients gradients_impl(Phase phase, const GanPair& pair, const MatrixXd* x_batch,
                                    const MatrixXd& y_batch, const MatrixXd& z_batch,
                                    const nn::DropoutPlan& d_dropout, const nn::DropoutPlan& g_dropout,
                                    Wanted wanted) {
  const Eigen::Index l = y_batch.rows();
  if (z_batch.rows() != l || z_batch.cols() != y_batch.cols()) {
    throw DimensionError("adversarial_gradients: y and z batches must have the same shape");
  }
  if (phase == Phase::Finetune) {
    if (x_batch == nullptr) throw DimensionError("adversarial_gradients: fine-tuning needs a batch of real seeds");
    if (x_batch->rows() != l || x_batch->cols() != y_batch.cols()) {
      throw DimensionError("adversarial_gradients: x batch must match the y batch shape");
    }
  }
  if (l == 0) throw DimensionError("adversarial_gradients: empty batch");
  const MatrixXd& real = phase == Phase::Pretrain ? y_batch : *x_batch;
  const MatrixXd g_in = phase == Phase::Pretrain ? z_batch : MatrixXd(y_batch + z_batch);

  const auto gen = nn::forward(pair.generator, g_in, g_dropout);
  const auto fake = nn::forward(pair.discriminator, gen.output, d_dropout);
  const MatrixXd& df = fake.output;
  AdversarialGradients out;
  // d log(1 - D) / dD
  const MatrixXd up_fake = (-1.0 / (1.0 - df.array())).matrix();
  const auto back_fake = nn::backward(pair.discriminator, fake.cache, up_fake);
  double value = (1.0 - df.array()).log().mean();
  const auto real_fw = nn::forward(pair.discriminator, real, d_dropout);
  const MatrixXd& dr = real_fw.output;
  value += dr.array().log().mean();
  if (wanted.d) {
    const MatrixXd up_real = dr.array().inverse().matrix();
    out.grad_d = nn::backward(pair.discriminator, real_fw.cache, up_real);
    accumulate(out.grad_d, back_fake);
    out.grad_d.input.resize(0, 0);
  }
  if (wanted.g) {
    out.grad_g = nn::backward(pair.generator, gen.cache, back_fake.input);
  }
  out.value = value;
  return out;
}

MatrixXd gather(const MatrixXd& pool, std::span<const std::size_t> rows) {
  MatrixXd b(static_cast<Eigen::Index>(rows.size()), pool.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    b.row(static_cast<Eigen::Index>(i)) = pool.row(static_cast<Eigen::Index>(rows[i]));
  }
  return b;
}

std::vector<std::size_t> pick(RandomSource& rng, std::size_t pool, std::size_t count) {
  std::vector<std::size_t> rows(count);
  for (auto& r : rows) r = static_cast<std::size_t>(rng.below(pool));
  return rows;
}

nn::Gradients<double> negated(nn::Gradients<double> g) {
  g *= -1.0;
  return g;
}

}  // namespace

AdversarialGradients adversarial_gradients(Phase phase, const GanPair& pair, const MatrixXd* x_batch,
                                           const MatrixXd& y_batch, const MatrixXd& z_batch,
                                           const nn::DropoutPlan& d_dropout, const nn::DropoutPlan& g_dropout) {
  return gradients_impl(phase, pair, x_batch, y_batch, z_batch, d_dropout, g_dropout, Wanted{});
}

TrainResult train_dgnn(RandomSource& rng, const MatrixXd& seeds, const MatrixXd& synthesised,
                       const TrainSchedule& schedule, TrainObserver* observer) {
  const Eigen::Index k = synthesised.cols();
  RandomSource init = rng.split();
  return train_dgnn(rng, build_gan(k, init), seeds, synthesised, schedule, observer);
}

TrainResult train_dgnn(RandomSource& rng, GanPair pair, const MatrixXd& seeds, const MatrixXd& synthesised,
                       const TrainSchedule& schedule, TrainObserver* observer) {
  const auto m = static_cast<std::size_t>(seeds.rows());
  const auto n = static_cast<std::size_t>(synthesised.rows());
  const Eigen::Index k = pair.generator.output_dim();
  if (synthesised.cols() != k || (m > 0 && seeds.cols() != k)) {
    throw DimensionError("train_dgnn: feature dimension does not match the networks");
  }
  if (!seeds.allFinite() || !synthesised.allFinite()) throw DomainError("train_dgnn: non-finite training data");
  TrainResult res;
  const std::size_t total = schedule.pretrain_iters + schedule.finetune_iters;
  if (total == 0) {
    res.pair = std::move(pair);
    return res;
  }
  schedule.validate(schedule.finetune_iters > 0 ? m : n, n);

  pair.scaler = FeatureScaler::fit(seeds, synthesised);
  const MatrixXd x = m > 0 ? pair.scaler.to_model(seeds) : MatrixXd(0, k);
  const MatrixXd y = pair.scaler.to_model(synthesised);

  RandomSource sampling = rng.split();
  RandomSource dropout_rng = rng.split();
  MatrixXd z_pool(static_cast<Eigen::Index>(n), k);
  for (Eigen::Index r = 0; r < z_pool.rows(); ++r) {
    for (Eigen::Index c = 0; c < k; ++c) z_pool(r, c) = sample_gaussian(sampling, 0.0, 1.0);
  }

  auto d_state = nn::AdamState<double>::for_net(pair.discriminator, schedule.lr_d);
  auto g_state = nn::AdamState<double>::for_net(pair.generator, schedule.lr_g);
  const auto drop = nn::DropoutPlan::training(schedule.dropout, dropout_rng);
  const std::size_t l = schedule.batch;

  auto fail = [&](std::size_t t, Phase phase, const std::string& why) {
    std::ostringstream msg;
    msg << "adversarial training diverged at iteration " << t << " (" << to_string(phase) << "): " << why
        << "; recent V:";
    const std::size_t from = res.history.size() > 10 ? res.history.size() - 10 : 0;
    for (std::size_t i = from; i < res.history.size(); ++i) msg << ' ' << res.history[i].value;
    throw DivergenceError(msg.str());
  };
  auto check = [&](std::size_t t, Phase phase, double v) {
    if (!std::isfinite(v) || std::fabs(v) > schedule.divergence_limit) {
      res.history.push_back({t, phase, v});
      fail(t, phase, "objective " + std::to_string(v));
    }
  };

  for (std::size_t t = 1; t <= total; ++t) {
    const Phase phase = t <= schedule.pretrain_iters ? Phase::Pretrain : Phase::Finetune;
    double last_v = 0.0;
    try {
      for (std::size_t s = 0; s < schedule.d_steps; ++s) {
        std::vector<std::size_t> xr;
        if (phase == Phase::Finetune) xr = pick(sampling, m, l);
        const auto yr = pick(sampling, n, l);
        const auto zr = pick(sampling, n, l);
        if (observer) {
          if (phase == Phase::Pretrain) observer->on_real_batch(phase, RealSource::Synthesised, yr);
          else observer->on_real_batch(phase, RealSource::Seeds, xr);
        }
        const MatrixXd xb = phase == Phase::Finetune ? gather(x, xr) : MatrixXd();
        const auto g = gradients_impl(phase, pair, phase == Phase::Finetune ? &xb : nullptr, gather(y, yr),
                                      gather(z_pool, zr), drop, drop, Wanted{true, false});
        check(t, phase, g.value);
        last_v = g.value;
        nn::adam_update(pair.discriminator, negated(g.grad_d), d_state);
        ++res.d_updates;
      }
      for (std::size_t s = 0; s < schedule.g_steps; ++s) {
        std::vector<std::size_t> xr;
        if (phase == Phase::Finetune) xr = pick(sampling, m, l);
        const auto yr = pick(sampling, n, l);
        const auto zr = pick(sampling, n, l);
        const MatrixXd xb = phase == Phase::Finetune ? gather(x, xr) : MatrixXd();
        const auto g = gradients_impl(phase, pair, phase == Phase::Finetune ? &xb : nullptr, gather(y, yr),
                                      gather(z_pool, zr), drop, drop, Wanted{false, true});
        check(t, phase, g.value);
        nn::adam_update(pair.generator, g.grad_g, g_state);
        ++res.g_updates;
      }
    } catch (const DivergenceError& e) {
      if (std::string_view(e.what()).starts_with("adversarial training diverged")) throw;
      fail(t, phase, e.what());
    }
    res.history.push_back({t, phase, last_v});
  }
  res.pair = std::move(pair);
  return res;
}

AugmentedSet generate_augmented(RandomSource& rng, const GanPair& pair, const MatrixXd& synthesised,
                                std::ptrdiff_t n) {
  if (n < 0) throw DomainError("generate_augmented: negative sample count");
  AugmentedSet out;
  const Eigen::Index k = pair.generator.output_dim();
  if (n == 0) {
    out.samples.resize(0, k);
    return out;
  }
  if (synthesised.rows() == 0) throw DomainError("generate_augmented: no synthesised records to condition on");
  if (synthesised.cols() != k) throw DimensionError("generate_augmented: feature dimension mismatch");
  const MatrixXd y = pair.scaler.to_model(synthesised);
  MatrixXd input(n, k);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(y.rows())));
    for (Eigen::Index c = 0; c < k; ++c) input(r, c) = y(row, c) + sample_gaussian(rng, 0.0, 1.0);
  }
  const auto fw = nn::forward(pair.generator, input);
  out.samples = pair.scaler.to_raw(fw.output).cwiseMax(0.0);
  if (!out.samples.allFinite()) throw DivergenceError("generate_augmented: generator produced non-finite output");
  return out;
}

std::string to_checkpoint_json(const GanPair& pair) {
  nlohmann::ordered_json j;
  j["format"] = "nidda-gan";
  j["version"] = 1;
  j["discriminator"] = nlohmann::ordered_json::parse(nn::to_checkpoint_json(pair.discriminator));
  j["generator"] = nlohmann::ordered_json::parse(nn::to_checkpoint_json(pair.generator));
  j["scaler"]["offset"] = std::vector<double>(pair.scaler.offset.data(), pair.scaler.offset.data() + pair.scaler.offset.size());
  j["scaler"]["scale"] = std::vector<double>(pair.scaler.scale.data(), pair.scaler.scale.data() + pair.scaler.scale.size());
  return j.dump();
}

GanPair gan_from_checkpoint_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("gan checkpoint: ") + e.what(), 0);
  }
  if (j.value("format", "") != "nidda-gan" || j.value("version", 0) != 1) {
    throw ParseError("gan checkpoint: unsupported format or version", 0);
  }
  GanPair p;
  p.discriminator = nn::from_checkpoint_json(j.at("discriminator").dump());
  p.generator = nn::from_checkpoint_json(j.at("generator").dump());
  const auto off = j.at("scaler").at("offset").get<std::vector<double>>();
  const auto sc = j.at("scaler").at("scale").get<std::vector<double>>();
  const auto k = static_cast<std::size_t>(p.generator.output_dim());
  if (off.size() != k || sc.size() != k) throw ParseError("gan checkpoint: scaler dimension mismatch", 0);
  p.scaler.offset = Eigen::Map<const VectorXd>(off.data(), static_cast<Eigen::Index>(k));
  p.scaler.scale = Eigen::Map<const VectorXd>(sc.data(), static_cast<Eigen::Index>(k));
  return p;
}

}  // namespace nidda::dgnn
