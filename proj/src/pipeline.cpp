#include "nidda/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fmt/format.h>
#include <json.hpp>
#include <set>
#include <variant>

#include "nidda/error.hpp"
#include "nidda/pgm.hpp"
#include "nidda/table_io.hpp"

namespace nidda::pipeline {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// configuration

namespace {

Json config_json(const PipelineConfig& c) {
  Json j;
  j["train_path"] = c.train_path;
  j["test_path"] = c.test_path;
  j["output_dir"] = c.output_dir;
  j["attack_types"] = c.attack_types;
  j["m"] = c.m;
  j["n_synth"] = c.n_synth;
  j["augment_target"] = c.augment_target;
  j["burn_in"] = c.burn_in;
  j["batch"] = c.schedule.batch;
  j["d_steps"] = c.schedule.d_steps;
  j["g_steps"] = c.schedule.g_steps;
  j["pretrain_iters"] = c.schedule.pretrain_iters;
  j["finetune_iters"] = c.schedule.finetune_iters;
  j["lr_d"] = c.schedule.lr_d;
  j["lr_g"] = c.schedule.lr_g;
  j["gan_dropout"] = c.schedule.dropout;
  j["divergence_limit"] = c.schedule.divergence_limit;
  j["normals_linear"] = c.normals_linear;
  j["normals_dnn"] = c.normals_dnn;
  j["linear_epochs"] = c.linear.epochs;
  j["linear_lr"] = c.linear.learning_rate;
  j["linear_reg"] = c.linear.regularization;
  j["dnn_epochs"] = c.dnn.epochs;
  j["dnn_batch"] = c.dnn.batch;
  j["dnn_lr"] = c.dnn.learning_rate;
  j["dnn_patience"] = c.dnn.patience;
  j["dnn_dropout"] = c.dnn.dropout;
  j["dnn_validation_fraction"] = c.dnn.validation_fraction;
  j["dnn_hidden"] = c.dnn.hidden;
  j["repeats"] = c.repeats;
  j["rng_seed"] = c.rng_seed;
  return j;
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& into) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

PipelineConfig config_from(const nlohmann::json& j, PipelineConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const auto known = PipelineConfig::keys();
  for (const auto& [k, _] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");
  }
  take(j, "train_path", c.train_path);
  take(j, "test_path", c.test_path);
  take(j, "output_dir", c.output_dir);
  take(j, "attack_types", c.attack_types);
  take(j, "m", c.m);
  take(j, "n_synth", c.n_synth);
  take(j, "augment_target", c.augment_target);
  take(j, "burn_in", c.burn_in);
  take(j, "batch", c.schedule.batch);
  take(j, "d_steps", c.schedule.d_steps);
  take(j, "g_steps", c.schedule.g_steps);
  take(j, "pretrain_iters", c.schedule.pretrain_iters);
  take(j, "finetune_iters", c.schedule.finetune_iters);
  take(j, "lr_d", c.schedule.lr_d);
  take(j, "lr_g", c.schedule.lr_g);
  take(j, "gan_dropout", c.schedule.dropout);
  take(j, "divergence_limit", c.schedule.divergence_limit);
  take(j, "normals_linear", c.normals_linear);
  take(j, "normals_dnn", c.normals_dnn);
  take(j, "linear_epochs", c.linear.epochs);
  take(j, "linear_lr", c.linear.learning_rate);
  take(j, "linear_reg", c.linear.regularization);
  take(j, "dnn_epochs", c.dnn.epochs);
  take(j, "dnn_batch", c.dnn.batch);
  take(j, "dnn_lr", c.dnn.learning_rate);
  take(j, "dnn_patience", c.dnn.patience);
  take(j, "dnn_dropout", c.dnn.dropout);
  take(j, "dnn_validation_fraction", c.dnn.validation_fraction);
  take(j, "dnn_hidden", c.dnn.hidden);
  take(j, "repeats", c.repeats);
  take(j, "rng_seed", c.rng_seed);
  return c;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto tok = s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (!tok.empty()) out.emplace_back(tok);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

}  // namespace

std::string PipelineConfig::to_json() const { return config_json(*this).dump(2); }

PipelineConfig PipelineConfig::from_json(std::string_view text, PipelineConfig base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config_from(j, std::move(base));
}

PipelineConfig PipelineConfig::from_json(std::string_view text) { return from_json(text, PipelineConfig{}); }

std::vector<std::string> PipelineConfig::keys() {
  const Json j = config_json(PipelineConfig{});
  std::vector<std::string> k;
  for (const auto& [key, _] : j.items()) k.push_back(key);
  return k;
}

void PipelineConfig::apply_overrides(const std::map<std::string, std::string>& overrides) {
  const Json current = config_json(*this);
  nlohmann::json patch = nlohmann::json::object();
  for (const auto& [key, value] : overrides) {
    if (!current.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    const auto& proto = current.at(key);
    try {
      if (proto.is_string()) {
        patch[key] = value;
      } else if (key == "attack_types") {
        patch[key] = split_list(value);
      } else if (proto.is_array()) {
        std::vector<long long> v;
        for (const auto& t : split_list(value)) v.push_back(std::stoll(t));
        patch[key] = v;
      } else if (proto.is_number_unsigned() || proto.is_number_integer()) {
        if (!value.empty() && value.front() == '-') throw ConfigError("config key '" + key + "' must be non-negative");
        patch[key] = std::stoull(value);
      } else {
        patch[key] = std::stod(value);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    }
  }
  *this = config_from(patch, *this);
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(config_json(*this).dump()); }

void PipelineConfig::validate() const {
  if (attack_types.empty()) throw ConfigError("config: attack_types is empty");
  if (augment_target < m) throw ConfigError("config: augment_target must be at least M");
  if (repeats == 0) throw ConfigError("config: repeats must be positive");
  linear.validate();
  dnn.validate();
}

fs::path resolve_data_path(const std::string& path) {
  std::vector<fs::path> candidates{path};
  if (const char* root = std::getenv("NIDDA_DATA_ROOT"); root && fs::path(path).is_relative()) {
    candidates.push_back(fs::path(root) / path);
  }
  std::vector<fs::path> all;
  for (const auto& c : candidates) {
    all.push_back(c);
    if (c.extension() == ".gz") all.push_back(fs::path(c).replace_extension());
    else all.push_back(fs::path(c.string() + ".gz"));
  }
  for (const auto& c : all) {
    if (fs::is_regular_file(c)) return c;
  }
  throw ConfigError("dataset file '" + path + "' not found (set NIDDA_DATA_ROOT or pass --train_path/--test_path)");
}

std::string provenance_line(const PipelineConfig& cfg) {
  return fmt::format("config_hash={} rng_seed={}", hex(cfg.hash()), cfg.rng_seed);
}

// ---------------------------------------------------------------------------
// preprocess

namespace {

fs::path preprocess_dir(const PipelineConfig& c) { return fs::path(c.output_dir) / "preprocess"; }
fs::path augment_dir(const PipelineConfig& c) { return fs::path(c.output_dir) / "augment"; }
fs::path reports_dir(const PipelineConfig& c) { return fs::path(c.output_dir) / "reports"; }

Json provenance_json(const PipelineConfig& cfg) {
  Json j;
  j["config_hash"] = hex(cfg.hash());
  j["rng_seed"] = cfg.rng_seed;
  return j;
}

std::vector<std::string> feature_header() {
  std::vector<std::string> h;
  for (auto col : kdd::feature_columns()) h.emplace_back(kdd::column_names()[col]);
  return h;
}

void write_encoded(const fs::path& path, const kdd::EncodedSet& s, const PipelineConfig& cfg) {
  std::string out = "# " + provenance_line(cfg) + "\n";
  for (const auto& h : feature_header()) out += h + ",";
  out += "label,category\n";
  for (std::size_t r = 0; r < s.size(); ++r) {
    for (Eigen::Index c = 0; c < s.x.cols(); ++c) {
      out += io::format_double(s.x(static_cast<Eigen::Index>(r), c));
      out += ',';
    }
    out += s.labels[r].fine;
    out += ',';
    out += kdd::to_string(s.labels[r].coarse);
    out += '\n';
  }
  io::write_text(path, out);
}

kdd::EncodedSet read_encoded(const fs::path& path) {
  if (!fs::exists(path)) {
    throw ConfigError("missing " + path.string() + "; run `nidda preprocess` first");
  }
  const auto t = io::read_csv(path);
  kdd::EncodedSet s;
  const std::size_t k = kdd::kFeatureDim;
  s.x.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(k));
  s.labels.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != k + 2) throw ParseError(path.string() + ": malformed row " + std::to_string(r + 1), r + 1);
    for (std::size_t c = 0; c < k; ++c) {
      s.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::stod(row[c]);
    }
    s.labels.push_back(kdd::map_label(row[k]));
  }
  return s;
}

Json normalizer_json(const kdd::Normalizer& n) {
  Json j;
  j["mean"] = std::vector<double>(n.mean.data(), n.mean.data() + n.mean.size());
  j["std"] = std::vector<double>(n.std.data(), n.std.data() + n.std.size());
  j["continuous"] = n.continuous;
  return j;
}

kdd::Normalizer normalizer_from(const nlohmann::json& j) {
  kdd::Normalizer n;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  n.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  n.std = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  n.continuous = j.at("continuous").get<std::vector<bool>>();
  return n;
}

}  // namespace

std::string PreprocessSummary::to_text() const {
  std::string out = fmt::format("{:<8} {:>10} {:>10} {:>12}\n", "class", "train", "test", "train(ref)");
  for (std::size_t i = 0; i < kdd::kNumCategories; ++i) {
    out += fmt::format("{:<8} {:>10} {:>10} {:>12}\n", kdd::to_string(static_cast<kdd::Category>(i)),
                       train_counts[i], test_counts[i], kdd::kTenPercentTrainingCounts[i]);
  }
  out += fmt::format("training counts match the 10% reference: {}\n", matches_training_table ? "yes" : "no");
  out += fmt::format("{:<14} {:>8} {:>8}\n", "attack", "train", "test");
  for (const auto& [type, c] : small_sample_counts) out += fmt::format("{:<14} {:>8} {:>8}\n", type, c.first, c.second);
  out += fmt::format("small-sample counts match the reference: {}\n", matches_small_sample_table ? "yes" : "no");
  return out;
}

PreprocessSummary cmd_preprocess(const PipelineConfig& cfg) {
  cfg.validate();
  const auto train_path = resolve_data_path(cfg.train_path);
  const auto test_path = resolve_data_path(cfg.test_path);
  const auto train_raw = kdd::parse_records_file(train_path);
  const auto test_raw = kdd::parse_records_file(test_path);
  if (train_raw.empty()) throw ParseError(train_path.string() + ": no records", 0);
  if (test_raw.empty()) throw ParseError(test_path.string() + ": no records", 0);
  auto encode = [](const std::vector<kdd::RawRecord>& raw, const fs::path& p) {
    try {
      return kdd::encode_all(raw);
    } catch (const EncodeError& e) {
      throw EncodeError(p.string() + ": " + e.what(), e.column());
    } catch (const LabelError& e) {
      throw LabelError(p.string() + ": " + e.what());
    }
  };
  const kdd::EncodedSet train = encode(train_raw, train_path);
  const kdd::EncodedSet test = encode(test_raw, test_path);
  const kdd::Normalizer norm = kdd::fit_normalizer(train.x);

  PreprocessSummary s;
  s.train_counts = kdd::count_by_category(train);
  s.test_counts = kdd::count_by_category(test);
  s.matches_training_table = s.train_counts == kdd::kTenPercentTrainingCounts;
  s.matches_small_sample_table = true;
  for (const auto& type : cfg.attack_types) {
    const std::size_t tr = train.rows_of(type).size();
    const std::size_t te = test.rows_of(type).size();
    s.small_sample_counts[type] = {tr, te};
    bool found = false;
    for (const auto& ref : kdd::kSmallSampleTypes) {
      if (kdd::same_attack(ref.name, type)) {
        found = true;
        s.matches_small_sample_table = s.matches_small_sample_table && ref.train == tr && ref.test == te;
      }
    }
    s.matches_small_sample_table = s.matches_small_sample_table && found;
  }

  const fs::path dir = preprocess_dir(cfg);
  write_encoded(dir / "train.csv", train, cfg);
  write_encoded(dir / "test.csv", test, cfg);
  Json nj;
  nj["provenance"] = provenance_json(cfg);
  nj["normalizer"] = normalizer_json(norm);
  io::write_text(dir / "normalizer.json", nj.dump(2) + "\n");
  Json sj;
  sj["provenance"] = provenance_json(cfg);
  sj["train_file"] = train_path.string();
  sj["test_file"] = test_path.string();
  for (std::size_t i = 0; i < kdd::kNumCategories; ++i) {
    const std::string name(kdd::to_string(static_cast<kdd::Category>(i)));
    sj["train_counts"][name] = s.train_counts[i];
    sj["test_counts"][name] = s.test_counts[i];
  }
  for (const auto& [type, c] : s.small_sample_counts) sj["small_sample_counts"][type] = {c.first, c.second};
  sj["matches_training_table"] = s.matches_training_table;
  sj["matches_small_sample_table"] = s.matches_small_sample_table;
  io::write_text(dir / "summary.json", sj.dump(2) + "\n");
  return s;
}

Dataset load_preprocessed(const PipelineConfig& cfg) {
  const fs::path dir = preprocess_dir(cfg);
  Dataset d;
  d.train = read_encoded(dir / "train.csv");
  d.test = read_encoded(dir / "test.csv");
  const auto nj = nlohmann::json::parse(io::read_text(dir / "normalizer.json"));
  d.normalizer = normalizer_from(nj.at("normalizer"));
  return d;
}

kdd::SmallSamplePartition make_partition(const PipelineConfig& cfg, const Dataset& data) {
  RandomSource rng = RandomSource::derive(cfg.rng_seed, "partition");
  return kdd::partition_small_sample(data.train, data.test, cfg.attack_types, cfg.m, rng);
}

// ---------------------------------------------------------------------------
// augmentation

namespace {

std::vector<std::string> comments(const PipelineConfig& cfg, std::vector<std::string> extra = {}) {
  std::vector<std::string> c{provenance_line(cfg)};
  c.insert(c.end(), extra.begin(), extra.end());
  return c;
}

void write_history(const fs::path& path, const std::vector<dgnn::LossRecord>& history, const PipelineConfig& cfg) {
  std::string out = "# " + provenance_line(cfg) + "\niteration,mode,v_value\n";
  for (const auto& h : history) {
    out += fmt::format("{},{},{}\n", h.iteration, dgnn::to_string(h.phase), io::format_double(h.value));
  }
  io::write_text(path, out);
}

Json partition_json(const kdd::SmallSamplePartition& p, const PipelineConfig& cfg) {
  Json j;
  j["provenance"] = provenance_json(cfg);
  j["m"] = cfg.m;
  for (const auto& type : p.attack_types) {
    const auto& src = p.seed_sources.at(type);
    j["seeds"][type]["source"] = src.from_train ? "train" : "test";
    j["seeds"][type]["rows"] = src.rows;
  }
  j["reduced_test_size"] = p.reduced_test.size();
  return j;
}

fs::path type_dir(const PipelineConfig& cfg, const std::string& type) { return augment_dir(cfg) / type; }

AugmentOutcome augment_one(const PipelineConfig& cfg, const kdd::SmallSamplePartition& part, const std::string& type) {
  AugmentOutcome o;
  o.attack_type = type;
  o.directory = type_dir(cfg, type);
  o.seeds = part.seeds_of(type);
  const auto header = feature_header();

  RandomSource pgm_rng = RandomSource::derive(cfg.rng_seed, "augment/pgm/" + type);
  const auto synth = pgm::gibbs_generate(pgm_rng, o.seeds, cfg.n_synth, cfg.burn_in);
  o.synthesised = synth.y;

  RandomSource gan_rng = RandomSource::derive(cfg.rng_seed, "augment/dgnn/" + type);
  dgnn::TrainResult trained;
  try {
    trained = dgnn::train_dgnn(gan_rng, o.seeds, synth.y, cfg.schedule);
  } catch (DivergenceError& e) {
    const fs::path hist = o.directory / "loss_history_diverged.txt";
    io::write_text(hist, std::string(e.what()) + "\n");
    e.set_history_path(hist.string());
    throw;
  }
  RandomSource gen_rng = RandomSource::derive(cfg.rng_seed, "augment/generate/" + type);
  auto aug = dgnn::generate_augmented(gen_rng, trained.pair, synth.y, static_cast<std::ptrdiff_t>(cfg.augment_target));
  aug.checkpoint = (o.directory / "gan.json").string();
  o.augmented = aug.samples;

  io::write_matrix_csv(o.directory / "seeds.csv", o.seeds, header, comments(cfg, {"attack=" + type}));
  io::write_matrix_csv(o.directory / "synth.csv", synth.y, header,
                       comments(cfg, {fmt::format("attack={} seed_hash={} burn_in={} count={}", type,
                                                  hex(synth.seed_hash), synth.burn_in, synth.count)}));
  io::write_text(o.directory / "gan.json", dgnn::to_checkpoint_json(trained.pair) + "\n");
  write_history(o.directory / "loss_history.csv", trained.history, cfg);
  io::write_matrix_csv(o.directory / "augmented.csv", aug.samples, header,
                       comments(cfg, {"attack=" + type + " checkpoint=gan.json"}));
  Json manifest;
  manifest["provenance"] = provenance_json(cfg);
  manifest["attack_type"] = type;
  manifest["seeds"] = o.seeds.rows();
  manifest["synthesised"] = synth.y.rows();
  manifest["augmented"] = aug.samples.rows();
  manifest["burn_in"] = cfg.burn_in;
  manifest["seed_hash"] = hex(synth.seed_hash);
  manifest["d_updates"] = trained.d_updates;
  manifest["g_updates"] = trained.g_updates;
  manifest["files"] = {"seeds.csv", "synth.csv", "gan.json", "loss_history.csv", "augmented.csv"};
  io::write_text(o.directory / "manifest.json", manifest.dump(2) + "\n");
  return o;
}

}  // namespace

std::vector<AugmentOutcome> cmd_augment(const PipelineConfig& cfg, const std::string& attack_type) {
  cfg.validate();
  const Dataset data = load_preprocessed(cfg);
  const auto part = make_partition(cfg, data);
  io::write_text(augment_dir(cfg) / "partition.json", partition_json(part, cfg).dump(2) + "\n");
  std::vector<std::string> types;
  if (attack_type == "all") {
    types = cfg.attack_types;
  } else {
    for (const auto& t : cfg.attack_types) {
      if (kdd::same_attack(t, attack_type)) types.push_back(t);
    }
    if (types.empty()) throw ConfigError("attack type '" + attack_type + "' is not in attack_types");
  }
  std::vector<AugmentOutcome> out;
  for (const auto& t : types) out.push_back(augment_one(cfg, part, t));
  return out;
}

void run_pgm_file(const PipelineConfig& cfg, const fs::path& seeds_path, const fs::path& out) {
  const MatrixXd seeds = io::read_matrix_csv(seeds_path);
  RandomSource rng = RandomSource::derive(cfg.rng_seed, "augment/pgm/file");
  const auto synth = pgm::gibbs_generate(rng, seeds, cfg.n_synth, cfg.burn_in);
  std::vector<std::string> header;
  if (seeds.cols() == static_cast<Eigen::Index>(kdd::kFeatureDim)) {
    header = feature_header();
  } else {
    for (Eigen::Index i = 0; i < seeds.cols(); ++i) header.push_back(fmt::format("f{}", i));
  }
  io::write_matrix_csv(out, synth.y, header,
                       comments(cfg, {fmt::format("pgm seed_hash={} burn_in={} count={}", hex(synth.seed_hash),
                                                  synth.burn_in, synth.count)}));
}

void run_dgnn_file(const PipelineConfig& cfg, const fs::path& seeds_path, const fs::path& synth_path,
                   const fs::path& out, const fs::path& checkpoint, const fs::path& history) {
  const MatrixXd seeds = io::read_matrix_csv(seeds_path);
  const MatrixXd synth = io::read_matrix_csv(synth_path);
  RandomSource gan_rng = RandomSource::derive(cfg.rng_seed, "augment/dgnn/file");
  dgnn::TrainResult trained;
  try {
    trained = dgnn::train_dgnn(gan_rng, seeds, synth, cfg.schedule);
  } catch (DivergenceError& e) {
    io::write_text(history, std::string(e.what()) + "\n");
    e.set_history_path(history.string());
    throw;
  }
  RandomSource gen_rng = RandomSource::derive(cfg.rng_seed, "augment/generate/file");
  const auto aug = dgnn::generate_augmented(gen_rng, trained.pair, synth, static_cast<std::ptrdiff_t>(cfg.augment_target));
  std::vector<std::string> header;
  if (synth.cols() == static_cast<Eigen::Index>(kdd::kFeatureDim)) {
    header = feature_header();
  } else {
    for (Eigen::Index i = 0; i < synth.cols(); ++i) header.push_back(fmt::format("f{}", i));
  }
  io::write_matrix_csv(out, aug.samples, header, comments(cfg, {"checkpoint=" + checkpoint.filename().string()}));
  io::write_text(checkpoint, dgnn::to_checkpoint_json(trained.pair) + "\n");
  write_history(history, trained.history, cfg);
}

// ---------------------------------------------------------------------------
// experiments

Experiment experiment_from_string(std::string_view s) {
  if (s == "binary") return Experiment::Binary;
  if (s == "multiclass-svm") return Experiment::MulticlassSvm;
  if (s == "multiclass-dnn") return Experiment::MulticlassDnn;
  throw ConfigError("unknown experiment '" + std::string(s) + "' (binary, multiclass-svm, multiclass-dnn)");
}

std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::Binary: return "binary";
    case Experiment::MulticlassSvm: return "multiclass-svm";
    case Experiment::MulticlassDnn: return "multiclass-dnn";
  }
  return "?";
}

Augmentation augmentation_from_string(std::string_view s) {
  if (s == "none") return Augmentation::None;
  if (s == "pgm") return Augmentation::Pgm;
  if (s == "pgm+dgnn" || s == "da" || s == "full") return Augmentation::Full;
  throw ConfigError("unknown augmentation '" + std::string(s) + "' (none, pgm, pgm+dgnn)");
}

std::string_view to_string(Augmentation a) {
  switch (a) {
    case Augmentation::None: return "none";
    case Augmentation::Pgm: return "pgm";
    case Augmentation::Full: return "pgm+dgnn";
  }
  return "?";
}

ClassifierKind classifier_from_string(std::string_view s) {
  if (s == "lr" || s == "logreg") return ClassifierKind::Logistic;
  if (s == "svm") return ClassifierKind::Svm;
  if (s == "dnn") return ClassifierKind::Dnn;
  throw ConfigError("unknown classifier '" + std::string(s) + "' (lr, svm, dnn)");
}

std::string_view to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::Logistic: return "lr";
    case ClassifierKind::Svm: return "svm";
    case ClassifierKind::Dnn: return "dnn";
  }
  return "?";
}

std::string model_name(ClassifierKind k, Augmentation a) {
  const std::string base = k == ClassifierKind::Logistic ? "LR" : k == ClassifierKind::Svm ? "SVM" : "DNN";
  switch (a) {
    case Augmentation::None: return "NID-" + base;
    case Augmentation::Pgm: return "NID-PGM-" + base;
    case Augmentation::Full: return "NID-DA-" + base;
  }
  return base;
}

const ReportRow& ExperimentReport::row(std::string_view group, std::string_view model) const {
  for (const auto& r : rows) {
    if (r.group == group && r.model == model) return r;
  }
  throw ConfigError("report has no row " + std::string(group) + "/" + std::string(model));
}

namespace {

/// Everything a trial needs, loaded once.
struct Workspace {
  PipelineConfig cfg;
  Dataset data;
  kdd::SmallSamplePartition partition;
  std::map<std::string, MatrixXd> synthesised;
  std::map<std::string, MatrixXd> augmented;
};

kdd::SmallSamplePartition partition_from_file(const PipelineConfig& cfg, const Dataset& data) {
  const fs::path path = augment_dir(cfg) / "partition.json";
  if (!fs::exists(path)) throw ConfigError("missing " + path.string() + "; run `nidda augment full` first");
  const auto j = nlohmann::json::parse(io::read_text(path));
  kdd::SmallSamplePartition p;
  p.attack_types = cfg.attack_types;
  p.normal_pool = data.train.rows_of(kdd::Category::Normal);
  std::vector<bool> removed(data.test.size(), false);
  for (const auto& type : cfg.attack_types) {
    if (!j.contains("seeds") || !j["seeds"].contains(type)) {
      throw ConfigError("partition.json has no seeds for '" + type + "'; rerun `nidda augment full`");
    }
    kdd::SeedSource src;
    src.from_train = j["seeds"][type]["source"].get<std::string>() == "train";
    src.rows = j["seeds"][type]["rows"].get<std::vector<std::size_t>>();
    const kdd::EncodedSet& from = src.from_train ? data.train : data.test;
    MatrixXd seeds(static_cast<Eigen::Index>(src.rows.size()), from.x.cols());
    for (std::size_t i = 0; i < src.rows.size(); ++i) {
      if (src.rows[i] >= from.size()) throw ConfigError("partition.json refers to a row outside the dataset");
      seeds.row(static_cast<Eigen::Index>(i)) = from.x.row(static_cast<Eigen::Index>(src.rows[i]));
      if (!src.from_train) removed[src.rows[i]] = true;
    }
    p.seeds[type] = std::move(seeds);
    p.seed_sources[type] = std::move(src);
  }
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    if (!removed[i]) p.reduced_test.push_back(i);
  }
  return p;
}

Workspace load_workspace(const PipelineConfig& cfg) {
  cfg.validate();
  Workspace w;
  w.cfg = cfg;
  w.data = load_preprocessed(cfg);
  w.partition = partition_from_file(cfg, w.data);
  for (const auto& type : cfg.attack_types) {
    const fs::path dir = type_dir(cfg, type);
    for (const char* f : {"synth.csv", "augmented.csv"}) {
      if (!fs::exists(dir / f)) {
        throw ConfigError("missing " + (dir / f).string() + "; run `nidda augment full --attack " + type + "` first");
      }
    }
    w.synthesised[type] = io::read_matrix_csv(dir / "synth.csv");
    w.augmented[type] = io::read_matrix_csv(dir / "augmented.csv");
  }
  return w;
}

/// Class layout: index 0 is NORMAL, then the categories of the configured
/// attack types in category order (binary experiments use {normal, attack}).
std::vector<kdd::Category> multiclass_categories(const PipelineConfig& cfg) {
  std::set<kdd::Category> cats;
  for (const auto& t : cfg.attack_types) cats.insert(kdd::map_label(t).coarse);
  std::vector<kdd::Category> out{kdd::Category::Normal};
  for (auto c : cats) {
    if (c != kdd::Category::Normal) out.push_back(c);
  }
  return out;
}

int class_index(const std::vector<kdd::Category>& cats, kdd::Category c) {
  const auto it = std::find(cats.begin(), cats.end(), c);
  if (it == cats.end()) throw LabelError("category not in the class layout");
  return static_cast<int>(it - cats.begin());
}

const MatrixXd& intrusions_for(const Workspace& w, const std::string& type, Augmentation a) {
  switch (a) {
    case Augmentation::None: return w.partition.seeds_of(type);
    case Augmentation::Pgm: return w.synthesised.at(type);
    case Augmentation::Full: return w.augmented.at(type);
  }
  throw ConfigError("bad augmentation mode");
}

std::vector<std::size_t> draw_normals(const Workspace& w, Experiment e, std::size_t count, std::size_t repeat) {
  const auto& pool = w.partition.normal_pool;
  if (count > pool.size()) {
    throw ConfigError(fmt::format("requested {} training normals but only {} are available", count, pool.size()));
  }
  // Shared by every model variant of a repeat so comparisons are paired.
  RandomSource rng = RandomSource::derive(w.cfg.rng_seed, fmt::format("normals/{}/{}", to_string(e), repeat));
  std::vector<std::size_t> p = pool;
  for (std::size_t i = 0; i < count; ++i) std::swap(p[i], p[i + rng.below(p.size() - i)]);
  p.resize(count);
  return p;
}

struct LabelledSet {
  MatrixXd x;  // normalized
  std::vector<int> y;
  std::vector<std::size_t> source_rows;  // rows of the originating split, normals/test only
};

LabelledSet training_set(const Workspace& w, Experiment e, const std::string& attack, ClassifierKind k,
                         Augmentation a, std::size_t repeat) {
  const std::size_t n_normal = k == ClassifierKind::Dnn ? w.cfg.normals_dnn : w.cfg.normals_linear;
  const auto normals = draw_normals(w, e, n_normal, repeat);
  std::vector<const MatrixXd*> blocks;
  std::vector<int> block_label;
  if (e == Experiment::Binary) {
    blocks.push_back(&intrusions_for(w, attack, a));
    block_label.push_back(1);
  } else {
    const auto cats = multiclass_categories(w.cfg);
    for (const auto& t : w.cfg.attack_types) {
      blocks.push_back(&intrusions_for(w, t, a));
      block_label.push_back(class_index(cats, kdd::map_label(t).coarse));
    }
  }
  Eigen::Index rows = static_cast<Eigen::Index>(normals.size());
  for (auto* b : blocks) rows += b->rows();
  LabelledSet s;
  s.x.resize(rows, static_cast<Eigen::Index>(kdd::kFeatureDim));
  s.y.reserve(static_cast<std::size_t>(rows));
  const int negative = (e == Experiment::Binary && k == ClassifierKind::Svm) ? -1 : 0;
  Eigen::Index r = 0;
  for (auto i : normals) {
    s.x.row(r++) = w.data.train.x.row(static_cast<Eigen::Index>(i));
    s.y.push_back(negative);
  }
  s.source_rows = normals;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    s.x.middleRows(r, blocks[b]->rows()) = *blocks[b];
    r += blocks[b]->rows();
    s.y.insert(s.y.end(), static_cast<std::size_t>(blocks[b]->rows()), block_label[b]);
  }
  s.x = w.data.normalizer.apply(s.x);
  return s;
}

LabelledSet test_set(const Workspace& w, Experiment e, const std::string& attack) {
  LabelledSet s;
  const auto cats = multiclass_categories(w.cfg);
  for (auto i : w.partition.reduced_test) {
    const auto& l = w.data.test.labels[i];
    if (l.coarse == kdd::Category::Normal) {
      s.source_rows.push_back(i);
      s.y.push_back(0);
    } else if (e == Experiment::Binary ? kdd::same_attack(l.fine, attack)
                                       : std::any_of(w.cfg.attack_types.begin(), w.cfg.attack_types.end(),
                                                     [&](const auto& t) { return kdd::same_attack(l.fine, t); })) {
      s.source_rows.push_back(i);
      s.y.push_back(e == Experiment::Binary ? 1 : class_index(cats, l.coarse));
    }
  }
  s.x.resize(static_cast<Eigen::Index>(s.source_rows.size()), static_cast<Eigen::Index>(kdd::kFeatureDim));
  for (std::size_t r = 0; r < s.source_rows.size(); ++r) {
    s.x.row(static_cast<Eigen::Index>(r)) = w.data.test.x.row(static_cast<Eigen::Index>(s.source_rows[r]));
  }
  s.x = w.data.normalizer.apply(s.x);
  return s;
}

using AnyModel = std::variant<clf::LinearModel, clf::OneVsRest, clf::DnnClassifier>;

AnyModel train_model(const PipelineConfig& cfg, Experiment e, ClassifierKind k, const LabelledSet& s,
                     std::size_t num_classes, RandomSource& rng) {
  if (k == ClassifierKind::Dnn) return clf::train_dnn_classifier(s.x, s.y, num_classes, cfg.dnn, rng);
  if (e == Experiment::Binary) {
    return k == ClassifierKind::Logistic ? clf::train_logreg(s.x, s.y, cfg.linear, rng)
                                         : clf::train_svm(s.x, s.y, cfg.linear, rng);
  }
  const auto kind = k == ClassifierKind::Logistic ? clf::LinearKind::Logistic : clf::LinearKind::Hinge;
  return clf::train_one_vs_rest(s.x, s.y, num_classes, kind, cfg.linear, rng);
}

std::vector<int> predict_labels(const AnyModel& m, const MatrixXd& x) {
  return std::visit([&](const auto& model) { return clf::predict(model, x).labels; }, m);
}

eval::TrialResult score(Experiment e, const std::string& attack, const std::vector<kdd::Category>& cats,
                        const LabelledSet& test, std::vector<int> preds, bool svm_binary) {
  eval::TrialResult r;
  if (e == Experiment::Binary) {
    if (svm_binary) {
      for (auto& p : preds) p = p == 1 ? 1 : 0;
    }
    r.add(attack, eval::metrics(eval::confusion(test.y, preds, 1)));
  } else {
    for (std::size_t c = 0; c < cats.size(); ++c) {
      r.add(std::string(kdd::to_string(cats[c])), eval::metrics(eval::confusion(test.y, preds, static_cast<int>(c))));
    }
  }
  return r;
}

std::size_t class_count(const PipelineConfig& cfg, Experiment e) {
  return e == Experiment::Binary ? 2 : multiclass_categories(cfg).size();
}

Json summary_json(const eval::Summary& s, bool f1) {
  Json j;
  j["defined"] = s.defined;
  j["mean"] = s.mean;
  j["std"] = s.std;
  j["rendered"] = eval::render_summary(s, f1);
  return j;
}

void write_report(const PipelineConfig& cfg, const ExperimentReport& rep) {
  io::CsvTable t;
  t.comments = {provenance_line(cfg), fmt::format("experiment={} repeats={} m={} augment_target={}",
                                                  to_string(rep.experiment), cfg.repeats, cfg.m, cfg.augment_target)};
  t.header = {"group", "model", "accuracy", "precision", "recall", "f1", "accuracy_mean", "accuracy_std",
              "precision_mean", "precision_std", "recall_mean", "recall_std", "f1_mean", "f1_std",
              "accepted_runs", "rejected_runs"};
  Json j;
  j["provenance"] = provenance_json(cfg);
  j["experiment"] = std::string(to_string(rep.experiment));
  j["protocol"] = {{"repeats", cfg.repeats},
                   {"m", cfg.m},
                   {"augment_target", cfg.augment_target},
                   {"normals_linear", cfg.normals_linear},
                   {"normals_dnn", cfg.normals_dnn}};
  j["rows"] = Json::array();
  for (const auto& r : rep.rows) {
    const auto& m = r.metrics;
    auto num = [](const eval::Summary& s) { return s.defined ? io::format_double(s.mean) : std::string(); };
    auto sd = [](const eval::Summary& s) { return s.defined ? io::format_double(s.std) : std::string(); };
    t.rows.push_back({r.group, r.model, eval::render_summary(m.accuracy), eval::render_summary(m.precision),
                      eval::render_summary(m.recall), eval::render_summary(m.f1, true), num(m.accuracy),
                      sd(m.accuracy), num(m.precision), sd(m.precision), num(m.recall), sd(m.recall), num(m.f1),
                      sd(m.f1), std::to_string(r.accepted.size()), std::to_string(r.rejected.size())});
    Json rj;
    rj["group"] = r.group;
    rj["model"] = r.model;
    rj["accuracy"] = summary_json(m.accuracy, false);
    rj["precision"] = summary_json(m.precision, false);
    rj["recall"] = summary_json(m.recall, false);
    rj["f1"] = summary_json(m.f1, true);
    rj["accepted_runs"] = r.accepted;
    rj["rejected_runs"] = r.rejected;
    j["rows"].push_back(std::move(rj));
  }
  j["diagnostics"] = rep.diagnostics;
  const fs::path dir = reports_dir(cfg);
  io::write_text(dir / (std::string(to_string(rep.experiment)) + ".csv"), io::to_csv(t));
  io::write_text(dir / (std::string(to_string(rep.experiment)) + ".json"), j.dump(2) + "\n");
}

}  // namespace

ExperimentReport cmd_reproduce(const PipelineConfig& cfg, Experiment experiment) {
  const Workspace w = load_workspace(cfg);
  ExperimentReport rep;
  rep.experiment = experiment;
  const auto cats = multiclass_categories(cfg);
  const std::size_t n_classes = class_count(cfg, experiment);

  struct Variant {
    ClassifierKind kind;
    Augmentation aug;
  };
  std::vector<Variant> variants;
  std::vector<std::string> groups;
  if (experiment == Experiment::Binary) {
    variants = {{ClassifierKind::Logistic, Augmentation::None},
                {ClassifierKind::Logistic, Augmentation::Full},
                {ClassifierKind::Svm, Augmentation::None},
                {ClassifierKind::Svm, Augmentation::Full}};
    groups = cfg.attack_types;
  } else {
    const auto k = experiment == Experiment::MulticlassSvm ? ClassifierKind::Svm : ClassifierKind::Dnn;
    variants = {{k, Augmentation::None}, {k, Augmentation::Pgm}, {k, Augmentation::Full}};
    groups = {""};
  }

  for (const auto& group : groups) {
    const LabelledSet test = test_set(w, experiment, group);
    for (const auto& v : variants) {
      const std::string name = model_name(v.kind, v.aug);
      eval::Trial trial = [&](std::size_t repeat, RandomSource& rng) {
        const LabelledSet train = training_set(w, experiment, group, v.kind, v.aug, repeat);
        const AnyModel model = train_model(cfg, experiment, v.kind, train, n_classes, rng);
        return score(experiment, group, cats, test, predict_labels(model, test.x),
                     experiment == Experiment::Binary && v.kind == ClassifierKind::Svm);
      };
      RandomSource rng = RandomSource::derive(
          cfg.rng_seed, fmt::format("reproduce/{}/{}/{}", to_string(experiment), group, name));
      const auto agg = eval::run_trials(trial, cfg.repeats, rng);
      for (const auto& d : agg.diagnostics) {
        rep.diagnostics.push_back(fmt::format("{} {}: {}", group.empty() ? "all" : group, name, d));
      }
      if (agg.failed) {
        write_report(cfg, rep);
        throw Error(fmt::format("every repeat of {} {} was rejected: {}", group.empty() ? "all" : group, name,
                                fmt::join(agg.diagnostics, "; ")));
      }
      for (const auto& row : agg.order) {
        rep.rows.push_back({row, name, agg.rows.at(row), agg.accepted, agg.rejected});
      }
    }
  }
  if (experiment != Experiment::Binary) {
    // Rows grouped by category, NORMAL first.
    std::stable_sort(rep.rows.begin(), rep.rows.end(), [&](const ReportRow& a, const ReportRow& b) {
      return class_index(cats, kdd::category_from_string(a.group)) < class_index(cats, kdd::category_from_string(b.group));
    });
  }
  write_report(cfg, rep);
  return rep;
}

void cmd_train(const PipelineConfig& cfg, const TrainRequest& req) {
  const Workspace w = load_workspace(cfg);
  ClassifierKind kind = req.classifier;
  if (req.experiment == Experiment::MulticlassSvm) kind = ClassifierKind::Svm;
  if (req.experiment == Experiment::MulticlassDnn) kind = ClassifierKind::Dnn;
  if (req.experiment == Experiment::Binary) {
    if (kind == ClassifierKind::Dnn) throw ConfigError("binary experiments use lr or svm");
    if (std::none_of(cfg.attack_types.begin(), cfg.attack_types.end(),
                     [&](const auto& t) { return kdd::same_attack(t, req.attack_type); })) {
      throw ConfigError("attack type '" + req.attack_type + "' is not in attack_types");
    }
  }
  std::string attack;
  for (const auto& t : cfg.attack_types) {
    if (kdd::same_attack(t, req.attack_type)) attack = t;
  }
  const LabelledSet train = training_set(w, req.experiment, attack, kind, req.augmentation, 0);
  RandomSource rng = RandomSource::derive(cfg.rng_seed, "train/" + model_name(kind, req.augmentation) + "/" + attack);
  const AnyModel model = train_model(cfg, req.experiment, kind, train, class_count(cfg, req.experiment), rng);
  Json j;
  j["format"] = "nidda-classifier";
  j["version"] = 1;
  j["provenance"] = provenance_json(cfg);
  j["experiment"] = std::string(to_string(req.experiment));
  j["attack_type"] = attack;
  j["classifier"] = std::string(to_string(kind));
  j["augmentation"] = std::string(to_string(req.augmentation));
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, clf::DnnClassifier>) {
          j["model"] = Json::parse(nn::to_checkpoint_json(m.net));
        } else {
          j["model"] = Json::parse(clf::to_json(m));
        }
      },
      model);
  io::write_text(req.model_out, j.dump() + "\n");
}

eval::TrialResult cmd_evaluate(const PipelineConfig& cfg, const fs::path& model_path, const fs::path& report_out) {
  const auto j = nlohmann::json::parse(io::read_text(model_path));
  if (j.value("format", "") != "nidda-classifier") throw ParseError(model_path.string() + ": not a classifier file", 0);
  const Workspace w = load_workspace(cfg);
  const Experiment e = experiment_from_string(j.at("experiment").get<std::string>());
  const ClassifierKind kind = classifier_from_string(j.at("classifier").get<std::string>());
  const std::string attack = j.at("attack_type").get<std::string>();
  const std::string model_text = j.at("model").dump();
  AnyModel model;
  if (kind == ClassifierKind::Dnn) model = clf::DnnClassifier{nn::from_checkpoint_json(model_text)};
  else if (e == Experiment::Binary) model = clf::linear_from_json(model_text);
  else model = clf::ovr_from_json(model_text);
  const LabelledSet test = test_set(w, e, attack);
  const auto cats = multiclass_categories(cfg);
  const auto result = score(e, attack, cats, test, predict_labels(model, test.x),
                            e == Experiment::Binary && kind == ClassifierKind::Svm);
  io::CsvTable t;
  t.comments = {provenance_line(cfg), "model=" + model_path.filename().string()};
  t.header = {"group", "model", "accuracy", "precision", "recall", "f1"};
  const std::string name = model_name(kind, augmentation_from_string(j.at("augmentation").get<std::string>()));
  for (const auto& row : result.order) {
    const auto& m = result.rows.at(row);
    t.rows.push_back({row, name, eval::render_percent(m.accuracy), eval::render_percent(m.precision),
                      eval::render_percent(m.recall), eval::render_percent(m.f1, true)});
  }
  io::write_text(report_out, io::to_csv(t));
  return result;
}

}  // namespace nidda::pipeline
