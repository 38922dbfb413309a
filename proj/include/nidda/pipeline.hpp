#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nidda/classifiers.hpp"
#include "nidda/dgnn.hpp"
#include "nidda/eval.hpp"
#include "nidda/kdd.hpp"

/// End-to-end orchestration: preprocess -> partition -> augment (PGM, then
/// DGNN) -> train classifiers -> evaluate -> report tables.
namespace nidda::pipeline {

/// Every field maps to a flat JSON key of the same name (see README).
struct PipelineConfig {
  std::string train_path = "kddcup.data_10_percent.gz";
  std::string test_path = "corrected.gz";
  std::string output_dir = "nidda_out";
  std::vector<std::string> attack_types{"apache2", "mailbomb", "processtable", "mscan",
                                        "saint", "guesspasswd", "snmpgetattack", "snmpguess"};
  std::size_t m = 50;
  std::size_t n_synth = 500;
  std::size_t augment_target = 500;
  std::size_t burn_in = 500;
  dgnn::TrainSchedule schedule;
  std::size_t normals_linear = 6000;
  std::size_t normals_dnn = 12000;
  clf::TrainConfig linear;
  clf::TrainConfig dnn = clf::TrainConfig::dnn_defaults();
  std::size_t repeats = 15;
  std::uint64_t rng_seed = 2019;

  std::string to_json() const;
  /// Keys absent from `text` keep the values already in `base`.
  static PipelineConfig from_json(std::string_view text, PipelineConfig base);
  static PipelineConfig from_json(std::string_view text);
  /// Overrides given as key -> string value (CLI flags).
  void apply_overrides(const std::map<std::string, std::string>& overrides);
  static std::vector<std::string> keys();

  /// FNV-1a of the canonical JSON form.
  std::uint64_t hash() const;
  void validate() const;
};

/// Resolves a dataset path: as given, else under $NIDDA_DATA_ROOT, also
/// trying a ".gz" suffix or its removal.
std::filesystem::path resolve_data_path(const std::string& path);

/// "config_hash=<hex> rng_seed=<n>", the first comment line of every CSV.
std::string provenance_line(const PipelineConfig& cfg);

struct PreprocessSummary {
  std::array<std::size_t, kdd::kNumCategories> train_counts{};
  std::array<std::size_t, kdd::kNumCategories> test_counts{};
  std::map<std::string, std::pair<std::size_t, std::size_t>> small_sample_counts;  // type -> (train, test)
  bool matches_training_table = false;
  bool matches_small_sample_table = false;

  std::string to_text() const;
};

PreprocessSummary cmd_preprocess(const PipelineConfig& cfg);

/// Encoded splits plus the normalizer fitted on training records.
struct Dataset {
  kdd::EncodedSet train;
  kdd::EncodedSet test;
  kdd::Normalizer normalizer;
};

Dataset load_preprocessed(const PipelineConfig& cfg);
kdd::SmallSamplePartition make_partition(const PipelineConfig& cfg, const Dataset& data);

struct AugmentOutcome {
  std::string attack_type;
  std::filesystem::path directory;
  Eigen::MatrixXd seeds;
  Eigen::MatrixXd synthesised;
  Eigen::MatrixXd augmented;
};

/// Runs PGM then DGNN for one attack type, or every configured type when
/// `attack_type` is "all".
std::vector<AugmentOutcome> cmd_augment(const PipelineConfig& cfg, const std::string& attack_type);

/// `augment pgm`: seeds CSV -> synthesised CSV with a provenance header.
void run_pgm_file(const PipelineConfig& cfg, const std::filesystem::path& seeds,
                  const std::filesystem::path& out);
/// `augment dgnn`: trains on seeds + synthesised CSVs, writes augmented
/// CSV, checkpoint and loss history.
void run_dgnn_file(const PipelineConfig& cfg, const std::filesystem::path& seeds,
                   const std::filesystem::path& synth, const std::filesystem::path& out,
                   const std::filesystem::path& checkpoint, const std::filesystem::path& history);

enum class Experiment { Binary, MulticlassSvm, MulticlassDnn };
Experiment experiment_from_string(std::string_view s);
std::string_view to_string(Experiment e);

enum class Augmentation { None, Pgm, Full };
Augmentation augmentation_from_string(std::string_view s);
std::string_view to_string(Augmentation a);

enum class ClassifierKind { Logistic, Svm, Dnn };
ClassifierKind classifier_from_string(std::string_view s);
std::string_view to_string(ClassifierKind k);

/// Table row label, e.g. "NID-DA-SVM".
std::string model_name(ClassifierKind k, Augmentation a);

struct ReportRow {
  std::string group;  // intrusion type or category
  std::string model;
  eval::AggregateRow metrics;
  std::vector<std::size_t> accepted;
  std::vector<std::size_t> rejected;
};

struct ExperimentReport {
  Experiment experiment;
  std::vector<ReportRow> rows;
  std::vector<std::string> diagnostics;

  const ReportRow& row(std::string_view group, std::string_view model) const;
};

/// Runs every (model, augmentation) pair of the chosen table and writes
/// reports/<experiment>.csv and .json under the output directory.
ExperimentReport cmd_reproduce(const PipelineConfig& cfg, Experiment experiment);

struct TrainRequest {
  Experiment experiment = Experiment::Binary;
  std::string attack_type;  // binary only
  ClassifierKind classifier = ClassifierKind::Svm;
  Augmentation augmentation = Augmentation::Full;
  std::filesystem::path model_out;
};

/// Trains one classifier on the first repeat's draw and saves it.
void cmd_train(const PipelineConfig& cfg, const TrainRequest& request);
/// Scores a saved classifier on the reduced test split.
eval::TrialResult cmd_evaluate(const PipelineConfig& cfg, const std::filesystem::path& model,
                               const std::filesystem::path& report_out);

}  // namespace nidda::pipeline
