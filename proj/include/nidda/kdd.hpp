#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nidda/random.hpp"

namespace nidda::kdd {

inline constexpr std::size_t kNumColumns = 41;   // feature tokens per record
inline constexpr std::size_t kFeatureDim = 38;   // numeric features kept
inline constexpr std::array<std::size_t, 3> kSymbolicColumns{1, 2, 3};  // protocol_type, service, flag

/// Source column of each kept feature, in output order.
const std::array<std::size_t, kFeatureDim>& feature_columns();
/// KDD column names, indexed by source column.
const std::array<std::string_view, kNumColumns>& column_names();

struct RawRecord {
  std::vector<std::string> values;  // kNumColumns tokens, verbatim
  std::string label;                // trailing period stripped
  std::size_t line = 0;             // 1-based source line
};

/// Parses comma-separated KDD records. Blank lines are skipped; every other
/// line must carry exactly 42 tokens and valid UTF-8.
std::vector<RawRecord> parse_records(std::istream& in);
/// Same, reading a plain or gzip-compressed file.
std::vector<RawRecord> parse_records_file(const std::filesystem::path& path);
RawRecord parse_line(std::string_view line, std::size_t line_no);
/// Inverse of parse_line (the label regains its trailing period).
std::string format_record(const RawRecord& r);

enum class Category { Normal = 0, Dos, Probe, U2R, R2L };
inline constexpr std::size_t kNumCategories = 5;
std::string_view to_string(Category c);
Category category_from_string(std::string_view s);

struct ClassLabel {
  Category coarse = Category::Normal;
  std::string fine;
  bool operator==(const ClassLabel&) const = default;
};

/// Maps a fine attack name (with or without underscores) to its category.
ClassLabel map_label(std::string_view fine);
/// Attack names compare equal ignoring underscores ("guess_passwd" == "guesspasswd").
bool same_attack(std::string_view a, std::string_view b);

std::pair<Eigen::VectorXd, ClassLabel> encode_features(const RawRecord& r);

/// Encoded records: one feature row per record.
struct EncodedSet {
  Eigen::MatrixXd x;
  std::vector<ClassLabel> labels;

  std::size_t size() const { return labels.size(); }
  EncodedSet subset(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> rows_of(std::string_view fine) const;
  std::vector<std::size_t> rows_of(Category c) const;
};

EncodedSet encode_all(std::span<const RawRecord> records);
std::array<std::size_t, kNumCategories> count_by_category(const EncodedSet& s);
std::map<std::string, std::size_t> count_by_fine(const EncodedSet& s);

/// Per-feature z-score transform. Features that only take values in {0, 1}
/// on the fitting data pass through unchanged.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  std::vector<bool> continuous;

  static constexpr double kStdFloor = 1e-8;

  Eigen::Index dim() const { return mean.size(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& z) const;
};

/// Population statistics; throws on empty input.
Normalizer fit_normalizer(const Eigen::MatrixXd& train);
inline Eigen::VectorXd apply_normalizer(const Normalizer& n, const Eigen::VectorXd& x) { return n.apply(x); }

struct SeedSource {
  bool from_train = true;
  std::vector<std::size_t> rows;  // row indices into the source split
};

struct SmallSamplePartition {
  std::vector<std::string> attack_types;  // configured order
  std::map<std::string, Eigen::MatrixXd> seeds;
  std::map<std::string, SeedSource> seed_sources;
  std::vector<std::size_t> reduced_test;  // test rows left for scoring
  std::vector<std::size_t> normal_pool;   // training rows labelled normal

  const Eigen::MatrixXd& seeds_of(std::string_view type) const;
};

/// Picks M seed records per attack type: from training when it holds at
/// least M records of the type, otherwise from test (those records are then
/// dropped from reduced_test).
SmallSamplePartition partition_small_sample(const EncodedSet& train, const EncodedSet& test,
                                            std::span<const std::string> attack_types,
                                            std::size_t m, RandomSource& rng);

/// Record counts per coarse class of the 10% training file.
inline constexpr std::array<std::size_t, kNumCategories> kTenPercentTrainingCounts{
    97278, 391458, 4107, 52, 1126};
inline constexpr std::array<std::size_t, kNumCategories> kTestCounts{60593, 229853, 4166, 228, 16189};

struct SmallSampleType {
  std::string_view name;
  Category category;
  std::size_t train;
  std::size_t test;
};
/// The eight scarce attack types with their training/testing record counts.
inline constexpr std::array<SmallSampleType, 8> kSmallSampleTypes{{
    {"apache2", Category::Dos, 0, 794},
    {"mailbomb", Category::Dos, 0, 5000},
    {"processtable", Category::Dos, 0, 759},
    {"mscan", Category::Probe, 0, 1053},
    {"saint", Category::Probe, 0, 736},
    {"guesspasswd", Category::R2L, 53, 4367},
    {"snmpgetattack", Category::R2L, 0, 7741},
    {"snmpguess", Category::R2L, 0, 2406},
}};

}  // namespace nidda::kdd
