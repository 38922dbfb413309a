#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nidda/random.hpp"

namespace nidda::eval {

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  int positive_class = 1;

  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Counts with `positive_class` as positive and every other label negative.
ConfusionCounts confusion(std::span<const int> labels, std::span<const int> preds, int positive_class);

/// Ratios in [0, 1]. Precision, recall and F1 are empty when their
/// denominator is zero.
struct MetricsReport {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

MetricsReport metrics(const ConfusionCounts& c);

/// Percent with two decimals; an undefined precision/recall prints "0.00",
/// an undefined F1 prints "-".
std::string render_percent(std::optional<double> v, bool is_f1 = false);

/// Metrics of one repeat, keyed by table row (intrusion type or category).
struct TrialResult {
  std::vector<std::string> order;
  std::map<std::string, MetricsReport> rows;

  void add(const std::string& row, const MetricsReport& m);
};

/// The value the rejection rule looks at: F1 (accuracy where F1 is
/// undefined), averaged over rows.
double trial_score(const TrialResult& r);

/// Indices of anomalous scores: deviation from the median above 3 MADs,
/// most deviant first, at most floor(n / 3) of them.
std::vector<std::size_t> reject_anomalies(std::span<const double> scores);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
  bool defined = false;
};

struct AggregateRow {
  Summary accuracy, precision, recall, f1;
};

struct TrialAggregate {
  std::vector<std::string> order;
  std::map<std::string, AggregateRow> rows;
  std::vector<std::size_t> accepted;
  std::vector<std::size_t> rejected;
  std::vector<std::string> diagnostics;  // one line per rejected or failed run
  bool failed = false;
};

/// Mean and sample standard deviation per metric over the given runs.
/// Undefined precision/recall/F1 count as 0 unless undefined in every run.
TrialAggregate aggregate(std::span<const TrialResult> runs, std::span<const std::size_t> accepted);

/// Runs `repeats` trials on split random streams, rejects anomalies and
/// aggregates the rest. A trial that throws counts as rejected.
using Trial = std::function<TrialResult(std::size_t repeat, RandomSource& rng)>;
TrialAggregate run_trials(const Trial& trial, std::size_t repeats, RandomSource& rng);

std::string render_summary(const Summary& s, bool is_f1 = false);

}  // namespace nidda::eval
