#include "nidda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "nidda/error.hpp"

namespace nidda::eval {

ConfusionCounts confusion(std::span<const int> labels, std::span<const int> preds, int positive_class) {
  if (labels.size() != preds.size()) {
    throw DimensionError("confusion: " + std::to_string(labels.size()) + " labels vs " +
                         std::to_string(preds.size()) + " predictions");
  }
  ConfusionCounts c;
  c.positive_class = positive_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool actual = labels[i] == positive_class;
    const bool predicted = preds[i] == positive_class;
    if (actual && predicted) ++c.tp;
    else if (actual) ++c.fn;
    else if (predicted) ++c.fp;
    else ++c.tn;
  }
  return c;
}

MetricsReport metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw DomainError("metrics: no evaluated records");
  MetricsReport m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

std::string render_percent(std::optional<double> v, bool is_f1) {
  if (!v) return is_f1 ? "-" : "0.00";
  return fmt::format("{:.2f}", 100.0 * *v);
}

void TrialResult::add(const std::string& row, const MetricsReport& m) {
  if (!rows.contains(row)) order.push_back(row);
  rows[row] = m;
}

double trial_score(const TrialResult& r) {
  if (r.rows.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [_, m] : r.rows) total += m.f1 ? *m.f1 : m.accuracy;
  return total / static_cast<double>(r.rows.size());
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Summary summarize(const std::vector<std::optional<double>>& values, bool zero_if_undefined) {
  Summary s;
  const bool any = std::any_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
  if (!any || values.empty()) return s;
  std::vector<double> x;
  for (const auto& v : values) {
    if (v) x.push_back(*v);
    else if (zero_if_undefined) x.push_back(0.0);
  }
  s.defined = true;
  s.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(x.size() - 1));
  }
  return s;
}

}  // namespace

std::vector<std::size_t> reject_anomalies(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n < 3) return {};
  const std::vector<double> s(scores.begin(), scores.end());
  const double med = median(s);
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = std::fabs(s[i] - med);
  const double mad = median(dev);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (dev[i] > 3.0 * mad && dev[i] > 1e-12) out.push_back(i);
  }
  std::stable_sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) { return dev[a] > dev[b]; });
  if (out.size() > n / 3) out.resize(n / 3);
  return out;
}

TrialAggregate aggregate(std::span<const TrialResult> runs, std::span<const std::size_t> accepted) {
  TrialAggregate agg;
  agg.accepted.assign(accepted.begin(), accepted.end());
  if (accepted.empty()) {
    agg.failed = true;
    return agg;
  }
  for (const auto i : accepted) {
    for (const auto& row : runs[i].order) {
      if (std::find(agg.order.begin(), agg.order.end(), row) == agg.order.end()) agg.order.push_back(row);
    }
  }
  for (const auto& row : agg.order) {
    std::vector<std::optional<double>> acc, prec, rec, f1;
    for (const auto i : accepted) {
      const auto it = runs[i].rows.find(row);
      if (it == runs[i].rows.end()) continue;
      acc.emplace_back(it->second.accuracy);
      prec.push_back(it->second.precision);
      rec.push_back(it->second.recall);
      f1.push_back(it->second.f1);
    }
    AggregateRow r;
    r.accuracy = summarize(acc, true);
    r.precision = summarize(prec, true);
    r.recall = summarize(rec, true);
    r.f1 = summarize(f1, true);
    agg.rows[row] = r;
  }
  return agg;
}

TrialAggregate run_trials(const Trial& trial, std::size_t repeats, RandomSource& rng) {
  if (repeats == 0) throw ConfigError("run_trials: repeats must be positive");
  std::vector<TrialResult> runs(repeats);
  std::vector<bool> ok(repeats, false);
  std::vector<std::string> errors(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    RandomSource child = rng.split();
    try {
      runs[r] = trial(r, child);
      ok[r] = true;
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  }
  std::vector<std::size_t> candidates;
  std::vector<double> scores;
  for (std::size_t r = 0; r < repeats; ++r) {
    if (ok[r]) {
      candidates.push_back(r);
      scores.push_back(trial_score(runs[r]));
    }
  }
  const auto rejected_local = reject_anomalies(scores);
  std::vector<bool> rejected(repeats, false);
  for (auto i : rejected_local) rejected[candidates[i]] = true;
  std::vector<std::size_t> accepted;
  std::vector<std::string> diagnostics;
  std::vector<std::size_t> rejected_ids;
  for (std::size_t r = 0; r < repeats; ++r) {
    if (!ok[r]) {
      rejected_ids.push_back(r);
      diagnostics.push_back(fmt::format("run {}: failed: {}", r, errors[r]));
    } else if (rejected[r]) {
      rejected_ids.push_back(r);
      diagnostics.push_back(fmt::format("run {}: rejected as anomalous (score {:.4f})", r, trial_score(runs[r])));
    } else {
      accepted.push_back(r);
    }
  }
  TrialAggregate agg = aggregate(runs, accepted);
  agg.rejected = std::move(rejected_ids);
  agg.diagnostics = std::move(diagnostics);
  return agg;
}

std::string render_summary(const Summary& s, bool is_f1) {
  if (!s.defined) return is_f1 ? "-" : "0.00";
  return fmt::format("{:.2f} ± {:.2f}", 100.0 * s.mean, 100.0 * s.std);
}

}  // namespace nidda::eval
