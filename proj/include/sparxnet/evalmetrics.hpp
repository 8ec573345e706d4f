#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparxnet/data.hpp"
#include "sparxnet/error.hpp"
#include "sparxnet/model.hpp"

namespace sparxnet {

inline double mse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw InvalidArgument("mse of an empty sample");
  if (predictions.size() != targets.size()) throw DimensionError("mse: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    total += e * e;
  }
  return total / static_cast<double>(predictions.size());
}

inline double mse(const Vector& predictions, const Vector& targets) {
  return mse(std::span<const double>(predictions.data(), static_cast<std::size_t>(predictions.size())),
             std::span<const double>(targets.data(), static_cast<std::size_t>(targets.size())));
}

/// Area under the ROC curve in Mann-Whitney form: the probability that a
/// positive outscores a negative, ties counting one half. Computed from
/// midranks after one sort.
inline double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: length mismatch");
  std::size_t positives = 0;
  for (double l : labels) {
    if (l != 0.0 && l != 1.0) throw InvalidArgument("auc labels must be 0 or 1");
    positives += l == 1.0;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw InvalidArgument("auc needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (1-based) midranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1.0) rank_sum += midrank;
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(negatives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

inline double auc(const Vector& scores, const Vector& labels) {
  return auc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())),
             std::span<const double>(labels.data(), static_cast<std::size_t>(labels.size())));
}

struct RecoveryResult {
  std::vector<std::size_t> selected;  // distinct, ascending
  std::vector<std::size_t> truth;     // distinct, ascending
  double rate = 0.0;                  // |selected & truth| / |truth|
};

inline RecoveryResult recovery_rate(std::span<const std::size_t> selected_indices,
                                    std::span<const std::size_t> true_indices) {
  if (true_indices.empty()) throw InvalidArgument("true feature set must be non-empty");
  const std::set<std::size_t> s(selected_indices.begin(), selected_indices.end());
  const std::set<std::size_t> t(true_indices.begin(), true_indices.end());
  RecoveryResult r{{s.begin(), s.end()}, {t.begin(), t.end()}, 0.0};
  std::size_t hits = 0;
  for (auto i : s) hits += t.contains(i);
  r.rate = static_cast<double>(hits) / static_cast<double>(t.size());
  return r;
}

inline RecoveryResult recovery_rate(const FeatureSelection& selection, std::span<const std::size_t> true_indices) {
  std::vector<std::size_t> chosen;
  for (const auto& s : selection) chosen.push_back(s.feature);
  return recovery_rate(chosen, true_indices);
}

/// Mean and sample (N-1) standard deviation; std is 0 for a single value.
struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

inline Summary summarize(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("cannot summarise an empty sample");
  Summary s;
  s.count = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

/// One cell of a results table: a metric for one (model, dataset) pair over seeds.
struct ResultRow {
  std::string model;
  std::string dataset;
  std::string metric;
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
};

inline nlohmann::json results_json(std::span<const ResultRow> rows) {
  auto out = nlohmann::json::array();
  for (const auto& r : rows) {
    const auto s = summarize(r.values);
    out.push_back({{"model", r.model},
                   {"dataset", r.dataset},
                   {"metric", r.metric},
                   {"seeds", r.seeds},
                   {"values", r.values},
                   {"mean", s.mean},
                   {"std", s.std}});
  }
  return out;
}

inline std::string results_csv(std::span<const ResultRow> rows) {
  std::string out = "model,dataset,metric,seeds,mean,std\n";
  for (const auto& r : rows) {
    const auto s = summarize(r.values);
    std::string seeds;
    for (std::size_t i = 0; i < r.seeds.size(); ++i) seeds += (i ? " " : "") + std::to_string(r.seeds[i]);
    out += r.model + "," + r.dataset + "," + r.metric + "," + seeds + "," + detail::format_double(s.mean) + "," +
           detail::format_double(s.std) + "\n";
  }
  return out;
}

}  // namespace sparxnet
