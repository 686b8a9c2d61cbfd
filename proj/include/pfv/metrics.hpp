#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pfv/error.hpp"

namespace pfv {

/// Ground truth Y and prediction Ŷ for one item. T is a step index or a
/// canonical location string.
template <typename T>
struct LabeledPrediction {
  std::string item_id;
  std::set<T> truth;
  std::set<T> predicted;
};

/// Ratio that may be undefined (0/0); rendered "n/a".
struct Ratio {
  std::size_t num = 0;
  std::size_t den = 0;

  std::optional<double> value() const {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  }
  std::string str() const;
  nlohmann::json json() const {
    auto v = value();
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  bool operator==(const Ratio&) const = default;
};

struct MetricSummary {
  std::size_t items = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t proof_tp = 0, proof_fp = 0, proof_fn = 0, proof_tn = 0;
  std::size_t covered = 0, positives = 0;  // items with Y ≠ ∅ and Y ⊆ Ŷ; items with Y ≠ ∅
  std::size_t false_errors = 0;            // Σ|Ŷ \ Y|

  Ratio precision() const { return {tp, tp + fp}; }
  Ratio recall() const { return {tp, tp + fn}; }
  Ratio proof_precision() const { return {proof_tp, proof_tp + proof_fp}; }
  Ratio proof_recall() const { return {proof_tp, proof_tp + proof_fn}; }
  Ratio coverage() const { return {covered, positives}; }
  Ratio mean_false_errors() const { return {false_errors, items}; }

  bool operator==(const MetricSummary&) const = default;
};

template <typename T>
MetricSummary summarize(const std::vector<LabeledPrediction<T>>& preds) {
  std::set<std::string> ids;
  for (const auto& p : preds)
    if (!ids.insert(p.item_id).second) throw Error(Errc::SchemaViolation, "duplicate item id '" + p.item_id + "'");
  MetricSummary s;
  s.items = preds.size();
  for (const auto& p : preds) {
    std::size_t hit = 0;
    for (const auto& y : p.predicted) hit += p.truth.count(y);
    s.tp += hit;
    s.fp += p.predicted.size() - hit;
    s.fn += p.truth.size() - hit;
    s.false_errors += p.predicted.size() - hit;

    const bool positive = !p.truth.empty();
    const bool flagged = !p.predicted.empty();
    if (positive && flagged) ++s.proof_tp;
    if (!positive && flagged) ++s.proof_fp;
    if (positive && !flagged) ++s.proof_fn;
    if (!positive && !flagged) ++s.proof_tn;
    if (positive) {
      ++s.positives;
      if (hit == p.truth.size()) ++s.covered;
    }
  }
  return s;
}

/// Per item, the predicted set of each rollout in rollout order.
template <typename T>
struct RolloutPredictions {
  std::string item_id;
  std::set<T> truth;
  std::vector<std::set<T>> rollouts;
};

/// Ŷ for rollout prefix k: union of the first k rollout sets.
template <typename T>
std::set<T> union_prefix(const std::vector<std::set<T>>& rollouts, std::size_t k) {
  std::set<T> out;
  for (std::size_t i = 0; i < k && i < rollouts.size(); ++i) out.insert(rollouts[i].begin(), rollouts[i].end());
  return out;
}

template <typename T>
std::vector<std::pair<std::size_t, MetricSummary>> k_sweep(const std::vector<RolloutPredictions<T>>& items,
                                                           const std::vector<std::size_t>& ks) {
  std::size_t kmax = 0;
  for (auto k : ks) {
    if (k == 0) throw Error(Errc::ConfigError, "k must be at least 1");
    kmax = std::max(kmax, k);
  }
  for (const auto& it : items)
    if (it.rollouts.size() < kmax)
      throw Error(Errc::InsufficientRollouts, "item '" + it.item_id + "' has " + std::to_string(it.rollouts.size()) +
                                                  " rollouts, need " + std::to_string(kmax));
  std::vector<std::pair<std::size_t, MetricSummary>> out;
  for (auto k : ks) {
    std::vector<LabeledPrediction<T>> preds;
    preds.reserve(items.size());
    for (const auto& it : items) preds.push_back({it.item_id, it.truth, union_prefix(it.rollouts, k)});
    out.emplace_back(k, summarize(preds));
  }
  return out;
}

nlohmann::json to_json(const MetricSummary& s);

inline constexpr const char* kSweepCsvHeader =
    "k,items,tp,fp,fn,precision,recall,proof_tp,proof_fp,proof_fn,proof_precision,proof_recall,coverage,"
    "mean_false_errors";

std::string csv_row(std::size_t k, const MetricSummary& s);
std::string sweep_csv(const std::vector<std::pair<std::size_t, MetricSummary>>& sweep);

}  // namespace pfv
