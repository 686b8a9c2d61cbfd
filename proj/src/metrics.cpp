#include "pfv/metrics.hpp"

#include <cstdio>

namespace pfv {

std::string Ratio::str() const {
  auto v = value();
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

nlohmann::json to_json(const MetricSummary& s) {
  return {{"items", s.items},
          {"tp", s.tp},
          {"fp", s.fp},
          {"fn", s.fn},
          {"precision", s.precision().json()},
          {"recall", s.recall().json()},
          {"proof_tp", s.proof_tp},
          {"proof_fp", s.proof_fp},
          {"proof_fn", s.proof_fn},
          {"proof_tn", s.proof_tn},
          {"proof_precision", s.proof_precision().json()},
          {"proof_recall", s.proof_recall().json()},
          {"coverage", s.coverage().json()},
          {"mean_false_errors", s.mean_false_errors().json()}};
}

std::string csv_row(std::size_t k, const MetricSummary& s) {
  std::string row = std::to_string(k);
  for (auto n : {s.items, s.tp, s.fp, s.fn}) row += "," + std::to_string(n);
  row += "," + s.precision().str() + "," + s.recall().str();
  for (auto n : {s.proof_tp, s.proof_fp, s.proof_fn}) row += "," + std::to_string(n);
  row += "," + s.proof_precision().str() + "," + s.proof_recall().str();
  row += "," + s.coverage().str() + "," + s.mean_false_errors().str();
  return row;
}

std::string sweep_csv(const std::vector<std::pair<std::size_t, MetricSummary>>& sweep) {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const auto& [k, s] : sweep) out += csv_row(k, s) + "\n";
  return out;
}

}  // namespace pfv
