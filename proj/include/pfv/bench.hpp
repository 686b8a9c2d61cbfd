#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfv/gateway.hpp"
#include "pfv/metrics.hpp"
#include "pfv/pipeline.hpp"

namespace pfv {

struct StepBenchItem {
  std::string item_id;
  std::string problem;
  std::vector<std::string> steps;
  std::vector<bool> labels;  // true = correct step

  std::set<std::size_t> incorrect_steps() const;
};

struct PaperBenchItem {
  std::string item_id;
  std::string latex_source;
  std::optional<std::string> pdf;
  std::vector<std::string> error_locations;
  std::string revision_comment;
};

/// JSON lines {id, problem, steps, labels}. Throws SchemaViolation with the line number.
std::vector<StepBenchItem> load_step_dataset(const std::filesystem::path& path);

/// JSON lines {id, latex_source, error_locations, revision_comment[, pdf_path | pdf_base64]}.
/// error_locations may be a string or a list; entries are split on commas and "and".
/// pdf_path is resolved relative to the dataset file.
std::vector<PaperBenchItem> load_paper_dataset(const std::filesystem::path& path);

std::vector<std::string> split_locations(std::string_view text);

enum class MatchPolicy { Normalized, Judge };

std::string_view policy_name(MatchPolicy policy) noexcept;

struct MatchDecision {
  std::string predicted_location;
  std::optional<std::string> matched_truth;
  MatchPolicy method = MatchPolicy::Normalized;
  std::optional<std::string> warning;  // judge unavailable, fell back to Normalized
};

/// Remembers judge answers per (predicted, truth) pair so sweeps do not repeat calls.
class JudgeCache {
 public:
  std::optional<bool> find(const std::string& predicted, const std::string& truth) const;
  void store(const std::string& predicted, const std::string& truth, bool same);

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, bool> answers_;
};

/// First truth matching `predicted`. Judge policy asks one yes/no question per
/// pair not already equal under normalization; on JudgeUnavailable the
/// decision falls back to Normalized and carries a warning.
MatchDecision match_location(std::string_view predicted, const std::vector<std::string>& truths, MatchPolicy policy,
                             Gateway* gateway = nullptr, JudgeCache* cache = nullptr);

/// Greedy in prediction order; each truth is matched at most once.
std::vector<MatchDecision> match_locations(const std::vector<std::string>& predicted,
                                           const std::vector<std::string>& truths, MatchPolicy policy,
                                           Gateway* gateway = nullptr, JudgeCache* cache = nullptr);

/// Truth and prediction sets for a paper item: truths by normalized location; predictions
/// mapped to the truth they matched, or kept as their own normalized key.
LabeledPrediction<std::string> paper_prediction(const std::string& item_id, const std::vector<std::string>& truths,
                                                const std::vector<MatchDecision>& matches);

enum class Method { Baseline, PF };

std::string_view method_name(Method method) noexcept;

struct BenchConfig {
  Method method = Method::PF;
  std::vector<std::size_t> ks{1};
  PipelineConfig pipeline;
  MatchPolicy match_policy = MatchPolicy::Normalized;
};

template <typename T>
struct Attempt {
  std::optional<T> value;
  std::string failure;
};

/// One grader prompt per rollout; a response that fails to parse is retried once.
std::vector<Attempt<std::set<std::size_t>>> run_baseline_judge(const StepBenchItem& item, std::size_t k,
                                                                Gateway& gateway);
std::vector<Attempt<ErrorList>> run_baseline_judge(const PaperBenchItem& item, std::size_t k, Gateway& gateway);

struct StepItemRecord {
  std::string item_id;
  std::set<std::size_t> truth;
  std::vector<Attempt<std::set<std::size_t>>> rollouts;
  std::set<std::size_t> predicted;  // union over successful rollouts
};

struct PaperItemRecord {
  std::string item_id;
  std::vector<std::string> truths;
  std::vector<Attempt<ErrorList>> rollouts;
  ErrorList predicted;  // deduplicated union
  std::vector<MatchDecision> matches;
};

using Sweep = std::vector<std::pair<std::size_t, MetricSummary>>;

struct BenchOutcome {
  MetricSummary summary;                 // at k = max(ks), all items with a successful rollout
  Sweep sweep;                           // items with at least max(ks) successful rollouts
  std::vector<std::string> failed_items; // every rollout failed
  std::vector<std::string> excluded_from_sweep;
  std::vector<std::string> warnings;
  nlohmann::json manifest;
};

struct StepBenchResult {
  std::vector<StepItemRecord> items;
  BenchOutcome outcome;
};

struct PaperBenchResult {
  std::vector<PaperItemRecord> items;
  BenchOutcome outcome;
};

StepBenchResult run_step_benchmark(const std::vector<StepBenchItem>& dataset, const BenchConfig& config,
                                   Gateway& gateway);
PaperBenchResult run_paper_benchmark(const std::vector<PaperBenchItem>& dataset, const BenchConfig& config,
                                     Gateway& gateway);

nlohmann::json to_json(const BenchConfig& config);

}  // namespace pfv
