#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pfv/core.hpp"
#include "pfv/gateway.hpp"
#include "pfv/prompts.hpp"
#include "pfv/text.hpp"

namespace pfv {

// Ledger stage labels.
namespace stage {
inline constexpr const char* kRewrite = "rewrite";
inline constexpr const char* kRepair = "repair";
inline constexpr const char* kRegenerate = "regenerate";
inline constexpr const char* kFaithfulness = "faithfulness";
inline constexpr const char* kVerify = "verify";
inline constexpr const char* kCalibrate = "calibrate";
inline constexpr const char* kBaseline = "baseline";
inline constexpr const char* kJudge = "judge";
inline constexpr const char* kTriage = "triage";
inline constexpr const char* kPdfToLatex = "pdf2tex";
}  // namespace stage

enum class TaskMode { Step, Paper };

std::string_view mode_name(TaskMode mode) noexcept;

/// A problem with a step-split solution (indexed from 0).
struct StepTask {
  std::string problem;
  std::vector<std::string> steps;
};

/// A paper: LaTeX source plus an optional rendered PDF.
struct PaperTask {
  std::string latex_source;
  std::optional<std::string> pdf;
  std::string pdf_filename = "paper.pdf";
};

using TaskInput = std::variant<StepTask, PaperTask>;

inline TaskMode task_mode(const TaskInput& input) noexcept {
  return std::holds_alternative<StepTask>(input) ? TaskMode::Step : TaskMode::Paper;
}

inline constexpr std::string_view kDefaultStrictness =
    "flag only errors of mathematical substance; ignore typos and style.";

struct PipelineConfig {
  std::string strictness{kDefaultStrictness};
  std::size_t max_repair_rounds = 2;   // step mode self-repair
  std::size_t max_regenerations = 3;   // re-sends after an unparseable or unfaithful rewrite
  bool retry_block_parse = true;       // one more verifier call before recording a parse failure
  bool short_circuit_calibration = true;
  bool prune_unmentioned = false;
  bool parallel_blocks = true;
  bool parallel_rollouts = true;
};

struct TranslationOutcome {
  PseudoFormalProof proof;
  std::string document;  // canonical serialization of `proof`
  std::size_t repair_rounds_used = 0;
  std::vector<std::pair<ModuleId, std::string>> faithfulness_flags;  // from the last check
  std::size_t regeneration_attempts = 0;
  std::vector<std::string> warnings;
};

/// "<step>[i] ...</step>" lines, as the grader and calibrator prompts expect.
std::string format_steps(const std::vector<std::string>& steps);

/// The problem and solution as the rewriter sees them (no step boundaries).
std::string step_source_text(const StepTask& task);

/// Rewriter, then self-repair (step mode) or faithfulness-checked
/// regeneration (paper mode). Throws UnparseableRewrite once the
/// regeneration budget is spent on unparseable output.
TranslationOutcome translate(const TaskInput& input, Gateway& gateway, const PipelineConfig& config,
                             std::size_t rollout = 0);

/// Verifier prompt slots for one module: {contexts}, {established_results},
/// {assertion}, {proof}.
prompts::Values block_prompt_values(const PseudoFormalProof& proof, const ModuleId& id);

struct BlockReport {
  ModuleId id;
  BlockVerdict verdict;
  std::string raw_response;
  bool parse_failure = false;
};

/// One verifier call per module; reports in verification order.
std::vector<BlockReport> verify_blocks(const PseudoFormalProof& proof, Gateway& gateway,
                                       const PipelineConfig& config, std::size_t rollout = 0);

/// The incorrect reports as an error list keyed by module label.
ErrorList block_errors(const std::vector<BlockReport>& reports);

using StepVerdicts = std::vector<bool>;
using Calibrated = std::variant<StepVerdicts, ErrorList>;

struct CalibrationOutcome {
  Calibrated verdict;
  bool short_circuited = false;
  std::optional<CalibrationResult> details;  // step mode, when the calibrator ran
  std::string raw_response;
  std::vector<std::string> warnings;
};

/// Throws CalibrationParseFailure after a failed retry.
CalibrationOutcome calibrate(const TaskInput& input, const TranslationOutcome& translation,
                             const std::vector<BlockReport>& reports, Gateway& gateway,
                             const PipelineConfig& config, std::size_t rollout = 0);

/// Indices whose verdict is false.
std::set<std::size_t> flagged_steps(const StepVerdicts& verdicts);

/// Case-folded, whitespace-collapsed location with trailing punctuation removed.
std::string normalize_location(std::string_view location);

struct RolloutResult {
  std::size_t rollout = 0;
  TranslationOutcome translation;
  std::vector<BlockReport> reports;
  CalibrationOutcome calibration;
  std::map<std::string, TokenUsage> usage;  // per stage, this rollout only
};

RolloutResult run_rollout(const TaskInput& input, Gateway& gateway, const PipelineConfig& config,
                          std::size_t rollout);

struct RolloutRecord {
  std::size_t rollout = 0;
  std::optional<RolloutResult> result;
  std::optional<std::string> failure;
};

struct AggregatedVerdict {
  TaskMode mode = TaskMode::Step;
  std::size_t k = 0;                     // requested
  std::vector<RolloutRecord> rollouts;   // in rollout order
  std::set<std::size_t> flagged_steps;   // step mode
  ErrorList errors;                      // paper mode, deduplicated
  std::vector<std::vector<std::size_t>> error_provenance;  // rollouts reporting errors[i]

  std::size_t effective_k() const;
  bool accepted() const { return mode == TaskMode::Step ? flagged_steps.empty() : errors.empty(); }
};

/// Runs rollouts 0..k-1 (concurrently when configured); never throws for a
/// failed rollout, which is recorded instead.
std::vector<RolloutRecord> execute_rollouts(const TaskInput& input, std::size_t k, Gateway& gateway,
                                            const PipelineConfig& config);

/// Union over the successful rollouts.
AggregatedVerdict aggregate(TaskMode mode, std::vector<RolloutRecord> rollouts);

/// k independent pipelines; throws RolloutsExhausted when none succeeds.
AggregatedVerdict run_rollouts(const TaskInput& input, std::size_t k, Gateway& gateway, const PipelineConfig& config);

nlohmann::json to_json(const PipelineConfig& config);
nlohmann::json to_json(const RolloutResult& result);
nlohmann::json to_json(const AggregatedVerdict& verdict);

/// Plain-text summary of the aggregated verdict.
std::string render_report(const TaskInput& input, const AggregatedVerdict& verdict);

}  // namespace pfv
