#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pfv::prompts {

// Asset names (files under assets/prompts/).
inline constexpr std::string_view kStepBaselineSystem = "step_baseline_system";
inline constexpr std::string_view kStepBaselineUser = "step_baseline_user";
inline constexpr std::string_view kStepRewriter = "step_rewriter";
inline constexpr std::string_view kBlockVerifier = "block_verifier";
inline constexpr std::string_view kStepCalibrator = "step_calibrator";
inline constexpr std::string_view kSelfRepair = "self_repair";
inline constexpr std::string_view kPdfToLatex = "pdf_to_latex";
inline constexpr std::string_view kTriage = "triage";
inline constexpr std::string_view kPaperBaseline = "paper_baseline";
inline constexpr std::string_view kPaperRewriter = "paper_rewriter";
inline constexpr std::string_view kPaperRegeneration = "paper_regeneration";
inline constexpr std::string_view kFaithfulness = "faithfulness";
inline constexpr std::string_view kPaperCalibrator = "paper_calibrator";
inline constexpr std::string_view kLocationJudge = "location_judge";

// Literal slot in the single-theorem rewriter template.
inline constexpr std::string_view kPasteMarker = "[PASTE THEOREM AND PROOF HERE]";

/// Template text with trailing whitespace removed. Throws ConfigError for unknown names.
const std::string& get(std::string_view name);

std::vector<std::string> names();

using Values = std::map<std::string, std::string, std::less<>>;

/// Single left-to-right pass replacing "{name}" for every name in `values`.
/// Other braces (JSON examples, LaTeX) are left untouched and substituted
/// text is never rescanned.
std::string render(std::string_view text, const Values& values);

}  // namespace pfv::prompts
