#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pfv/core.hpp"

namespace pfv {

// ---------------------------------------------------------------------------
// Pseudo-Formal XML-tag documents

enum class BlockTag {
  TheoremStatement,
  PropositionStatement,
  LemmaStatement,
  LemmaProof,
  PropositionProof,
  TheoremProof,
};

std::string_view tag_name(BlockTag tag) noexcept;

struct PfBlock {
  BlockTag tag = BlockTag::TheoremStatement;
  std::optional<std::string> id;
  std::string body;       // trimmed
  std::size_t line = 0;   // 1-based line of the opening tag

  bool operator==(const PfBlock& o) const { return tag == o.tag && id == o.id && body == o.body; }
};

struct PfDocument {
  std::vector<PfBlock> blocks;
};

/// Strict top-level tag parser. Tags are recognised only at the start of a
/// line; closing tags only at the end of one. Errors carry the line number.
PfDocument parse_pf_document(std::string_view text);

enum class TheoremMode { SingleTheorem, MultiTheorem };

struct ProofBuildOptions {
  TheoremMode mode = TheoremMode::SingleTheorem;
  /// Drop structural invocation edges whose target is never mentioned
  /// ("Lemma 2.1", "Propositions 1, 3", ...) in the invoking proof.
  bool prune_unmentioned = false;
};

/// Pairs statements with proofs and builds the proof graph.
PseudoFormalProof to_proof(const PfDocument& doc, const ProofBuildOptions& options);

/// Builds scope forest and invocation edges for modules laid out like a
/// rewriter document (theorems, numbered propositions, k.j lemmas):
///   - a theorem invokes every proposition, plus earlier theorems;
///   - proposition k invokes its own lemmas and propositions < k;
///   - lemma k.j invokes lemmas k.i (i < j) and propositions < k;
///   - lemma k.j is scoped under proposition k; a proposition under the
///     first theorem that invokes it.
PseudoFormalProof assemble_structured_proof(std::vector<ProofModule> modules, const ProofBuildOptions& options);

/// Canonical tag document for a proof laid out as above. Throws
/// UnserializableText when module text would be read back as a delimiter.
std::string serialize_proof(const PseudoFormalProof& proof);

struct StatementParts {
  std::string premises;
  std::string conclusion;
};

/// Splits "Assumptions / Conditions / Definitions. ... Statement : ..." bodies.
StatementParts split_statement(std::string_view body);
std::string render_statement(std::string_view premises, std::string_view conclusion);

/// Result references such as "Lemma 2.1", "Prop. 4", "Propositions 1, 3 and 5".
std::set<ModuleId> scan_mentions(std::string_view text);

// ---------------------------------------------------------------------------
// Model response grammars

struct BlockVerdict {
  bool correct = true;
  std::optional<std::string> error_description;  // present iff !correct

  bool operator==(const BlockVerdict&) const = default;
};

/// Trailing JSON object (fenced or bare) with "verdict" CORRECT / INCORRECT.
BlockVerdict parse_block_verdict(std::string_view response);

struct FaithfulnessVerdict {
  bool faithful = true;
  std::optional<std::string> error_description;  // present iff !faithful

  bool operator==(const FaithfulnessVerdict&) const = default;
};

FaithfulnessVerdict parse_faithfulness_verdict(std::string_view response);

/// Last "Verdict: yes, no, ..." line; true means the step is correct.
std::vector<bool> parse_step_verdict_line(std::string_view response, std::size_t num_steps);

enum class FlagStatus { Genuine, FalseAlarm };

struct FlagAudit {
  std::string source;
  FlagStatus status = FlagStatus::Genuine;
  int original_step = -1;
  std::string explanation;

  bool operator==(const FlagAudit&) const = default;
};

struct AdditionalError {
  int original_step = -1;
  std::string description;

  bool operator==(const AdditionalError&) const = default;
};

struct CalibrationResult {
  std::vector<FlagAudit> flag_audits;
  std::vector<AdditionalError> additional_errors;
  std::vector<bool> step_verdicts;
  int first_incorrect_step = -1;
  std::vector<std::string> warnings;
};

/// <calibration> block; first_incorrect_step is recomputed from step_verdicts
/// when the two disagree (a warning is recorded).
CalibrationResult parse_calibration(std::string_view response, std::size_t num_steps);

struct LocatedError {
  std::string location;
  std::string description;

  bool operator==(const LocatedError&) const = default;
};

using ErrorList = std::vector<LocatedError>;

/// Last <errors> block. Locations are returned verbatim.
ErrorList parse_error_list(std::string_view response);
std::string render_error_list(const ErrorList& errors);

}  // namespace pfv
