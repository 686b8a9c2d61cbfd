#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pfv {

enum class ModuleKind { Theorem, Proposition, Lemma };

std::string_view kind_name(ModuleKind kind) noexcept;

/// Identity of one proof module.
///
/// Propositions carry a plain numeral ("3"), lemmas a dotted numeral whose
/// prefix is their proposition ("3.2"). Theorems are unnumbered in
/// single-theorem documents (empty index) and numbered otherwise.
struct ModuleId {
  ModuleKind kind = ModuleKind::Theorem;
  std::string index;

  static ModuleId theorem(std::string index = {}) { return {ModuleKind::Theorem, std::move(index)}; }
  static ModuleId proposition(std::string index) { return {ModuleKind::Proposition, std::move(index)}; }
  static ModuleId lemma(std::string index) { return {ModuleKind::Lemma, std::move(index)}; }

  /// "Theorem", "Theorem 2", "Proposition 1", "Lemma 1.1".
  std::string label() const;

  auto operator<=>(const ModuleId&) const = default;
};

/// Inverse of ModuleId::label(); nullopt for anything else.
std::optional<ModuleId> parse_module_label(std::string_view label);

/// One (premises, conclusion, proof) unit.
struct ProofModule {
  ModuleId id;
  std::string premises;
  std::string conclusion;
  std::string proof;

  bool operator==(const ProofModule&) const = default;
};

/// Directed pair (from, to). For invocation edges `from` invokes the
/// conclusion of `to`; for scope edges `from` inherits the premises of `to`.
using ModuleEdge = std::pair<ModuleId, ModuleId>;

/// A validated Pseudo-Formal proof: modules in document order, the
/// invocation DAG and the scope-inheritance forest. Immutable once built.
class PseudoFormalProof {
 public:
  /// Validates and builds. Throws pfv::Error with DuplicateId, MalformedId,
  /// BadLemmaPrefix, EmptyConclusion, DanglingEdge, ScopeNotForest,
  /// CycleInDependencyGraph or ForwardReference.
  static PseudoFormalProof build(std::vector<ProofModule> modules, const std::vector<ModuleEdge>& scope_edges,
                                 const std::vector<ModuleEdge>& invoke_edges);

  const std::vector<ProofModule>& modules() const noexcept { return modules_; }
  std::size_t size() const noexcept { return modules_.size(); }
  bool contains(const ModuleId& id) const { return index_.count(id) != 0; }

  const ProofModule& module(const ModuleId& id) const;
  std::size_t document_index(const ModuleId& id) const;
  /// Position in the left-to-right depth-first traversal of the scope forest.
  std::size_t canonical_rank(const ModuleId& id) const;

  std::optional<ModuleId> scope_parent(const ModuleId& id) const;
  /// Scope ancestors, root first, excluding `id` itself.
  std::vector<ModuleId> scope_ancestors(const ModuleId& id) const;
  /// Direct invocation targets in canonical order.
  std::vector<ModuleId> dependencies(const ModuleId& id) const;
  /// Modules whose proofs invoke `id`, in document order.
  std::vector<ModuleId> invokers(const ModuleId& id) const;

  /// Edges sorted by (document index of from, canonical rank of to).
  std::vector<ModuleEdge> invoke_edges() const;
  /// (child, parent) pairs in child document order.
  std::vector<ModuleEdge> scope_edges() const;

  /// Structural equality: same modules in the same order, same forest, same DAG.
  bool operator==(const PseudoFormalProof& other) const;

 private:
  PseudoFormalProof() = default;
  std::size_t at(const ModuleId& id) const;

  std::vector<ProofModule> modules_;
  std::map<ModuleId, std::size_t> index_;
  std::vector<std::optional<std::size_t>> parent_;
  std::vector<std::vector<std::size_t>> out_;  // sorted by canonical rank
  std::vector<std::size_t> rank_;
};

inline PseudoFormalProof build_proof(std::vector<ProofModule> modules, const std::vector<ModuleEdge>& scope_edges,
                                     const std::vector<ModuleEdge>& invoke_edges) {
  return PseudoFormalProof::build(std::move(modules), scope_edges, invoke_edges);
}

/// Premises of every scope ancestor (root first) followed by the module's own,
/// one entry per module, empty premises included.
std::vector<std::pair<ModuleId, std::string>> premise_chain(const PseudoFormalProof& proof, const ModuleId& id);

/// The non-empty entries of premise_chain() joined by blank lines.
std::string realize_premises(const PseudoFormalProof& proof, const ModuleId& id);

/// Reverse topological order of the invocation DAG; ties broken by document order.
std::vector<ModuleId> verification_order(const PseudoFormalProof& proof);

struct StatementRef {
  ModuleId id;
  std::string premises;
  std::string conclusion;

  bool operator==(const StatementRef&) const = default;
};

/// Everything a block verifier may look at for one module.
struct ModuleContext {
  ModuleId id;
  std::vector<std::pair<ModuleId, std::string>> ancestor_premises;  // root first
  std::vector<StatementRef> dependency_statements;                  // canonical order
  std::string own_premises;
  std::string own_conclusion;
  std::string own_proof;

  bool operator==(const ModuleContext&) const = default;
};

ModuleContext module_context(const PseudoFormalProof& proof, const ModuleId& id);

/// Canonical text rendering of a context; its length is what the bound constrains.
std::string serialize_context(const ModuleContext& context);

/// Fixed serialization overhead factor for the context-length bound.
inline constexpr std::size_t kContextOverheadConstant = 4;

struct GoodnessLimits {
  std::optional<std::size_t> max_depth;
  std::optional<std::size_t> max_block_len;
  std::optional<std::size_t> max_out_degree;
};

struct GoodnessReport {
  std::size_t depth = 0;           // D: longest root-to-node path in the scope forest
  std::size_t max_block_len = 0;   // L, in characters
  std::size_t max_out_degree = 0;
  std::size_t context_bound = 0;   // L * (D + L + 1)
  std::size_t overhead_constant = kContextOverheadConstant;
  std::map<ModuleId, std::size_t> per_module_context_len;
  std::vector<ModuleId> over_bound;          // context longer than overhead_constant * context_bound
  std::vector<std::string> limit_violations; // against caller-supplied GoodnessLimits
  std::vector<ModuleId> shared_scope_nodes;  // invoked by several theorems, parented to the first

  bool good() const noexcept { return over_bound.empty() && limit_violations.empty(); }
};

GoodnessReport goodness_report(const PseudoFormalProof& proof, const GoodnessLimits& limits = {});

}  // namespace pfv
