#include "pfv/core.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <queue>
#include <set>

#include "pfv/error.hpp"
#include "pfv/util.hpp"

namespace pfv {

namespace {

bool is_numeral(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

bool is_theorem_index(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) != 0; });
}

void check_id_shape(const ModuleId& id) {
  switch (id.kind) {
    case ModuleKind::Theorem:
      if (!is_theorem_index(id.index)) throw Error(Errc::MalformedId, "bad theorem index '" + id.index + "'");
      return;
    case ModuleKind::Proposition:
      if (!is_numeral(id.index)) throw Error(Errc::MalformedId, "bad proposition index '" + id.index + "'");
      return;
    case ModuleKind::Lemma: {
      auto dot = id.index.find('.');
      if (dot == std::string::npos || id.index.find('.', dot + 1) != std::string::npos ||
          !is_numeral(std::string_view(id.index).substr(0, dot)) ||
          !is_numeral(std::string_view(id.index).substr(dot + 1)))
        throw Error(Errc::BadLemmaPrefix, "lemma index '" + id.index + "' must have the form k.j");
      return;
    }
  }
}

std::string describe_cycle(const std::vector<ProofModule>& modules, const std::vector<std::size_t>& cycle) {
  std::string out;
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    if (i) out += " -> ";
    out += modules[cycle[i]].id.label();
  }
  return out;
}

}  // namespace

std::string_view kind_name(ModuleKind kind) noexcept {
  switch (kind) {
    case ModuleKind::Theorem: return "Theorem";
    case ModuleKind::Proposition: return "Proposition";
    case ModuleKind::Lemma: return "Lemma";
  }
  return "?";
}

std::string ModuleId::label() const {
  std::string out(kind_name(kind));
  if (!index.empty()) {
    out += ' ';
    out += index;
  }
  return out;
}

std::optional<ModuleId> parse_module_label(std::string_view label) {
  label = trim(label);
  for (auto kind : {ModuleKind::Theorem, ModuleKind::Proposition, ModuleKind::Lemma}) {
    auto name = kind_name(kind);
    if (label.substr(0, name.size()) != name) continue;
    auto rest = label.substr(name.size());
    if (rest.empty()) {
      if (kind == ModuleKind::Theorem) return ModuleId::theorem();
      return std::nullopt;
    }
    if (rest.front() != ' ') return std::nullopt;
    return ModuleId{kind, std::string(trim(rest))};
  }
  return std::nullopt;
}

PseudoFormalProof PseudoFormalProof::build(std::vector<ProofModule> modules,
                                           const std::vector<ModuleEdge>& scope_edges,
                                           const std::vector<ModuleEdge>& invoke_edges) {
  PseudoFormalProof p;
  p.modules_ = std::move(modules);
  const std::size_t n = p.modules_.size();

  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = p.modules_[i];
    if (!p.index_.emplace(m.id, i).second) throw Error(Errc::DuplicateId, "duplicate module " + m.id.label());
  }
  for (const auto& m : p.modules_) {
    check_id_shape(m.id);
    if (m.id.kind == ModuleKind::Lemma) {
      auto prefix = m.id.index.substr(0, m.id.index.find('.'));
      if (!p.contains(ModuleId::proposition(prefix)))
        throw Error(Errc::BadLemmaPrefix, m.id.label() + " has no Proposition " + prefix);
    }
    if (trim(m.conclusion).empty()) throw Error(Errc::EmptyConclusion, m.id.label() + " has an empty conclusion");
  }

  auto resolve = [&](const ModuleEdge& e, const char* what) {
    auto a = p.index_.find(e.first);
    auto b = p.index_.find(e.second);
    if (a == p.index_.end() || b == p.index_.end()) {
      const auto& missing = a == p.index_.end() ? e.first : e.second;
      throw Error(Errc::DanglingEdge, std::string(what) + " edge names unknown module " + missing.label());
    }
    return std::pair{a->second, b->second};
  };

  // Scope forest: at most one parent per node, no cycles.
  p.parent_.assign(n, std::nullopt);
  for (const auto& e : scope_edges) {
    auto [child, parent] = resolve(e, "scope");
    if (child == parent) throw Error(Errc::ScopeNotForest, p.modules_[child].id.label() + " is its own scope parent");
    if (p.parent_[child] && *p.parent_[child] != parent)
      throw Error(Errc::ScopeNotForest, p.modules_[child].id.label() + " has two scope parents: " +
                                            p.modules_[*p.parent_[child]].id.label() + " and " +
                                            p.modules_[parent].id.label());
    p.parent_[child] = parent;
  }
  for (std::size_t start = 0; start < n; ++start) {
    std::vector<std::size_t> path{start};
    std::vector<bool> seen(n, false);
    seen[start] = true;
    for (auto cur = p.parent_[start]; cur; cur = p.parent_[*cur]) {
      path.push_back(*cur);
      if (seen[*cur]) throw Error(Errc::ScopeNotForest, "scope cycle " + describe_cycle(p.modules_, path));
      seen[*cur] = true;
    }
  }

  // Invocation DAG.
  p.out_.assign(n, {});
  for (const auto& e : invoke_edges) {
    auto [from, to] = resolve(e, "invocation");
    if (std::find(p.out_[from].begin(), p.out_[from].end(), to) == p.out_[from].end()) p.out_[from].push_back(to);
  }
  {
    enum : char { White, Grey, Black };
    std::vector<char> color(n, White);
    std::vector<std::size_t> stack;
    std::function<void(std::size_t)> visit = [&](std::size_t u) {
      color[u] = Grey;
      stack.push_back(u);
      for (auto v : p.out_[u]) {
        if (color[v] == Grey) {
          std::vector<std::size_t> cycle(std::find(stack.begin(), stack.end(), v), stack.end());
          cycle.push_back(v);
          throw Error(Errc::CycleInDependencyGraph, "invocation cycle " + describe_cycle(p.modules_, cycle));
        }
        if (color[v] == White) visit(v);
      }
      stack.pop_back();
      color[u] = Black;
    };
    for (std::size_t u = 0; u < n; ++u)
      if (color[u] == White) visit(u);
  }

  // Same-level invocations must point backwards in the document.
  for (std::size_t from = 0; from < n; ++from) {
    for (auto to : p.out_[from]) {
      if (p.modules_[from].id.kind == p.modules_[to].id.kind && to > from)
        throw Error(Errc::ForwardReference,
                    p.modules_[from].id.label() + " invokes the later " + p.modules_[to].id.label());
    }
  }

  // Canonical left-to-right depth-first order of the scope forest.
  std::vector<std::vector<std::size_t>> children(n);
  for (std::size_t i = 0; i < n; ++i)
    if (p.parent_[i]) children[*p.parent_[i]].push_back(i);
  p.rank_.assign(n, 0);
  std::size_t next = 0;
  std::function<void(std::size_t)> number = [&](std::size_t u) {
    p.rank_[u] = next++;
    for (auto c : children[u]) number(c);
  };
  for (std::size_t i = 0; i < n; ++i)
    if (!p.parent_[i]) number(i);
  for (auto& targets : p.out_)
    std::sort(targets.begin(), targets.end(), [&](auto a, auto b) { return p.rank_[a] < p.rank_[b]; });

  return p;
}

std::size_t PseudoFormalProof::at(const ModuleId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(Errc::UnknownId, "no module " + id.label());
  return it->second;
}

const ProofModule& PseudoFormalProof::module(const ModuleId& id) const { return modules_[at(id)]; }
std::size_t PseudoFormalProof::document_index(const ModuleId& id) const { return at(id); }
std::size_t PseudoFormalProof::canonical_rank(const ModuleId& id) const { return rank_[at(id)]; }

std::optional<ModuleId> PseudoFormalProof::scope_parent(const ModuleId& id) const {
  auto parent = parent_[at(id)];
  if (!parent) return std::nullopt;
  return modules_[*parent].id;
}

std::vector<ModuleId> PseudoFormalProof::scope_ancestors(const ModuleId& id) const {
  std::vector<ModuleId> out;
  for (auto cur = parent_[at(id)]; cur; cur = parent_[*cur]) out.push_back(modules_[*cur].id);
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<ModuleId> PseudoFormalProof::dependencies(const ModuleId& id) const {
  std::vector<ModuleId> out;
  for (auto v : out_[at(id)]) out.push_back(modules_[v].id);
  return out;
}

std::vector<ModuleId> PseudoFormalProof::invokers(const ModuleId& id) const {
  auto target = at(id);
  std::vector<ModuleId> out;
  for (std::size_t u = 0; u < modules_.size(); ++u)
    if (std::find(out_[u].begin(), out_[u].end(), target) != out_[u].end()) out.push_back(modules_[u].id);
  return out;
}

std::vector<ModuleEdge> PseudoFormalProof::invoke_edges() const {
  std::vector<ModuleEdge> out;
  for (std::size_t u = 0; u < modules_.size(); ++u)
    for (auto v : out_[u]) out.emplace_back(modules_[u].id, modules_[v].id);
  return out;
}

std::vector<ModuleEdge> PseudoFormalProof::scope_edges() const {
  std::vector<ModuleEdge> out;
  for (std::size_t u = 0; u < modules_.size(); ++u)
    if (parent_[u]) out.emplace_back(modules_[u].id, modules_[*parent_[u]].id);
  return out;
}

bool PseudoFormalProof::operator==(const PseudoFormalProof& other) const {
  if (modules_ != other.modules_) return false;
  if (parent_ != other.parent_) return false;
  auto a = invoke_edges();
  auto b = other.invoke_edges();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

std::vector<std::pair<ModuleId, std::string>> premise_chain(const PseudoFormalProof& proof, const ModuleId& id) {
  std::vector<std::pair<ModuleId, std::string>> out;
  for (const auto& anc : proof.scope_ancestors(id)) out.emplace_back(anc, proof.module(anc).premises);
  out.emplace_back(id, proof.module(id).premises);
  return out;
}

std::string realize_premises(const PseudoFormalProof& proof, const ModuleId& id) {
  std::vector<std::string> parts;
  for (auto& [_, text] : premise_chain(proof, id))
    if (!trim(text).empty()) parts.push_back(std::move(text));
  return join(parts, "\n\n");
}

std::vector<ModuleId> verification_order(const PseudoFormalProof& proof) {
  const auto& modules = proof.modules();
  const std::size_t n = modules.size();
  // A module becomes ready once every module it invokes has been emitted.
  std::vector<std::size_t> pending(n, 0);
  std::vector<std::vector<std::size_t>> waiting(n);
  for (std::size_t u = 0; u < n; ++u) {
    for (const auto& dep : proof.dependencies(modules[u].id)) {
      auto v = proof.document_index(dep);
      ++pending[u];
      waiting[v].push_back(u);
    }
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t u = 0; u < n; ++u)
    if (pending[u] == 0) ready.push(u);
  std::vector<ModuleId> order;
  order.reserve(n);
  while (!ready.empty()) {
    auto u = ready.top();
    ready.pop();
    order.push_back(modules[u].id);
    for (auto w : waiting[u])
      if (--pending[w] == 0) ready.push(w);
  }
  return order;
}

ModuleContext module_context(const PseudoFormalProof& proof, const ModuleId& id) {
  const auto& self = proof.module(id);
  ModuleContext ctx;
  ctx.id = id;
  for (const auto& anc : proof.scope_ancestors(id)) ctx.ancestor_premises.emplace_back(anc, proof.module(anc).premises);
  for (const auto& dep : proof.dependencies(id)) {
    const auto& m = proof.module(dep);
    ctx.dependency_statements.push_back({dep, m.premises, m.conclusion});
  }
  ctx.own_premises = self.premises;
  ctx.own_conclusion = self.conclusion;
  ctx.own_proof = self.proof;
  return ctx;
}

std::string serialize_context(const ModuleContext& context) {
  std::string out;
  for (const auto& [anc, premises] : context.ancestor_premises) {
    out += "[scope " + anc.label() + "]\n";
    out += premises;
    out += '\n';
  }
  for (const auto& dep : context.dependency_statements) {
    out += "[uses " + dep.id.label() + "]\n";
    out += dep.premises;
    out += "\n=>\n";
    out += dep.conclusion;
    out += '\n';
  }
  out += "[" + context.id.label() + "]\n";
  out += context.own_premises;
  out += "\n=>\n";
  out += context.own_conclusion;
  out += "\n[proof]\n";
  out += context.own_proof;
  out += '\n';
  return out;
}

GoodnessReport goodness_report(const PseudoFormalProof& proof, const GoodnessLimits& limits) {
  GoodnessReport r;
  for (const auto& m : proof.modules()) {
    r.depth = std::max(r.depth, proof.scope_ancestors(m.id).size());
    r.max_block_len = std::max({r.max_block_len, char_count(m.premises), char_count(m.conclusion), char_count(m.proof)});
    r.max_out_degree = std::max(r.max_out_degree, proof.dependencies(m.id).size());
  }
  r.context_bound = r.max_block_len * (r.depth + r.max_block_len + 1);
  for (const auto& m : proof.modules()) {
    auto len = char_count(serialize_context(module_context(proof, m.id)));
    r.per_module_context_len[m.id] = len;
    if (len > r.overhead_constant * r.context_bound) r.over_bound.push_back(m.id);

    auto parent = proof.scope_parent(m.id);
    if (parent && parent->kind == ModuleKind::Theorem) {
      auto callers = proof.invokers(m.id);
      auto theorems = std::count_if(callers.begin(), callers.end(),
                                    [](const ModuleId& c) { return c.kind == ModuleKind::Theorem; });
      if (theorems > 1) r.shared_scope_nodes.push_back(m.id);
    }
  }
  auto check = [&](const char* what, std::size_t value, const std::optional<std::size_t>& limit) {
    if (limit && value > *limit)
      r.limit_violations.push_back(std::string(what) + " " + std::to_string(value) + " exceeds limit " +
                                   std::to_string(*limit));
  };
  check("depth", r.depth, limits.max_depth);
  check("block length", r.max_block_len, limits.max_block_len);
  check("out-degree", r.max_out_degree, limits.max_out_degree);
  return r;
}

}  // namespace pfv
