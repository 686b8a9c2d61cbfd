#include "pfv/text.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <map>
#include <regex>

#include "json.hpp"

#include "pfv/error.hpp"
#include "pfv/util.hpp"

namespace pfv {

namespace {

constexpr std::array kAllTags = {BlockTag::TheoremStatement, BlockTag::PropositionStatement, BlockTag::LemmaStatement,
                                 BlockTag::LemmaProof,       BlockTag::PropositionProof,     BlockTag::TheoremProof};

constexpr std::string_view kPremisesHeader = "Assumptions / Conditions / Definitions.";

bool is_statement_tag(BlockTag t) {
  return t == BlockTag::TheoremStatement || t == BlockTag::PropositionStatement || t == BlockTag::LemmaStatement;
}

ModuleKind kind_of(BlockTag t) {
  switch (t) {
    case BlockTag::TheoremStatement:
    case BlockTag::TheoremProof: return ModuleKind::Theorem;
    case BlockTag::PropositionStatement:
    case BlockTag::PropositionProof: return ModuleKind::Proposition;
    case BlockTag::LemmaStatement:
    case BlockTag::LemmaProof: return ModuleKind::Lemma;
  }
  return ModuleKind::Theorem;
}

std::string_view ltrim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  return s;
}

// Known tag name at the start of `s` followed by a non-identifier character.
std::optional<BlockTag> tag_at(std::string_view s) {
  for (auto t : kAllTags) {
    auto name = tag_name(t);
    if (s.substr(0, name.size()) != name) continue;
    if (s.size() == name.size()) return t;
    char c = s[name.size()];
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return t;
  }
  return std::nullopt;
}

struct OpenTag {
  BlockTag tag;
  std::optional<std::string> id;
  std::string_view rest;  // text after '>' on the same line
};

// Parses "<NAME [id="..."]>" at the start of `line` (already left-trimmed).
OpenTag parse_open_tag(std::string_view line, std::size_t line_no) {
  auto tag = tag_at(line.substr(1));
  if (!tag) {
    auto end = line.find_first_of(" >");
    throw Error(Errc::MalformedTag, "unknown tag " + std::string(line.substr(0, end == std::string_view::npos ? line.size() : end + 1)),
                line_no);
  }
  OpenTag out{*tag, std::nullopt, {}};
  auto s = line.substr(1 + tag_name(*tag).size());
  s = ltrim(s);
  if (!s.empty() && s.front() != '>') {
    static const std::regex kIdAttr(R"(^id\s*=\s*\"([^\"]*)\"\s*>)");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(s.begin(), s.end(), m, kIdAttr))
      throw Error(Errc::MalformedTag, "malformed attributes on <" + std::string(tag_name(*tag)) + ">", line_no);
    out.id = std::string(trim(std::string_view(&*m[1].first, static_cast<std::size_t>(m[1].length()))));
    s.remove_prefix(static_cast<std::size_t>(m.length(0)));
  } else {
    if (s.empty()) throw Error(Errc::MalformedTag, "unterminated <" + std::string(tag_name(*tag)), line_no);
    s.remove_prefix(1);
  }
  out.rest = s;
  return out;
}

std::string closing_of(BlockTag t) { return "</" + std::string(tag_name(t)) + ">"; }

// If `line` ends with `closer` (ignoring trailing whitespace) returns the text before it.
std::optional<std::string_view> strip_closer(std::string_view line, std::string_view closer) {
  auto t = line;
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.remove_suffix(1);
  if (t.size() < closer.size() || t.substr(t.size() - closer.size()) != closer) return std::nullopt;
  return t.substr(0, t.size() - closer.size());
}

bool is_statement_marker(std::string_view line, std::string_view* rest = nullptr) {
  auto s = trim(line);
  if (s.substr(0, 9) != "Statement") return false;
  s.remove_prefix(9);
  s = ltrim(s);
  if (s.empty() || s.front() != ':') return false;
  if (rest) *rest = s.substr(1);
  return true;
}

long to_number(std::string_view s) {
  long v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

std::pair<long, long> lemma_parts(const std::string& index) {
  auto dot = index.find('.');
  return {to_number(std::string_view(index).substr(0, dot)), to_number(std::string_view(index).substr(dot + 1))};
}

bool is_numeral(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

bool is_lemma_index(std::string_view s) {
  auto dot = s.find('.');
  return dot != std::string_view::npos && is_numeral(s.substr(0, dot)) && is_numeral(s.substr(dot + 1));
}

// Inner texts of every top-level <tag>...</tag> in `text`.
std::vector<std::string_view> extract_all(std::string_view text, std::string_view tag) {
  std::vector<std::string_view> out;
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  std::size_t pos = 0;
  while (true) {
    auto a = text.find(open, pos);
    if (a == std::string_view::npos) break;
    auto b = text.find(close, a + open.size());
    if (b == std::string_view::npos) break;
    out.push_back(text.substr(a + open.size(), b - a - open.size()));
    pos = b + close.size();
  }
  return out;
}

std::optional<std::string_view> extract_one(std::string_view text, std::string_view tag) {
  auto all = extract_all(text, tag);
  if (all.empty()) return std::nullopt;
  return all.front();
}

// Self-closing or open/close pair with no content.
bool has_empty_element(std::string_view text, std::string_view tag) {
  return text.find("<" + std::string(tag) + "/>") != std::string_view::npos ||
         text.find("<" + std::string(tag) + " />") != std::string_view::npos;
}

std::optional<int> parse_int(std::string_view s) {
  s = trim(s);
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<bool> parse_yes_no_list(std::string_view list, std::size_t num_steps) {
  std::vector<bool> out;
  for (const auto& raw : split(list, ',')) {
    auto tok = to_lower(trim(raw));
    while (!tok.empty() && (tok.back() == '.' || tok.back() == ';')) tok.pop_back();
    if (tok == "yes") {
      out.push_back(true);
    } else if (tok == "no") {
      out.push_back(false);
    } else {
      throw Error(Errc::UnknownToken, "unexpected verdict token '" + std::string(trim(raw)) + "'");
    }
  }
  if (out.size() != num_steps)
    throw Error(Errc::LengthMismatch,
                "expected " + std::to_string(num_steps) + " verdicts, got " + std::to_string(out.size()));
  return out;
}

// Fenced ``` blocks as (content begin, content end) offsets.
std::vector<std::pair<std::size_t, std::size_t>> fenced_blocks(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    auto body = text.find('\n', open + 3);
    if (body == std::string_view::npos) break;
    // Everything on the fence line is the info string ("json").
    auto close = text.find("```", body + 1);
    if (close == std::string_view::npos) break;
    out.emplace_back(body + 1, close);
    pos = close + 3;
  }
  return out;
}

// Doubles backslashes that do not start a JSON escape, so "$\mathbb{R}$"
// written raw inside a string still parses.
std::string escape_stray_backslashes(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += s[i];
    if (s[i] != '\\') continue;
    if (i + 1 < s.size() && std::string_view("\"\\/bfnrtu").find(s[i + 1]) != std::string_view::npos) {
      out += s[++i];
    } else {
      out += '\\';
    }
  }
  return out;
}

std::optional<nlohmann::json> parse_object(std::string_view s) {
  auto j = nlohmann::json::parse(s.begin(), s.end(), nullptr, false);
  if (j.is_discarded()) j = nlohmann::json::parse(escape_stray_backslashes(s), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

nlohmann::json trailing_json_object(std::string_view response) {
  auto text = trim(response);
  auto fences = fenced_blocks(text);
  std::size_t after_fences = fences.empty() ? 0 : fences.back().second + 3;
  if (!text.empty() && text.back() == '}' && after_fences <= text.size()) {
    // Bare object at the very end, outside any fence.
    for (auto pos = text.find('{', after_fences); pos != std::string_view::npos; pos = text.find('{', pos + 1)) {
      if (auto obj = parse_object(text.substr(pos))) return *obj;
    }
  }
  if (fences.empty()) throw Error(Errc::NoJsonBlock, "response has no JSON block");
  auto [b, e] = fences.back();
  if (auto obj = parse_object(text.substr(b, e - b))) return *obj;
  throw Error(Errc::NoJsonBlock, "last fenced block is not a JSON object");
}

template <class Verdict>
Verdict parse_binary_verdict(std::string_view response, std::string_view positive, std::string_view negative) {
  auto obj = trailing_json_object(response);
  auto it = obj.find("verdict");
  if (it == obj.end() || !it->is_string()) throw Error(Errc::UnknownVerdictString, "missing \"verdict\" string");
  const auto verdict = it->template get<std::string>();
  std::optional<std::string> description;
  if (auto d = obj.find("error_description"); d != obj.end() && d->is_string()) description = d->template get<std::string>();
  if (verdict == positive) return Verdict{true, std::nullopt};
  if (verdict == negative) {
    if (!description || trim(*description).empty())
      throw Error(Errc::MissingDescription, std::string(negative) + " verdict without error_description");
    return Verdict{false, description};
  }
  throw Error(Errc::UnknownVerdictString, "unknown verdict '" + verdict + "'");
}

}  // namespace

std::string_view tag_name(BlockTag tag) noexcept {
  switch (tag) {
    case BlockTag::TheoremStatement: return "THEOREM_STATEMENT";
    case BlockTag::PropositionStatement: return "PROPOSITION_STATEMENT";
    case BlockTag::LemmaStatement: return "LEMMA_STATEMENT";
    case BlockTag::LemmaProof: return "LEMMA_PROOF";
    case BlockTag::PropositionProof: return "PROPOSITION_PROOF";
    case BlockTag::TheoremProof: return "THEOREM_PROOF";
  }
  return "?";
}

PfDocument parse_pf_document(std::string_view text) {
  PfDocument doc;
  auto lines = split_lines(text);
  std::optional<PfBlock> open;
  std::string body;

  auto finish = [&](std::string_view last_piece) {
    body += last_piece;
    open->body = std::string(trim(body));
    doc.blocks.push_back(std::move(*open));
    open.reset();
    body.clear();
  };

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    auto line = lines[i];
    auto lead = ltrim(line);

    if (!open) {
      if (trim(line).empty()) continue;
      if (lead.substr(0, 2) == "</") throw Error(Errc::MalformedTag, "closing tag without opening tag", line_no);
      if (lead.front() != '<') throw Error(Errc::TextOutsideTags, "text outside tags", line_no);
      auto tag = parse_open_tag(lead, line_no);
      if (!tag.id && tag.tag != BlockTag::TheoremStatement && tag.tag != BlockTag::TheoremProof)
        throw Error(Errc::MissingId, "<" + std::string(tag_name(tag.tag)) + "> requires an id attribute", line_no);
      if (tag.id && tag.id->empty())
        throw Error(Errc::MissingId, "<" + std::string(tag_name(tag.tag)) + "> has an empty id", line_no);
      open = PfBlock{tag.tag, tag.id, {}, line_no};
      if (auto before = strip_closer(tag.rest, closing_of(tag.tag))) {
        finish(*before);
        continue;
      }
      if (!trim(tag.rest).empty()) {
        auto nested = ltrim(tag.rest);
        if (nested.size() > 1 && nested.front() == '<' && tag_at(nested.substr(1)))
          throw Error(Errc::NestedTag, "tag opened inside <" + std::string(tag_name(tag.tag)) + ">", line_no);
        body += tag.rest;
        body += '\n';
      }
      continue;
    }

    // Inside a block.
    if (lead.size() > 1 && lead.front() == '<') {
      if (lead[1] == '/' && tag_at(lead.substr(2))) {
        auto closer = closing_of(open->tag);
        if (!strip_closer(lead, closer) || trim(lead) != closer)
          throw Error(Errc::MalformedTag, "mismatched closing tag inside <" + std::string(tag_name(open->tag)) + ">",
                      line_no);
      } else if (tag_at(lead.substr(1))) {
        throw Error(Errc::NestedTag, "tag opened inside <" + std::string(tag_name(open->tag)) + ">", line_no);
      }
    }
    if (auto before = strip_closer(line, closing_of(open->tag))) {
      finish(*before);
      continue;
    }
    body += line;
    body += '\n';
  }
  if (open)
    throw Error(Errc::MalformedTag, "<" + std::string(tag_name(open->tag)) + "> is never closed", open->line);
  return doc;
}

StatementParts split_statement(std::string_view body) {
  auto lines = split_lines(body);
  std::size_t marker = lines.size();
  std::string_view marker_rest;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_statement_marker(lines[i], &marker_rest)) {
      marker = i;
      break;
    }
  }
  StatementParts parts;
  if (marker == lines.size()) {
    parts.conclusion = std::string(trim(body));
    return parts;
  }
  std::size_t first = 0;
  while (first < marker && trim(lines[first]).empty()) ++first;
  if (first < marker && starts_with_icase(trim(lines[first]), "Assumptions / Conditions / Definitions")) ++first;
  std::string premises;
  for (std::size_t i = first; i < marker; ++i) {
    premises += lines[i];
    premises += '\n';
  }
  std::string conclusion(marker_rest);
  for (std::size_t i = marker + 1; i < lines.size(); ++i) {
    conclusion += '\n';
    conclusion += lines[i];
  }
  parts.premises = std::string(trim(premises));
  parts.conclusion = std::string(trim(conclusion));
  return parts;
}

std::string render_statement(std::string_view premises, std::string_view conclusion) {
  std::string out(kPremisesHeader);
  out += '\n';
  if (!trim(premises).empty()) {
    out += trim(premises);
    out += '\n';
  }
  out += "Statement :\n";
  out += trim(conclusion);
  return out;
}

std::set<ModuleId> scan_mentions(std::string_view text) {
  static const std::regex kRef(
      R"(\b(Lemmas?|Lem\.|Propositions?|Props?\.|Theorems?|Thms?\.)\s*~?\s*([0-9]+(?:\.[0-9]+)?(?:\s*(?:,|and|&|,\s*and)\s*[0-9]+(?:\.[0-9]+)?)*))");
  static const std::regex kNumber(R"([0-9]+(?:\.[0-9]+)?)");
  std::set<ModuleId> out;
  std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kRef); it != std::sregex_iterator(); ++it) {
    const auto word = (*it)[1].str();
    ModuleKind kind = word.rfind("Lem", 0) == 0 ? ModuleKind::Lemma
                      : word.rfind("Prop", 0) == 0 ? ModuleKind::Proposition
                                                   : ModuleKind::Theorem;
    const auto list = (*it)[2].str();
    for (auto n = std::sregex_iterator(list.begin(), list.end(), kNumber); n != std::sregex_iterator(); ++n) {
      auto num = n->str();
      bool dotted = num.find('.') != std::string::npos;
      if (kind == ModuleKind::Lemma && !dotted) continue;
      if (kind != ModuleKind::Lemma && dotted) continue;
      out.insert(ModuleId{kind, num});
    }
  }
  return out;
}

PseudoFormalProof assemble_structured_proof(std::vector<ProofModule> modules, const ProofBuildOptions& options) {
  std::vector<ModuleId> theorems;
  std::vector<ModuleId> propositions;
  std::map<long, std::vector<ModuleId>> lemmas_of;
  for (const auto& m : modules) {
    switch (m.id.kind) {
      case ModuleKind::Theorem: theorems.push_back(m.id); break;
      case ModuleKind::Proposition: propositions.push_back(m.id); break;
      case ModuleKind::Lemma:
        if (is_lemma_index(m.id.index)) lemmas_of[lemma_parts(m.id.index).first].push_back(m.id);
        break;
    }
  }
  auto prop_number = [](const ModuleId& id) { return to_number(id.index); };

  std::vector<ModuleEdge> invokes;
  for (const auto& m : modules) {
    std::vector<ModuleId> targets;
    switch (m.id.kind) {
      case ModuleKind::Theorem:
        if (options.mode == TheoremMode::MultiTheorem) {
          for (const auto& t : theorems) {
            if (t == m.id) break;
            targets.push_back(t);
          }
        }
        targets.insert(targets.end(), propositions.begin(), propositions.end());
        break;
      case ModuleKind::Proposition: {
        auto k = prop_number(m.id);
        if (auto it = lemmas_of.find(k); it != lemmas_of.end()) targets = it->second;
        for (const auto& p : propositions)
          if (prop_number(p) < k) targets.push_back(p);
        break;
      }
      case ModuleKind::Lemma: {
        if (!is_lemma_index(m.id.index)) break;
        auto [k, j] = lemma_parts(m.id.index);
        for (const auto& l : lemmas_of[k])
          if (lemma_parts(l.index).second < j) targets.push_back(l);
        for (const auto& p : propositions)
          if (prop_number(p) < k) targets.push_back(p);
        break;
      }
    }
    if (options.prune_unmentioned) {
      auto mentioned = scan_mentions(m.proof);
      std::erase_if(targets, [&](const ModuleId& t) { return mentioned.count(t) == 0; });
    }
    for (auto& t : targets) invokes.emplace_back(m.id, std::move(t));
  }

  std::vector<ModuleEdge> scope;
  for (const auto& m : modules) {
    if (m.id.kind == ModuleKind::Lemma && is_lemma_index(m.id.index)) {
      scope.emplace_back(m.id, ModuleId::proposition(std::to_string(lemma_parts(m.id.index).first)));
    } else if (m.id.kind == ModuleKind::Proposition) {
      for (const auto& t : theorems) {
        auto hit = std::find_if(invokes.begin(), invokes.end(),
                                [&](const ModuleEdge& e) { return e.first == t && e.second == m.id; });
        if (hit != invokes.end()) {
          scope.emplace_back(m.id, t);
          break;
        }
      }
    }
  }
  return PseudoFormalProof::build(std::move(modules), scope, invokes);
}

PseudoFormalProof to_proof(const PfDocument& doc, const ProofBuildOptions& options) {
  const bool multi = options.mode == TheoremMode::MultiTheorem;

  struct Slot {
    ProofModule module;
    bool has_proof = false;
    std::size_t line = 0;
  };
  std::vector<Slot> slots;
  std::map<ModuleId, std::size_t> slot_of;
  std::set<long> props_with_proof;
  std::map<long, long> last_lemma;
  long last_prop = 0;
  long last_theorem = 0;
  bool any_theorem_proof = false;

  // Proposition numbers declared anywhere, to tell forward references from bad prefixes.
  std::set<long> declared_props;
  for (const auto& b : doc.blocks)
    if (b.tag == BlockTag::PropositionStatement && b.id && is_numeral(*b.id)) declared_props.insert(to_number(*b.id));

  for (const auto& b : doc.blocks) {
    const auto kind = kind_of(b.tag);
    ModuleId id{kind, b.id.value_or("")};

    if (kind == ModuleKind::Theorem) {
      if (multi && !b.id) throw Error(Errc::MissingId, "<" + std::string(tag_name(b.tag)) + "> requires an id", b.line);
      if (!multi && b.id)
        throw Error(Errc::MalformedId, "single-theorem documents do not number theorems", b.line);
      if (multi && !is_numeral(*b.id)) throw Error(Errc::MalformedId, "theorem id '" + *b.id + "'", b.line);
    } else if (kind == ModuleKind::Proposition) {
      if (!is_numeral(*b.id)) throw Error(Errc::MalformedId, "proposition id '" + *b.id + "'", b.line);
    } else if (!is_lemma_index(*b.id)) {
      throw Error(Errc::BadLemmaPrefix, "lemma id '" + *b.id + "' must have the form k.j", b.line);
    }

    if (is_statement_tag(b.tag)) {
      if (slot_of.count(id)) throw Error(Errc::DuplicateId, "second statement for " + id.label(), b.line);
      if (kind == ModuleKind::Theorem && multi) {
        auto n = to_number(id.index);
        if (n <= last_theorem) throw Error(Errc::ForwardReference, id.label() + " is out of order", b.line);
        last_theorem = n;
      } else if (kind == ModuleKind::Theorem && !slots.empty() &&
                 std::any_of(slots.begin(), slots.end(),
                             [](const Slot& s) { return s.module.id.kind == ModuleKind::Theorem; })) {
        throw Error(Errc::DuplicateId, "second theorem statement in single-theorem mode", b.line);
      } else if (kind == ModuleKind::Proposition) {
        auto n = to_number(id.index);
        if (any_theorem_proof)
          throw Error(Errc::ForwardReference, id.label() + " is stated after a theorem proof that uses it", b.line);
        if (n <= last_prop) throw Error(Errc::ForwardReference, id.label() + " is out of order", b.line);
        last_prop = n;
      } else if (kind == ModuleKind::Lemma) {
        auto [k, j] = lemma_parts(id.index);
        if (!slot_of.count(ModuleId::proposition(std::to_string(k)))) {
          if (declared_props.count(k))
            throw Error(Errc::ForwardReference, id.label() + " appears before Proposition " + std::to_string(k),
                        b.line);
          throw Error(Errc::BadLemmaPrefix, id.label() + " has no Proposition " + std::to_string(k), b.line);
        }
        if (props_with_proof.count(k))
          throw Error(Errc::ForwardReference, id.label() + " appears after the proof of Proposition " + std::to_string(k),
                      b.line);
        if (j <= last_lemma[k]) throw Error(Errc::ForwardReference, id.label() + " is out of order", b.line);
        last_lemma[k] = j;
      }
      auto parts = split_statement(b.body);
      slot_of[id] = slots.size();
      slots.push_back({ProofModule{id, std::move(parts.premises), std::move(parts.conclusion), {}}, false, b.line});
      continue;
    }

    auto it = slot_of.find(id);
    if (it == slot_of.end()) throw Error(Errc::OrphanProof, "proof of " + id.label() + " has no preceding statement", b.line);
    auto& slot = slots[it->second];
    if (slot.has_proof) throw Error(Errc::DuplicateId, "second proof for " + id.label(), b.line);
    if (kind == ModuleKind::Lemma && props_with_proof.count(lemma_parts(id.index).first))
      throw Error(Errc::ForwardReference, "proof of " + id.label() + " follows the proof of its proposition", b.line);
    slot.module.proof = b.body;
    slot.has_proof = true;
    if (kind == ModuleKind::Proposition) props_with_proof.insert(to_number(id.index));
    if (kind == ModuleKind::Theorem) any_theorem_proof = true;
  }

  if (std::none_of(slots.begin(), slots.end(), [](const Slot& s) { return s.module.id.kind == ModuleKind::Theorem; }))
    throw Error(Errc::MissingTheorem, "document has no THEOREM_STATEMENT");
  for (const auto& s : slots)
    if (!s.has_proof) throw Error(Errc::MissingProof, s.module.id.label() + " has no proof block", s.line);

  std::vector<ProofModule> modules;
  modules.reserve(slots.size());
  for (auto& s : slots) modules.push_back(std::move(s.module));
  return assemble_structured_proof(std::move(modules), options);
}

std::string serialize_proof(const PseudoFormalProof& proof) {
  auto reject_delimiters = [](const ProofModule& m, std::string_view field, std::string_view text, bool premises) {
    for (auto line : split_lines(text)) {
      auto lead = ltrim(line);
      bool tag_like = lead.size() > 1 && lead.front() == '<' &&
                      (tag_at(lead.substr(1)) || (lead[1] == '/' && tag_at(lead.substr(2))));
      if (!tag_like) {
        // A closing tag at the end of a line also terminates a block.
        for (auto t : kAllTags)
          if (strip_closer(line, closing_of(t))) tag_like = true;
      }
      if (tag_like)
        throw Error(Errc::UnserializableText, m.id.label() + " " + std::string(field) + " contains a tag delimiter");
      if (premises && is_statement_marker(line))
        throw Error(Errc::UnserializableText, m.id.label() + " premises contain a 'Statement :' line");
    }
  };

  std::vector<const ProofModule*> theorems;
  std::vector<const ProofModule*> propositions;
  std::map<std::string, std::vector<const ProofModule*>> lemmas_of;
  for (const auto& m : proof.modules()) {
    reject_delimiters(m, "premises", m.premises, true);
    reject_delimiters(m, "conclusion", m.conclusion, false);
    reject_delimiters(m, "proof", m.proof, false);
    switch (m.id.kind) {
      case ModuleKind::Theorem: theorems.push_back(&m); break;
      case ModuleKind::Proposition: propositions.push_back(&m); break;
      case ModuleKind::Lemma: lemmas_of[m.id.index.substr(0, m.id.index.find('.'))].push_back(&m); break;
    }
  }

  std::string out;
  auto emit = [&](BlockTag tag, const ModuleId& id, const std::string& body) {
    out += '<';
    out += tag_name(tag);
    if (!id.index.empty()) out += " id=\"" + id.index + "\"";
    out += ">\n";
    if (!trim(body).empty()) {
      out += trim(body);
      out += '\n';
    }
    out += closing_of(tag);
    out += "\n\n";
  };
  auto statement = [](const ProofModule& m) { return render_statement(m.premises, m.conclusion); };

  for (const auto* t : theorems) emit(BlockTag::TheoremStatement, t->id, statement(*t));
  for (const auto* p : propositions) {
    emit(BlockTag::PropositionStatement, p->id, statement(*p));
    for (const auto* l : lemmas_of[p->id.index]) {
      emit(BlockTag::LemmaStatement, l->id, statement(*l));
      emit(BlockTag::LemmaProof, l->id, l->proof);
    }
    emit(BlockTag::PropositionProof, p->id, p->proof);
  }
  for (const auto* t : theorems) emit(BlockTag::TheoremProof, t->id, t->proof);
  if (!out.empty()) out.pop_back();
  return out;
}

BlockVerdict parse_block_verdict(std::string_view response) {
  return parse_binary_verdict<BlockVerdict>(response, "CORRECT", "INCORRECT");
}

FaithfulnessVerdict parse_faithfulness_verdict(std::string_view response) {
  return parse_binary_verdict<FaithfulnessVerdict>(response, "FAITHFUL", "UNFAITHFUL");
}

std::vector<bool> parse_step_verdict_line(std::string_view response, std::size_t num_steps) {
  std::optional<std::string_view> last;
  for (auto line : split_lines(response)) {
    auto t = trim(line);
    if (starts_with_icase(t, "verdict:")) last = t.substr(8);
  }
  if (!last) throw Error(Errc::NoVerdictLine, "no line starting with 'Verdict:'");
  return parse_yes_no_list(*last, num_steps);
}

CalibrationResult parse_calibration(std::string_view response, std::size_t num_steps) {
  auto open = response.rfind("<calibration>");
  if (open == std::string_view::npos) throw Error(Errc::NoCalibrationBlock, "no <calibration> block");
  auto close = response.find("</calibration>", open);
  if (close == std::string_view::npos) throw Error(Errc::NoCalibrationBlock, "<calibration> is never closed");
  auto block = response.substr(open, close - open);

  CalibrationResult r;
  if (auto audits = extract_one(block, "flag_audit")) {
    for (auto flag : extract_all(*audits, "flag")) {
      FlagAudit a;
      a.source = std::string(trim(extract_one(flag, "source").value_or("")));
      auto status = to_lower(trim(extract_one(flag, "status").value_or("")));
      if (status == "genuine") {
        a.status = FlagStatus::Genuine;
      } else if (status == "false_alarm") {
        a.status = FlagStatus::FalseAlarm;
      } else {
        throw Error(Errc::MalformedCalibration, "flag status '" + status + "'");
      }
      auto step = extract_one(flag, "original_step");
      if (auto n = step ? parse_int(*step) : std::nullopt) {
        a.original_step = *n;
      } else {
        r.warnings.push_back("flag '" + a.source + "' has no integer original_step; using -1");
      }
      a.explanation = std::string(trim(extract_one(flag, "explanation").value_or("")));
      r.flag_audits.push_back(std::move(a));
    }
  } else if (!has_empty_element(block, "flag_audit")) {
    r.warnings.push_back("missing <flag_audit> block");
  }

  if (auto extra = extract_one(block, "additional_errors")) {
    for (auto err : extract_all(*extra, "error")) {
      AdditionalError e;
      auto step = extract_one(err, "original_step");
      if (auto n = step ? parse_int(*step) : std::nullopt) {
        e.original_step = *n;
      } else {
        r.warnings.push_back("additional error has no integer original_step; using -1");
      }
      e.description = std::string(trim(extract_one(err, "description").value_or("")));
      r.additional_errors.push_back(std::move(e));
    }
  } else if (!has_empty_element(block, "additional_errors")) {
    r.warnings.push_back("missing <additional_errors> block");
  }

  auto verdicts = extract_one(block, "step_verdicts");
  if (!verdicts) throw Error(Errc::MalformedCalibration, "missing <step_verdicts>");
  r.step_verdicts = parse_yes_no_list(*verdicts, num_steps);

  auto first_false = std::find(r.step_verdicts.begin(), r.step_verdicts.end(), false);
  const int expected = first_false == r.step_verdicts.end()
                           ? -1
                           : static_cast<int>(std::distance(r.step_verdicts.begin(), first_false));
  auto stated_text = extract_one(block, "first_incorrect_step");
  auto stated = stated_text ? parse_int(*stated_text) : std::nullopt;
  if (!stated) {
    r.warnings.push_back("missing or non-integer <first_incorrect_step>; derived " + std::to_string(expected));
  } else if (*stated != expected) {
    r.warnings.push_back("first_incorrect_step " + std::to_string(*stated) + " disagrees with step_verdicts; using " +
                         std::to_string(expected));
  }
  r.first_incorrect_step = expected;
  return r;
}

ErrorList parse_error_list(std::string_view response) {
  std::size_t open = std::string_view::npos;
  std::size_t close = std::string_view::npos;
  for (auto pos = response.rfind("<errors>"); pos != std::string_view::npos;
       pos = pos == 0 ? std::string_view::npos : response.rfind("<errors>", pos - 1)) {
    auto c = response.find("</errors>", pos);
    if (c != std::string_view::npos) {
      open = pos;
      close = c;
      break;
    }
  }
  if (open == std::string_view::npos) {
    if (response.find("<errors/>") != std::string_view::npos || response.find("<errors />") != std::string_view::npos)
      return {};
    throw Error(Errc::NoErrorsBlock, "no <errors> block");
  }
  auto inner = response.substr(open + 8, close - open - 8);

  ErrorList out;
  std::size_t pos = 0;
  while (true) {
    auto next = inner.find("<error>", pos);
    auto gap = trim(inner.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (!gap.empty()) throw Error(Errc::MalformedErrorEntry, "unexpected text between <error> entries");
    if (next == std::string_view::npos) break;
    auto end = inner.find("</error>", next);
    if (end == std::string_view::npos) throw Error(Errc::MalformedErrorEntry, "<error> is never closed");
    auto entry = inner.substr(next + 7, end - next - 7);
    auto location = extract_one(entry, "location");
    if (!location || trim(*location).empty())
      throw Error(Errc::MalformedErrorEntry, "error entry " + std::to_string(out.size() + 1) + " has no <location>");
    auto description = extract_one(entry, "description");
    if (!description)
      throw Error(Errc::MalformedErrorEntry, "error entry " + std::to_string(out.size() + 1) + " has no <description>");
    out.push_back({std::string(*location), std::string(trim(*description))});
    pos = end + 8;
  }
  return out;
}

std::string render_error_list(const ErrorList& errors) {
  std::string out = "<errors>\n";
  for (const auto& e : errors) {
    out += "  <error>\n    <location>" + e.location + "</location>\n    <description>" + e.description +
           "</description>\n  </error>\n";
  }
  out += "</errors>";
  return out;
}

}  // namespace pfv
