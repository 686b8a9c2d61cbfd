#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "gen.hpp"
#include "golden.hpp"

#include "pfv/bench.hpp"
#include "pfv/cli.hpp"
#include "pfv/error.hpp"
#include "pfv/miner.hpp"

using namespace pfv;
using namespace pfv::testing;
using nlohmann::json;

namespace {

// Tolerances and runtime budgets.
constexpr double kPaperModeCostTol = 0.02;
constexpr double kStepModeCostTol = 1.00;
constexpr double kOverheadConstant = 4.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

Outcome fail(std::string why) { return {false, std::move(why)}; }

std::unique_ptr<Gateway> scripted(const json& script) {
  Gateway::Options o;
  o.sleeper = [](std::chrono::milliseconds) {};
  return std::make_unique<Gateway>(std::make_shared<ScriptedBackend>(ScriptedBackend::from_json(script)), o);
}

Outcome cost_rows() {
  const double paper_mode = cost({16'790'000, 0, 4'560'000}, kReferencePricing);
  const double step_mode = cost({4'180'000, 0, 6'190'000}, kReferencePricing);
  char buf[128];
  std::snprintf(buf, sizeof buf, "paper-mode baseline $%.4f vs 33.12, step-mode baseline $%.4f vs 30.07", paper_mode, step_mode);
  if (std::abs(paper_mode - 33.12) > kPaperModeCostTol || std::abs(step_mode - 30.07) > kStepModeCostTol) return fail(buf);
  return {true, buf};
}

Outcome graph_validity() {
  Rng rng(1001);
  std::size_t clean = 0, seeded = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto s = random_module_set(rng);
    auto expected = expected_error(s.seeded);
    std::optional<PseudoFormalProof> p;
    try {
      p = build_proof(s.modules, s.scope, s.invokes);
    } catch (const Error& e) {
      if (!expected) return fail("clean instance " + std::to_string(trial) + " rejected: " + e.what());
      if (e.code() != *expected) return fail("instance " + std::to_string(trial) + " rejected with " + e.what());
      ++seeded;
      continue;
    }
    if (expected) return fail("seeded instance " + std::to_string(trial) + " accepted");
    ++clean;
    auto order = verification_order(*p);
    std::map<ModuleId, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    if (order.size() != s.modules.size() || pos.size() != order.size())
      return fail("order is not a permutation on instance " + std::to_string(trial));
    for (const auto& [from, to] : s.invokes)
      if (pos.at(to) >= pos.at(from)) return fail("edge violated on instance " + std::to_string(trial));
    if (order != oracle_verification_order(s)) return fail("order differs from oracle on " + std::to_string(trial));
  }
  return {true, std::to_string(clean) + " clean accepted, " + std::to_string(seeded) + " seeded rejected"};
}

Outcome context_bound() {
  Rng rng(1002);
  std::size_t modules = 0;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto s = random_good_set(rng, 3, 500, 5);
    auto p = build_proof(s.modules, s.scope, s.invokes);
    const double d = static_cast<double>(oracle_depth(s));
    const double l = static_cast<double>(oracle_block_len(s));
    if (d > 3 || l > 500) return fail("generator produced D=" + std::to_string(d) + " L=" + std::to_string(l));
    const double limit = kOverheadConstant * l * (d + l + 1);
    for (const auto& m : p.modules()) {
      const double len = static_cast<double>(char_count(serialize_context(module_context(p, m.id))));
      worst = std::max(worst, len / limit);
      ++modules;
      if (len > limit) return fail(m.id.label() + " context " + std::to_string(len) + " > " + std::to_string(limit));
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu module contexts, worst ratio %.4f of the limit", modules, worst);
  return {true, buf};
}

Outcome round_trip() {
  Rng rng(1003);
  for (int trial = 0; trial < 500; ++trial) {
    auto mode = coin(rng) ? TheoremMode::SingleTheorem : TheoremMode::MultiTheorem;
    auto proof = assemble_structured_proof(random_structured_modules(rng, mode), {mode});
    auto text = serialize_proof(proof);
    try {
      if (!(to_proof(parse_pf_document(text), {mode}) == proof)) return fail("mismatch on proof " + std::to_string(trial));
    } catch (const Error& e) {
      return fail("proof " + std::to_string(trial) + ": " + e.what());
    }
  }
  auto golden = check_golden("b2_document");
  if (!golden.failure.empty()) return fail("golden b2_document: " + golden.failure);
  auto doc = parse_pf_document(read_file(fixture("golden/b2_document.in.txt")));
  auto proof = to_proof(doc, {});
  if (!(to_proof(parse_pf_document(serialize_proof(proof)), {}) == proof)) return fail("golden document round trip");
  return {true, "500 random proofs and the golden document"};
}

Outcome metrics_oracle() {
  Rng rng(1004);
  for (int trial = 0; trial < 200; ++trial) {
    auto data = random_dataset(rng);
    if (!matches_oracle(summarize(data), oracle_metrics(data))) return fail("dataset " + std::to_string(trial));
  }
  return {true, "200 datasets"};
}

const char* const kPfDocument =
    "<THEOREM_STATEMENT>\nAssumptions / Conditions / Definitions.\n- The setting.\nStatement :\nThe claim holds.\n"
    "</THEOREM_STATEMENT>\n\n<PROPOSITION_STATEMENT id=\"1\">\nAssumptions / Conditions / Definitions.\n- The setting."
    "\nStatement :\nThe key identity holds.\n</PROPOSITION_STATEMENT>\n\n<LEMMA_STATEMENT id=\"1.1\">\nAssumptions / "
    "Conditions / Definitions.\n- The setting.\nStatement :\nA computation.\n</LEMMA_STATEMENT>\n\n<LEMMA_PROOF "
    "id=\"1.1\">\nCompute.\n</LEMMA_PROOF>\n\n<PROPOSITION_PROOF id=\"1\">\nBy Lemma 1.1.\n</PROPOSITION_PROOF>\n\n"
    "<THEOREM_PROOF>\nApply Proposition 1.\n</THEOREM_PROOF>";

std::string yes_no(Rng& rng, std::size_t n) {
  std::string v;
  for (std::size_t s = 0; s < n; ++s) v += std::string(s ? "," : "") + (coin(rng, 0.2) ? "no" : "yes");
  return v;
}

Outcome monotonicity() {
  const std::vector<std::size_t> ks{1, 2, 4, 8};
  Rng rng(1005);
  for (int run = 0; run < 100; ++run) {
    const auto method = run % 2 == 0 ? Method::Baseline : Method::PF;
    std::vector<StepBenchItem> data;
    json script = json::array();
    if (method == Method::PF) {
      script.push_back({{"stage", "rewrite"}, {"responses", {kPfDocument}}});
      script.push_back({{"stage", "repair"}, {"responses", {"NO_DISCREPANCIES"}}});
      script.push_back({{"stage", "verify"}, {"contains", "**ASSERTION**\n\nLemma 1.1\n"},
                        {"responses", {"```json\n{\"verdict\": \"INCORRECT\", \"error_description\": \"gap\"}\n```"}}});
      script.push_back({{"stage", "verify"},
                        {"responses", {"```json\n{\"verdict\": \"CORRECT\", \"error_description\": null}\n```"}}});
    }
    for (std::size_t i = 0, n = uniform(rng, 2, 8); i < n; ++i) {
      StepBenchItem it;
      it.item_id = "r" + std::to_string(run) + "-" + std::to_string(i);
      it.problem = "Problem " + it.item_id + ": show the claim.";
      for (std::size_t s = 0, m = uniform(rng, 2, 9); s < m; ++s) {
        it.steps.push_back("Step " + std::to_string(s) + " of " + it.item_id + ".");
        it.labels.push_back(!coin(rng, 0.25));
      }
      json rollouts = json::array();
      for (int r = 0; r < 8; ++r) {
        auto v = yes_no(rng, it.steps.size());
        if (method == Method::Baseline) {
          rollouts.push_back({"Verdict: " + v});
        } else {
          rollouts.push_back({"<calibration>\n<flag_audit>\n</flag_audit>\n<additional_errors>\n</additional_errors>\n"
                              "<step_verdicts>" + v + "</step_verdicts>\n</calibration>"});
        }
      }
      script.push_back({{"stage", method == Method::Baseline ? "baseline" : "calibrate"},
                        {"contains", it.problem},
                        {"rollouts", rollouts}});
      data.push_back(std::move(it));
    }
    auto gw = scripted(script);
    BenchConfig bc;
    bc.method = method;
    bc.ks = ks;
    StepBenchResult result;
    try {
      result = run_step_benchmark(data, bc, *gw);
    } catch (const Error& e) {
      return fail("run " + std::to_string(run) + ": " + e.what());
    }
    const std::string tag = "run " + std::to_string(run) + " (" + std::string(method_name(method)) + ")";
    if (!result.outcome.failed_items.empty() || !result.outcome.excluded_from_sweep.empty())
      return fail(tag + ": rollouts failed");
    for (const auto& item : result.items) {
      std::set<std::size_t> prev;
      for (auto k : ks) {
        std::set<std::size_t> flagged;
        for (std::size_t r = 0; r < k; ++r) flagged.insert(item.rollouts[r].value->begin(), item.rollouts[r].value->end());
        if (!std::includes(flagged.begin(), flagged.end(), prev.begin(), prev.end()))
          return fail(tag + ": flagged set of " + item.item_id + " shrank at k=" + std::to_string(k));
        prev = std::move(flagged);
      }
    }
    const auto& sweep = result.outcome.sweep;
    if (sweep.size() != ks.size()) return fail(tag + ": sweep has " + std::to_string(sweep.size()) + " rows");
    for (std::size_t i = 1; i < sweep.size(); ++i) {
      const auto a = sweep[i - 1].second.recall().value().value_or(0);
      const auto b = sweep[i].second.recall().value().value_or(0);
      if (b < a) return fail(tag + ": recall fell at k=" + std::to_string(sweep[i].first));
    }
  }
  return {true, "100 runs, 50 baseline and 50 pf"};
}

Outcome localization() {
  auto dir = std::filesystem::temp_directory_path() / "pfv-acceptance" / "localize";
  std::filesystem::remove_all(dir);
  std::ostringstream out, err;
  int code = run_cli({"verify", fixture("localize/problem.json").string(), "--mock", fixture("localize/script.json").string(),
                      "-k", "1", "--out", dir.string()},
                     out, err);
  if (code != kExitErrorsFound) return fail("exit code " + std::to_string(code) + " " + err.str());
  auto manifest = json::parse(read_file(dir / "manifest.json"));
  const auto& rollout = manifest["result"]["rollouts"].at(0);
  std::vector<std::string> incorrect;
  for (const auto& r : rollout["reports"])
    if (r["verdict"] == "INCORRECT") incorrect.push_back(r["module"]);
  if (incorrect != std::vector<std::string>{"Lemma 5.1"})
    return fail("incorrect blocks: " + json(incorrect).dump());
  if (manifest["result"]["flagged_steps"] != json::array({7}))
    return fail("flagged steps " + manifest["result"]["flagged_steps"].dump());
  return {true, "exit 1, Lemma 5.1 incorrect, step 7 flagged"};
}

Outcome miner_filter() {
  const std::vector<std::pair<std::string, bool>> comments{
      {"14 pages, 1 figure, Minor corrections to Theorem 1.5 and Lemma 2.1.", true},
      {"The proof of Lemma 5 is incorrect: we do not have $H(M_{\\mathcal S}) \\subset M_\\infty$.", true},
      {"Lemma 4.1 has been corrected after N. Tedesco pointed out a mistake in the calculations.", true},
      {"Added references and improved exposition", false},
      {"Fixed typos throughout", false},
  };
  for (const auto& [text, expected] : comments)
    if (regex_filter(text) != expected) return fail("regex_filter(\"" + text + "\")");

  RecordedArxivClient client(fixture("arxiv/feed.xml"));
  auto gw = scripted(json::parse(read_file(fixture("arxiv/triage_script.json"))));
  auto result = harvest({"2025-02-03", "2025-02-12"}, client, *gw);
  std::map<std::string, TriageLabel> kept;
  for (const auto& c : result.retained) kept[c.record.arxiv_id] = c.label;
  const std::map<std::string, TriageLabel> want{{"2502.01001", TriageLabel::Minor},
                                                {"2502.01002", TriageLabel::Major}};
  if (kept != want) return fail("retained " + std::to_string(kept.size()) + " papers");
  const auto& f = result.funnel;
  if (f.retrieved != 10 || f.regex_passed != 4 || f.retained != 2)
    return fail("funnel " + std::to_string(f.retrieved) + "/" + std::to_string(f.regex_passed) + "/" +
                std::to_string(f.retained));
  return {true, "5 comments classified, funnel 10/4/2"};
}

Outcome goldens() {
  std::size_t n = 0;
  for (const auto& name : golden_names()) {
    auto r = check_golden(name);
    if (!r.failure.empty()) return fail(name + ": " + r.failure);
    ++n;
  }
  return {true, std::to_string(n) + " golden pairs"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"cost accounting", 1, cost_rows},
      {"graph validity", 10, graph_validity},
      {"context bound", 10, context_bound},
      {"parser round trip", 10, round_trip},
      {"metrics oracle", 5, metrics_oracle},
      {"aggregation monotonicity", 30, monotonicity},
      {"error localization end to end", 5, localization},
      {"revision filter and triage", 1, miner_filter},
      {"grammar goldens", 5, goldens},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.pass && secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over budget";
    }
    std::printf("%s  %-32s %7.3fs (budget %gs)  %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), secs, c.budget_s,
                o.detail.c_str());
    if (!o.pass) ++failures;
  }
  std::fflush(stdout);
  return failures ? 1 : 0;
}
