#include "pfv/cli.hpp"

#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "pfv/core.hpp"
#include "pfv/error.hpp"
#include "pfv/miner.hpp"
#include "pfv/text.hpp"
#include "pfv/util.hpp"

namespace pfv {

namespace {

TaskMode parse_mode(const std::string& s) {
  if (s == "step") return TaskMode::Step;
  if (s == "paper") return TaskMode::Paper;
  throw Error(Errc::ConfigError, "mode must be step or paper, got '" + s + "'");
}

Method parse_method(const std::string& s) {
  if (s == "pf") return Method::PF;
  if (s == "baseline") return Method::Baseline;
  throw Error(Errc::ConfigError, "method must be pf or baseline, got '" + s + "'");
}

MatchPolicy parse_policy(const std::string& s) {
  if (s == "normalized") return MatchPolicy::Normalized;
  if (s == "judge") return MatchPolicy::Judge;
  throw Error(Errc::ConfigError, "match policy must be normalized or judge, got '" + s + "'");
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& piece : split(s, ',')) {
    auto t = std::string(trim(piece));
    if (t.empty()) continue;
    try {
      std::size_t used = 0;
      auto v = std::stoul(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(Errc::ConfigError, "bad k value '" + t + "'");
    }
  }
  return out;
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (base / p).string();
}

}  // namespace

void apply_config_json(RunConfig& c, const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(Errc::ConfigError, "config must be a JSON object");
  using Setter = std::function<void(const nlohmann::json&)>;
  const std::map<std::string, Setter> setters{
      {"mock_script", [&](const auto& v) { c.mock_script = resolve(v.template get<std::string>(), base_dir); }},
      {"base_url", [&](const auto& v) { c.base_url = v.template get<std::string>(); }},
      {"api_path", [&](const auto& v) { c.api_path = v.template get<std::string>(); }},
      {"supports_attachments", [&](const auto& v) { c.supports_attachments = v.template get<bool>(); }},
      {"model", [&](const auto& v) { c.model_name = v.template get<std::string>(); }},
      {"effort", [&](const auto& v) { c.effort = v.template get<std::string>(); }},
      {"mode", [&](const auto& v) { c.mode = parse_mode(v.template get<std::string>()); }},
      {"method", [&](const auto& v) { c.method = parse_method(v.template get<std::string>()); }},
      {"k", [&](const auto& v) { c.k = v.template get<std::size_t>(); }},
      {"ks", [&](const auto& v) { c.ks = v.template get<std::vector<std::size_t>>(); }},
      {"match_policy", [&](const auto& v) { c.match_policy = parse_policy(v.template get<std::string>()); }},
      {"strictness", [&](const auto& v) { c.pipeline.strictness = v.template get<std::string>(); }},
      {"max_repair_rounds", [&](const auto& v) { c.pipeline.max_repair_rounds = v.template get<std::size_t>(); }},
      {"max_regenerations", [&](const auto& v) { c.pipeline.max_regenerations = v.template get<std::size_t>(); }},
      {"retry_block_parse", [&](const auto& v) { c.pipeline.retry_block_parse = v.template get<bool>(); }},
      {"short_circuit_calibration",
       [&](const auto& v) { c.pipeline.short_circuit_calibration = v.template get<bool>(); }},
      {"prune_unmentioned", [&](const auto& v) { c.pipeline.prune_unmentioned = v.template get<bool>(); }},
      {"max_retries", [&](const auto& v) { c.max_retries = v.template get<std::size_t>(); }},
      {"max_in_flight", [&](const auto& v) { c.max_in_flight = v.template get<std::size_t>(); }},
      {"seed", [&](const auto& v) { c.seed = v.template get<std::uint64_t>(); }},
      {"out_dir", [&](const auto& v) { c.out_dir = resolve(v.template get<std::string>(), base_dir); }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(Errc::ConfigError, "unknown config key '" + key + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ConfigError, "config key '" + key + "': " + e.what());
    }
  }
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{{"model", c.model_name},
                   {"mode", std::string(mode_name(c.mode))},
                   {"method", std::string(method_name(c.method))},
                   {"k", c.k},
                   {"ks", c.ks},
                   {"match_policy", std::string(policy_name(c.match_policy))},
                   {"strictness", c.pipeline.strictness},
                   {"max_repair_rounds", c.pipeline.max_repair_rounds},
                   {"max_regenerations", c.pipeline.max_regenerations},
                   {"retry_block_parse", c.pipeline.retry_block_parse},
                   {"short_circuit_calibration", c.pipeline.short_circuit_calibration},
                   {"prune_unmentioned", c.pipeline.prune_unmentioned},
                   {"max_retries", c.max_retries},
                   {"max_in_flight", c.max_in_flight},
                   {"seed", c.seed}};
  if (c.effort) j["effort"] = *c.effort;
  if (!c.mock_script.empty()) {
    j["mock_script"] = c.mock_script;
  } else {
    j["base_url"] = c.base_url;
    j["api_path"] = c.api_path;
    j["supports_attachments"] = c.supports_attachments;
  }
  return j;
}

void validate(const RunConfig& c) {
  if (c.k == 0) throw Error(Errc::ConfigError, "k must be at least 1");
  for (auto k : c.ks)
    if (k == 0) throw Error(Errc::ConfigError, "every k in ks must be at least 1");
  if (c.max_in_flight == 0) throw Error(Errc::ConfigError, "max_in_flight must be at least 1");
  if (c.mock_script.empty() && c.base_url.empty())
    throw Error(Errc::ConfigError, "no backend: set mock_script or base_url");
  if (!c.mock_script.empty() && !std::filesystem::is_regular_file(c.mock_script))
    throw Error(Errc::ConfigError, "mock script " + c.mock_script + " not found");
}

std::shared_ptr<Backend> make_backend(const RunConfig& c) {
  if (!c.mock_script.empty()) return std::make_shared<ScriptedBackend>(ScriptedBackend::from_file(c.mock_script, c.seed));
  return std::make_shared<HttpBackend>(HttpBackendConfig{c.base_url, c.api_path, c.api_key, c.supports_attachments});
}

namespace {

Gateway make_gateway(const RunConfig& c) {
  Gateway::Options opts;
  opts.model_name = c.model_name;
  opts.effort_hint = c.effort;
  opts.max_retries = c.max_retries;
  opts.max_in_flight = c.max_in_flight;
  opts.jitter_seed = c.seed;
  return Gateway(make_backend(c), opts);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file(path, j.dump(2) + "\n");
}

std::filesystem::path prepare_out_dir(const RunConfig& c) {
  std::filesystem::path dir(c.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

StepTask load_step_task(const std::filesystem::path& path) {
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("problem") || !j.contains("steps"))
    throw Error(Errc::ConfigError, path.string() + ": step input must be JSON {\"problem\", \"steps\"}");
  try {
    return StepTask{j["problem"].get<std::string>(), j["steps"].get<std::vector<std::string>>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, path.string() + ": " + e.what());
  }
}

// --- verify ---------------------------------------------------------------

int cmd_verify(const RunConfig& c, const std::string& input_path, const std::string& pdf_path, std::ostream& out) {
  validate(c);
  TaskInput input;
  if (c.mode == TaskMode::Step) {
    input = load_step_task(input_path);
  } else {
    PaperTask paper{read_file(input_path), std::nullopt, "paper.pdf"};
    if (!pdf_path.empty()) {
      paper.pdf = read_file(pdf_path);
      paper.pdf_filename = std::filesystem::path(pdf_path).filename().string();
    }
    input = std::move(paper);
  }
  auto dir = prepare_out_dir(c);
  auto gateway = make_gateway(c);
  nlohmann::json manifest{{"command", "verify"}, {"input", input_path}, {"config", to_json(c)}};
  std::string report;
  bool accepted = false;

  if (c.method == Method::PF) {
    auto verdict = run_rollouts(input, c.k, gateway, c.pipeline);
    manifest["result"] = to_json(verdict);
    report = render_report(input, verdict);
    accepted = verdict.accepted();
  } else {
    nlohmann::json rollouts = nlohmann::json::array();
    std::size_t ok = 0;
    if (const auto* task = std::get_if<StepTask>(&input)) {
      std::set<std::size_t> flagged;
      for (const auto& a : run_baseline_judge(StepBenchItem{"input", task->problem, task->steps, {}}, c.k, gateway)) {
        if (!a.value) {
          rollouts.push_back({{"failure", a.failure}});
          continue;
        }
        ++ok;
        flagged.insert(a.value->begin(), a.value->end());
        rollouts.push_back({{"flagged_steps", *a.value}});
      }
      accepted = flagged.empty();
      manifest["result"] = {{"flagged_steps", flagged}};
      for (auto i : flagged) report += "Flagged step " + std::to_string(i) + "\n";
    } else {
      const auto& paper = std::get<PaperTask>(input);
      std::vector<ErrorList> lists;
      for (const auto& a : run_baseline_judge(PaperBenchItem{"input", paper.latex_source, paper.pdf, {}, {}}, c.k,
                                              gateway)) {
        if (!a.value) {
          rollouts.push_back({{"failure", a.failure}});
          continue;
        }
        ++ok;
        lists.push_back(*a.value);
        rollouts.push_back({{"errors", nlohmann::json::array()}});
        for (const auto& e : *a.value)
          rollouts.back()["errors"].push_back({{"location", e.location}, {"description", e.description}});
      }
      std::set<std::string> seen;
      nlohmann::json errs = nlohmann::json::array();
      for (const auto& l : lists)
        for (const auto& e : l)
          if (seen.insert(normalize_location(e.location)).second) {
            errs.push_back({{"location", e.location}, {"description", e.description}});
            report += "Error at " + e.location + ": " + e.description + "\n";
          }
      accepted = errs.empty();
      manifest["result"] = {{"errors", errs}};
    }
    if (ok == 0) throw Error(Errc::RolloutsExhausted, "all baseline rollouts failed");
    manifest["result"]["rollouts"] = rollouts;
    manifest["result"]["effective_k"] = ok;
    report = std::string(accepted ? "ACCEPTED" : "ERRORS FOUND") + " (" + std::to_string(ok) + " of " +
             std::to_string(c.k) + " rollouts succeeded)\n" + report;
  }
  manifest["usage"] = gateway.ledger().to_json(kReferencePricing);
  write_json(dir / "manifest.json", manifest);
  write_file(dir / "report.txt", report);
  out << report;
  return accepted ? kExitAccepted : kExitErrorsFound;
}

// --- bench ----------------------------------------------------------------

int cmd_bench(RunConfig c, const std::string& dataset_path, std::ostream& out) {
  validate(c);
  BenchConfig bc;
  bc.method = c.method;
  bc.ks = c.ks.empty() ? std::vector<std::size_t>{c.k} : c.ks;
  bc.pipeline = c.pipeline;
  bc.match_policy = c.match_policy;

  BenchOutcome outcome;
  if (c.mode == TaskMode::Step) {
    auto data = load_step_dataset(dataset_path);
    auto dir = prepare_out_dir(c);
    auto gateway = make_gateway(c);
    outcome = run_step_benchmark(data, bc, gateway).outcome;
    outcome.manifest["dataset"] = dataset_path;
    outcome.manifest["run_config"] = to_json(c);
    write_json(dir / "metrics.json", outcome.manifest);
    write_file(dir / "sweep.csv", sweep_csv(outcome.sweep));
  } else {
    auto data = load_paper_dataset(dataset_path);
    auto dir = prepare_out_dir(c);
    auto gateway = make_gateway(c);
    outcome = run_paper_benchmark(data, bc, gateway).outcome;
    outcome.manifest["dataset"] = dataset_path;
    outcome.manifest["run_config"] = to_json(c);
    write_json(dir / "metrics.json", outcome.manifest);
    write_file(dir / "sweep.csv", sweep_csv(outcome.sweep));
  }
  out << sweep_csv(outcome.sweep);
  for (const auto& id : outcome.failed_items) out << "failed item: " << id << "\n";
  for (const auto& id : outcome.excluded_from_sweep) out << "excluded from sweep: " << id << "\n";
  return kExitAccepted;
}

// --- inspect --------------------------------------------------------------

ModuleId label_or_throw(const nlohmann::json& v) {
  auto s = v.get<std::string>();
  auto id = parse_module_label(s);
  if (!id) throw Error(Errc::MalformedId, "not a module label: '" + s + "'");
  return *id;
}

PseudoFormalProof load_graph_json(const std::string& text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::ConfigError, "graph file is not a JSON object");
  try {
    std::vector<ProofModule> modules;
    for (const auto& m : j.at("modules"))
      modules.push_back({label_or_throw(m.at("id")), m.value("premises", ""), m.value("conclusion", ""),
                         m.value("proof", "")});
    auto edges = [&](const char* key) {
      std::vector<ModuleEdge> out;
      if (j.contains(key))
        for (const auto& e : j.at(key)) out.emplace_back(label_or_throw(e.at(0)), label_or_throw(e.at(1)));
      return out;
    };
    return build_proof(std::move(modules), edges("scope"), edges("invokes"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("graph file: ") + e.what());
  }
}

PseudoFormalProof load_inspectable(const std::string& path) {
  auto text = read_file(path);
  if (std::filesystem::path(path).extension() == ".json") return load_graph_json(text);
  auto doc = parse_pf_document(text);
  bool numbered = false;
  for (const auto& b : doc.blocks)
    if ((b.tag == BlockTag::TheoremStatement || b.tag == BlockTag::TheoremProof) && b.id) numbered = true;
  ProofBuildOptions opts;
  opts.mode = numbered ? TheoremMode::MultiTheorem : TheoremMode::SingleTheorem;
  return to_proof(doc, opts);
}

std::string labels(const std::vector<ModuleId>& ids) {
  std::vector<std::string> parts;
  for (const auto& id : ids) parts.push_back(id.label());
  return parts.empty() ? "(none)" : join(parts, ", ");
}

int cmd_inspect(const std::string& path, std::ostream& out, std::ostream& err) {
  std::optional<PseudoFormalProof> proof;
  try {
    proof = load_inspectable(path);
  } catch (const Error& e) {
    if (e.code() == Errc::IoError || e.code() == Errc::ConfigError) throw;
    err << path << (e.line() ? ":" + std::to_string(e.line()) : std::string()) << ": " << e.what() << "\n";
    return kExitErrorsFound;
  }
  const auto& p = *proof;
  std::map<ModuleId, std::vector<ModuleId>> children;
  std::vector<ModuleId> roots;
  for (const auto& m : p.modules()) {
    if (auto parent = p.scope_parent(m.id)) {
      children[*parent].push_back(m.id);
    } else {
      roots.push_back(m.id);
    }
  }
  out << "Scope tree (" << p.size() << " modules):\n";
  std::function<void(const ModuleId&, std::size_t)> walk = [&](const ModuleId& id, std::size_t depth) {
    out << std::string(2 * (depth + 1), ' ') << id.label() << "\n";
    for (const auto& c : children[id]) walk(c, depth + 1);
  };
  for (const auto& r : roots) walk(r, 0);
  out << "Invocation edges:\n";
  for (const auto& [from, to] : p.invoke_edges()) out << "  " << from.label() << " -> " << to.label() << "\n";
  if (p.invoke_edges().empty()) out << "  (none)\n";
  out << "Verification order: " << labels(verification_order(p)) << "\n";

  auto g = goodness_report(p);
  out << "Depth D: " << g.depth << "\n";
  out << "Max block length L: " << g.max_block_len << "\n";
  out << "Max out-degree: " << g.max_out_degree << "\n";
  out << "Context bound L(D+L+1): " << g.context_bound << " (limit " << g.overhead_constant << " x bound = "
      << g.overhead_constant * g.context_bound << ")\n";
  out << "Context lengths:\n";
  for (const auto& m : p.modules()) out << "  " << m.id.label() << ": " << g.per_module_context_len.at(m.id) << "\n";
  out << "Over bound: " << labels(g.over_bound) << "\n";
  if (!g.shared_scope_nodes.empty()) out << "Shared under several theorems: " << labels(g.shared_scope_nodes) << "\n";
  return kExitAccepted;
}

// --- mine -----------------------------------------------------------------

int cmd_mine(const RunConfig& c, const DateWindow& window, const std::string& fixture, std::size_t page_size,
             std::ostream& out) {
  validate(c);
  auto dir = prepare_out_dir(c);
  auto gateway = make_gateway(c);
  std::unique_ptr<ArxivClient> client;
  if (fixture.empty()) {
    client = std::make_unique<LiveArxivClient>();
  } else {
    client = std::make_unique<RecordedArxivClient>(fixture);
  }
  HarvestOptions opts;
  opts.page_size = page_size;
  auto result = harvest(window, *client, gateway, opts);
  write_file(dir / "worklist.jsonl", worklist_jsonl(result));
  write_json(dir / "harvest.json", {{"window", {{"from", window.from}, {"to", window.to}}},
                                    {"funnel",
                                     {{"retrieved", result.funnel.retrieved},
                                      {"regex_passed", result.funnel.regex_passed},
                                      {"retained", result.funnel.retained}}},
                                    {"log", result.log},
                                    {"config", to_json(c)},
                                    {"usage", gateway.ledger().to_json(kReferencePricing)}});
  out << "retrieved " << result.funnel.retrieved << ", regex " << result.funnel.regex_passed << ", retained "
      << result.funnel.retained << "\n";
  return kExitAccepted;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pseudo-Formal proof verification"};
  app.require_subcommand(1);

  std::string config_path, mock_script, base_url, model, mode, method, strictness, ks, policy, out_dir;
  std::size_t k = 0, max_in_flight = 0, max_repair = 0, max_regen = 0;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--mock", mock_script, "mock script (JSON)");
    sub->add_option("--base-url", base_url, "chat-completions endpoint base URL");
    sub->add_option("--model", model, "model name");
    sub->add_option("--mode", mode, "step or paper");
    sub->add_option("--method", method, "pf or baseline");
    sub->add_option("-k,--k", k, "independent rollouts");
    sub->add_option("--strictness", strictness, "calibrator strictness text");
    sub->add_option("--max-in-flight", max_in_flight, "concurrent model calls");
    sub->add_option("--max-repair-rounds", max_repair, "self-repair rounds (step mode)");
    sub->add_option("--max-regenerations", max_regen, "rewrite regeneration attempts");
    sub->add_option("--seed", seed, "mock rollout seed");
    sub->add_option("--out", out_dir, "output directory");
  };

  std::string input, pdf;
  auto* verify = app.add_subcommand("verify", "verify one proof or paper");
  add_common(verify);
  verify->add_option("input", input, "step JSON {problem, steps} or paper .tex")->required();
  verify->add_option("--pdf", pdf, "rendered PDF for paper mode");

  std::string dataset;
  auto* bench = app.add_subcommand("bench", "run a benchmark with a k sweep");
  add_common(bench);
  bench->add_option("dataset", dataset, "JSON-lines dataset")->required();
  bench->add_option("--ks", ks, "comma-separated k values, e.g. 1,2,4,8");
  bench->add_option("--match", policy, "normalized or judge");

  std::string doc;
  auto* inspect = app.add_subcommand("inspect", "print the structure of a proof document");
  inspect->add_option("document", doc, "tag document, or JSON graph {modules, scope, invokes}")->required();

  std::string from, to, fixture;
  std::size_t page_size = 100;
  auto* mine = app.add_subcommand("mine", "harvest corrected arXiv papers");
  add_common(mine);
  mine->add_option("--from", from, "first publication date, YYYY-MM-DD")->required();
  mine->add_option("--to", to, "last publication date, YYYY-MM-DD")->required();
  mine->add_option("--fixture", fixture, "recorded Atom page file or directory instead of the live API");
  mine->add_option("--page-size", page_size, "records per API page");

  std::vector<std::string> argv_store{"pfv"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitAccepted : kExitFailure;
  }

  try {
    if (*inspect) return cmd_inspect(doc, out, err);

    CLI::App* sub = *verify ? verify : *bench ? bench : mine;
    RunConfig c;
    if (!config_path.empty()) {
      auto j = nlohmann::json::parse(read_file(config_path), nullptr, false);
      if (j.is_discarded()) throw Error(Errc::ConfigError, config_path + " is not valid JSON");
      apply_config_json(c, j, std::filesystem::path(config_path).parent_path());
    }
    if (const char* key = std::getenv("PFV_API_KEY")) c.api_key = key;
    if (sub->count("--mock")) c.mock_script = mock_script;
    if (sub->count("--base-url")) c.base_url = base_url;
    if (sub->count("--model")) c.model_name = model;
    if (sub->count("--mode")) c.mode = parse_mode(mode);
    if (sub->count("--method")) c.method = parse_method(method);
    if (sub->count("--k")) c.k = k;
    if (sub->count("--strictness")) c.pipeline.strictness = strictness;
    if (sub->count("--max-in-flight")) c.max_in_flight = max_in_flight;
    if (sub->count("--max-repair-rounds")) c.pipeline.max_repair_rounds = max_repair;
    if (sub->count("--max-regenerations")) c.pipeline.max_regenerations = max_regen;
    if (sub->count("--seed")) c.seed = seed;
    if (sub->count("--out")) c.out_dir = out_dir;
    if (sub == bench && bench->count("--ks")) c.ks = parse_ks(ks);
    if (sub == bench && bench->count("--match")) c.match_policy = parse_policy(policy);

    if (sub == verify) return cmd_verify(c, input, pdf, out);
    if (sub == bench) return cmd_bench(c, dataset, out);
    return cmd_mine(c, DateWindow{from, to}, fixture, page_size, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace pfv
