#include "pfv/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <mutex>

#include "pfv/error.hpp"
#include "pfv/prompts.hpp"
#include "pfv/util.hpp"

namespace pfv {

std::string_view mode_name(TaskMode mode) noexcept {
  return mode == TaskMode::Step ? "step" : "paper";
}

namespace {

// Per-rollout usage, filled from concurrent calls.
class Tally {
 public:
  void add(const std::string& stage, const TokenUsage& usage) {
    std::lock_guard lock(mu_);
    usage_[stage] += usage;
  }
  std::map<std::string, TokenUsage> snapshot() const {
    std::lock_guard lock(mu_);
    return usage_;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, TokenUsage> usage_;
};

struct Caller {
  Gateway& gateway;
  std::size_t rollout;
  Tally* tally;
  std::vector<Attachment> attachments;

  std::string operator()(const char* stage_label, std::string user_prompt,
                         std::optional<std::string> system_prompt = std::nullopt,
                         bool attach = false) const {
    ChatRequest req;
    req.system_prompt = std::move(system_prompt);
    req.user_prompt = std::move(user_prompt);
    if (attach) req.attachments = attachments;
    auto resp = gateway.complete(std::move(req), {stage_label, rollout});
    if (tally) tally->add(stage_label, resp.usage);
    return resp.text;
  }
};

std::vector<Attachment> task_attachments(const TaskInput& input) {
  if (const auto* paper = std::get_if<PaperTask>(&input); paper && paper->pdf)
    return {Attachment{"application/pdf", paper->pdf_filename, *paper->pdf}};
  return {};
}

PseudoFormalProof parse_rewrite(std::string_view text, TaskMode mode, const PipelineConfig& config) {
  ProofBuildOptions opts;
  opts.mode = mode == TaskMode::Step ? TheoremMode::SingleTheorem : TheoremMode::MultiTheorem;
  opts.prune_unmentioned = config.prune_unmentioned;
  return to_proof(parse_pf_document(text), opts);
}

std::string canonical_document(const PseudoFormalProof& proof, std::string_view fallback) {
  try {
    return serialize_proof(proof);
  } catch (const Error&) {
    return std::string(trim(fallback));
  }
}

std::string statement_text(const PseudoFormalProof& proof, const ModuleId& id) {
  const auto& m = proof.module(id);
  return id.label() + "\n" + render_statement(m.premises, m.conclusion);
}

std::string or_none(std::string text) {
  return text.empty() ? "(none)" : text;
}

std::string format_flags(const std::vector<std::pair<ModuleId, std::string>>& flags) {
  std::string out;
  for (const auto& [id, desc] : flags) out += "- " + id.label() + ": " + desc + "\n";
  return std::string(trim(out));
}

std::vector<std::pair<ModuleId, std::string>> check_faithfulness(const PseudoFormalProof& proof,
                                                                 const PaperTask& paper, const Caller& call,
                                                                 std::vector<std::string>& warnings) {
  std::vector<std::pair<ModuleId, std::string>> flags;
  for (const auto& id : verification_order(proof)) {
    auto values = block_prompt_values(proof, id);
    values["original_paper"] = paper.latex_source;
    auto prompt = prompts::render(prompts::get(prompts::kFaithfulness), values);
    std::optional<FaithfulnessVerdict> verdict;
    std::string last_error;
    for (int attempt = 0; attempt < 2 && !verdict; ++attempt) {
      try {
        verdict = parse_faithfulness_verdict(call(stage::kFaithfulness, prompt));
      } catch (const Error& e) {
        if (!is_format_error(e.code())) throw;
        last_error = e.what();
      }
    }
    if (!verdict) {
      warnings.push_back("faithfulness check for " + id.label() + " unparseable, treated as faithful: " + last_error);
      continue;
    }
    if (!verdict->faithful) flags.emplace_back(id, verdict->error_description.value_or(""));
  }
  return flags;
}

TranslationOutcome translate_impl(const TaskInput& input, const PipelineConfig& config, const Caller& call) {
  const TaskMode mode = task_mode(input);
  std::string source;
  std::string prompt;
  if (mode == TaskMode::Step) {
    source = step_source_text(std::get<StepTask>(input));
    prompt = prompts::get(prompts::kStepRewriter);
    auto pos = prompt.find(prompts::kPasteMarker);
    prompt.replace(pos, prompts::kPasteMarker.size(), source);
  } else {
    source = std::get<PaperTask>(input).latex_source;
    prompt = prompts::render(prompts::get(prompts::kPaperRewriter), {{"paper_tex", source}});
  }
  const bool attach = mode == TaskMode::Paper && !call.attachments.empty();

  std::size_t regenerations = 0;
  std::vector<std::string> warnings;
  std::vector<std::pair<ModuleId, std::string>> flags;
  std::string text = call(stage::kRewrite, prompt, std::nullopt, attach);

  auto regenerate = [&](const std::string& errors) {
    ++regenerations;
    if (mode == TaskMode::Step) {
      text = call(stage::kRewrite, prompt);
      return;
    }
    prompts::Values v{{"rewrite_instructions", prompt},
                      {"original_paper", source},
                      {"previous_rewrite", text},
                      {"errors", errors}};
    text = call(stage::kRegenerate, prompts::render(prompts::get(prompts::kPaperRegeneration), v), std::nullopt,
                attach);
  };

  std::optional<PseudoFormalProof> proof;
  while (true) {
    try {
      proof = parse_rewrite(text, mode, config);
    } catch (const Error& e) {
      if (!is_format_error(e.code())) throw;
      if (regenerations >= config.max_regenerations)
        throw Error(Errc::UnparseableRewrite, "rewrite still unparseable after " + std::to_string(regenerations) +
                                                  " regeneration attempts: " + e.what());
      regenerate(std::string("The rewrite could not be parsed: ") + e.what());
      continue;
    }
    if (mode == TaskMode::Step) break;
    flags = check_faithfulness(*proof, std::get<PaperTask>(input), call, warnings);
    if (flags.empty()) break;
    if (regenerations >= config.max_regenerations) {
      warnings.push_back("faithfulness flags remain after " + std::to_string(regenerations) + " regenerations");
      break;
    }
    regenerate(format_flags(flags));
  }

  TranslationOutcome out{*proof, canonical_document(*proof, text), 0, flags, regenerations, warnings};

  if (mode == TaskMode::Step) {
    for (std::size_t round = 0; round < config.max_repair_rounds; ++round) {
      auto reply = call(stage::kRepair, prompts::render(prompts::get(prompts::kSelfRepair),
                                                        {{"problem", source}, {"rewritten_proof", out.document}}));
      if (trim(reply) == "NO_DISCREPANCIES") break;
      try {
        auto patched = parse_rewrite(reply, mode, config);
        out.document = canonical_document(patched, reply);
        out.proof = std::move(patched);
        ++out.repair_rounds_used;
      } catch (const Error& e) {
        if (!is_format_error(e.code())) throw;
        out.warnings.push_back("self-repair round " + std::to_string(round + 1) +
                               " returned an unparseable patch; kept the previous rewrite: " + e.what());
        break;
      }
    }
  }
  return out;
}

BlockReport verify_one(const PseudoFormalProof& proof, const ModuleId& id, const PipelineConfig& config,
                       const Caller& call) {
  auto prompt = prompts::render(prompts::get(prompts::kBlockVerifier), block_prompt_values(proof, id));
  BlockReport report{id, {}, {}, false};
  std::string last_error;
  const int attempts = config.retry_block_parse ? 2 : 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    report.raw_response = call(stage::kVerify, prompt);
    try {
      report.verdict = parse_block_verdict(report.raw_response);
      return report;
    } catch (const Error& e) {
      if (!is_format_error(e.code())) throw;
      last_error = e.what();
    }
  }
  report.parse_failure = true;
  report.verdict = {false, "verifier response could not be parsed: " + last_error};
  return report;
}

std::vector<BlockReport> verify_impl(const PseudoFormalProof& proof, const PipelineConfig& config,
                                     const Caller& call) {
  auto order = verification_order(proof);
  std::vector<BlockReport> reports;
  reports.reserve(order.size());
  if (!config.parallel_blocks) {
    for (const auto& id : order) reports.push_back(verify_one(proof, id, config, call));
    return reports;
  }
  std::vector<std::future<BlockReport>> pending;
  for (const auto& id : order)
    pending.push_back(std::async(std::launch::async, [&, id] { return verify_one(proof, id, config, call); }));
  std::exception_ptr first_failure;
  for (auto& f : pending) {
    try {
      reports.push_back(f.get());
    } catch (...) {
      if (!first_failure) first_failure = std::current_exception();
    }
  }
  if (first_failure) std::rethrow_exception(first_failure);
  return reports;
}

std::string strictness_prompt(const PipelineConfig& config) {
  return "Strictness threshold for reporting errors: " + config.strictness;
}

CalibrationOutcome calibrate_impl(const TaskInput& input, const TranslationOutcome& translation,
                                  const std::vector<BlockReport>& reports, const PipelineConfig& config,
                                  const Caller& call) {
  const auto errors = block_errors(reports);
  const auto error_text = errors.empty() ? std::string("(none)") : render_error_list(errors);
  CalibrationOutcome out;

  if (const auto* task = std::get_if<StepTask>(&input)) {
    if (errors.empty() && config.short_circuit_calibration) {
      out.verdict = StepVerdicts(task->steps.size(), true);
      out.short_circuited = true;
      return out;
    }
    prompts::Values v{{"problem", task->problem},
                      {"steps", format_steps(task->steps)},
                      {"rewritten_proof", translation.document},
                      {"errors", error_text},
                      {"num_steps", std::to_string(task->steps.size())}};
    auto prompt = prompts::render(prompts::get(prompts::kStepCalibrator), v);
    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
      out.raw_response = call(stage::kCalibrate, prompt, strictness_prompt(config));
      try {
        auto result = parse_calibration(out.raw_response, task->steps.size());
        out.verdict = result.step_verdicts;
        out.warnings = result.warnings;
        out.details = std::move(result);
        return out;
      } catch (const Error& e) {
        if (!is_format_error(e.code())) throw;
        last_error = e.what();
      }
    }
    throw Error(Errc::CalibrationParseFailure, "calibrator output unparseable twice: " + last_error);
  }

  const auto& paper = std::get<PaperTask>(input);
  prompts::Values v{{"original_paper", paper.latex_source},
                    {"rewritten_paper", translation.document},
                    {"errors", error_text}};
  auto prompt = prompts::render(prompts::get(prompts::kPaperCalibrator), v);
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    out.raw_response = call(stage::kCalibrate, prompt, strictness_prompt(config), !call.attachments.empty());
    try {
      out.verdict = parse_error_list(out.raw_response);
      return out;
    } catch (const Error& e) {
      if (!is_format_error(e.code())) throw;
      last_error = e.what();
    }
  }
  throw Error(Errc::CalibrationParseFailure, "calibrator output unparseable twice: " + last_error);
}

nlohmann::json usage_json(const TokenUsage& u) {
  return {{"input", u.input}, {"cached", u.cached}, {"output", u.output}};
}

}  // namespace

std::string format_steps(const std::vector<std::string>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += '\n';
    out += "<step>[" + std::to_string(i) + "] " + std::string(trim(steps[i])) + "</step>";
  }
  return out;
}

std::string step_source_text(const StepTask& task) {
  std::vector<std::string> steps;
  for (const auto& s : task.steps) steps.emplace_back(trim(s));
  return "Problem:\n" + std::string(trim(task.problem)) + "\n\nProof:\n" + join(steps, "\n\n");
}

TranslationOutcome translate(const TaskInput& input, Gateway& gateway, const PipelineConfig& config,
                             std::size_t rollout) {
  return translate_impl(input, config, Caller{gateway, rollout, nullptr, task_attachments(input)});
}

prompts::Values block_prompt_values(const PseudoFormalProof& proof, const ModuleId& id) {
  std::vector<std::string> contexts;
  for (const auto& a : proof.scope_ancestors(id)) contexts.push_back(statement_text(proof, a));
  std::vector<std::string> established;
  for (const auto& d : proof.dependencies(id)) established.push_back(statement_text(proof, d));
  return {{"contexts", or_none(join(contexts, "\n\n"))},
          {"established_results", or_none(join(established, "\n\n"))},
          {"assertion", statement_text(proof, id)},
          {"proof", proof.module(id).proof}};
}

std::vector<BlockReport> verify_blocks(const PseudoFormalProof& proof, Gateway& gateway,
                                       const PipelineConfig& config, std::size_t rollout) {
  return verify_impl(proof, config, Caller{gateway, rollout, nullptr, {}});
}

ErrorList block_errors(const std::vector<BlockReport>& reports) {
  ErrorList out;
  for (const auto& r : reports)
    if (!r.verdict.correct) out.push_back({r.id.label(), r.verdict.error_description.value_or("")});
  return out;
}

CalibrationOutcome calibrate(const TaskInput& input, const TranslationOutcome& translation,
                             const std::vector<BlockReport>& reports, Gateway& gateway,
                             const PipelineConfig& config, std::size_t rollout) {
  return calibrate_impl(input, translation, reports, config, Caller{gateway, rollout, nullptr, task_attachments(input)});
}

std::set<std::size_t> flagged_steps(const StepVerdicts& verdicts) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < verdicts.size(); ++i)
    if (!verdicts[i]) out.insert(i);
  return out;
}

std::string normalize_location(std::string_view location) {
  std::string out;
  bool space = false;
  for (char c : trim(location)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  while (!out.empty() && std::string_view(".,;:!?").find(out.back()) != std::string_view::npos) out.pop_back();
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

RolloutResult run_rollout(const TaskInput& input, Gateway& gateway, const PipelineConfig& config,
                          std::size_t rollout) {
  Tally tally;
  Caller call{gateway, rollout, &tally, task_attachments(input)};
  auto translation = translate_impl(input, config, call);
  auto reports = verify_impl(translation.proof, config, call);
  auto calibration = calibrate_impl(input, translation, reports, config, call);
  return RolloutResult{rollout, std::move(translation), std::move(reports), std::move(calibration), tally.snapshot()};
}

std::size_t AggregatedVerdict::effective_k() const {
  return static_cast<std::size_t>(
      std::count_if(rollouts.begin(), rollouts.end(), [](const RolloutRecord& r) { return r.result.has_value(); }));
}

AggregatedVerdict aggregate(TaskMode mode, std::vector<RolloutRecord> rollouts) {
  AggregatedVerdict out;
  out.mode = mode;
  out.k = rollouts.size();
  std::map<std::string, std::size_t> seen;
  for (const auto& r : rollouts) {
    if (!r.result) continue;
    const auto& verdict = r.result->calibration.verdict;
    if (const auto* steps = std::get_if<StepVerdicts>(&verdict)) {
      for (auto i : flagged_steps(*steps)) out.flagged_steps.insert(i);
    } else {
      for (const auto& e : std::get<ErrorList>(verdict)) {
        auto key = normalize_location(e.location);
        auto [it, fresh] = seen.emplace(key, out.errors.size());
        if (fresh) {
          out.errors.push_back(e);
          out.error_provenance.push_back({r.rollout});
        } else if (out.error_provenance[it->second].back() != r.rollout) {
          out.error_provenance[it->second].push_back(r.rollout);
        }
      }
    }
  }
  out.rollouts = std::move(rollouts);
  return out;
}

std::vector<RolloutRecord> execute_rollouts(const TaskInput& input, std::size_t k, Gateway& gateway,
                                            const PipelineConfig& config) {
  auto attempt = [&](std::size_t r) {
    RolloutRecord rec{r, std::nullopt, std::nullopt};
    try {
      rec.result = run_rollout(input, gateway, config, r);
    } catch (const std::exception& e) {
      rec.failure = e.what();
    }
    return rec;
  };
  std::vector<RolloutRecord> records;
  if (config.parallel_rollouts && k > 1) {
    std::vector<std::future<RolloutRecord>> pending;
    for (std::size_t r = 0; r < k; ++r) pending.push_back(std::async(std::launch::async, attempt, r));
    for (auto& f : pending) records.push_back(f.get());
  } else {
    for (std::size_t r = 0; r < k; ++r) records.push_back(attempt(r));
  }
  return records;
}

AggregatedVerdict run_rollouts(const TaskInput& input, std::size_t k, Gateway& gateway, const PipelineConfig& config) {
  if (k == 0) throw Error(Errc::ConfigError, "k must be at least 1");
  auto out = aggregate(task_mode(input), execute_rollouts(input, k, gateway, config));
  if (out.effective_k() == 0)
    throw Error(Errc::RolloutsExhausted,
                "all " + std::to_string(k) + " rollouts failed; first: " + out.rollouts.front().failure.value_or(""));
  return out;
}

nlohmann::json to_json(const PipelineConfig& config) {
  return {{"strictness", config.strictness},
          {"max_repair_rounds", config.max_repair_rounds},
          {"max_regenerations", config.max_regenerations},
          {"retry_block_parse", config.retry_block_parse},
          {"short_circuit_calibration", config.short_circuit_calibration},
          {"prune_unmentioned", config.prune_unmentioned}};
}

nlohmann::json to_json(const RolloutResult& result) {
  nlohmann::json j;
  j["rollout"] = result.rollout;
  const auto& t = result.translation;
  nlohmann::json flags = nlohmann::json::array();
  for (const auto& [id, desc] : t.faithfulness_flags) flags.push_back({{"module", id.label()}, {"description", desc}});
  j["translation"] = {{"document", t.document},
                      {"modules", t.proof.size()},
                      {"repair_rounds_used", t.repair_rounds_used},
                      {"regeneration_attempts", t.regeneration_attempts},
                      {"faithfulness_flags", flags},
                      {"warnings", t.warnings}};
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : result.reports) {
    nlohmann::json rj{{"module", r.id.label()}, {"verdict", r.verdict.correct ? "CORRECT" : "INCORRECT"}};
    if (r.verdict.error_description) rj["error_description"] = *r.verdict.error_description;
    if (r.parse_failure) rj["parse_failure"] = true;
    reports.push_back(rj);
  }
  j["reports"] = reports;
  const auto& c = result.calibration;
  nlohmann::json cj{{"short_circuited", c.short_circuited}, {"warnings", c.warnings}};
  if (const auto* steps = std::get_if<StepVerdicts>(&c.verdict)) {
    cj["step_verdicts"] = *steps;
    cj["flagged_steps"] = flagged_steps(*steps);
  } else {
    nlohmann::json errs = nlohmann::json::array();
    for (const auto& e : std::get<ErrorList>(c.verdict))
      errs.push_back({{"location", e.location}, {"description", e.description}});
    cj["errors"] = errs;
  }
  j["calibration"] = cj;
  nlohmann::json usage = nlohmann::json::object();
  for (const auto& [stage, u] : result.usage) usage[stage] = usage_json(u);
  j["usage"] = usage;
  return j;
}

nlohmann::json to_json(const AggregatedVerdict& verdict) {
  nlohmann::json j;
  j["mode"] = std::string(mode_name(verdict.mode));
  j["k"] = verdict.k;
  j["effective_k"] = verdict.effective_k();
  j["accepted"] = verdict.accepted();
  if (verdict.mode == TaskMode::Step) {
    j["flagged_steps"] = verdict.flagged_steps;
  } else {
    nlohmann::json errs = nlohmann::json::array();
    for (std::size_t i = 0; i < verdict.errors.size(); ++i)
      errs.push_back({{"location", verdict.errors[i].location},
                      {"description", verdict.errors[i].description},
                      {"rollouts", verdict.error_provenance[i]}});
    j["errors"] = errs;
  }
  nlohmann::json rollouts = nlohmann::json::array();
  for (const auto& r : verdict.rollouts) {
    if (r.result) {
      rollouts.push_back(to_json(*r.result));
    } else {
      rollouts.push_back({{"rollout", r.rollout}, {"failure", r.failure.value_or("")}});
    }
  }
  j["rollouts"] = rollouts;
  return j;
}

std::string render_report(const TaskInput& input, const AggregatedVerdict& verdict) {
  std::string out = verdict.accepted() ? "ACCEPTED" : "ERRORS FOUND";
  out += " (" + std::to_string(verdict.effective_k()) + " of " + std::to_string(verdict.k) + " rollouts succeeded)\n";
  if (verdict.mode == TaskMode::Step) {
    const auto& steps = std::get<StepTask>(input).steps;
    for (auto i : verdict.flagged_steps) {
      out += "Flagged step " + std::to_string(i);
      if (i < steps.size()) {
        auto text = std::string(trim(steps[i]));
        if (char_count(text) > 80) text = text.substr(0, 77) + "...";
        out += ": " + text;
      }
      out += "\n";
    }
  } else {
    for (std::size_t i = 0; i < verdict.errors.size(); ++i)
      out += "Error at " + verdict.errors[i].location + ": " + verdict.errors[i].description + "\n";
  }
  for (const auto& r : verdict.rollouts) {
    if (!r.result) {
      out += "Rollout " + std::to_string(r.rollout) + " failed: " + r.failure.value_or("") + "\n";
      continue;
    }
    for (const auto& rep : r.result->reports)
      if (!rep.verdict.correct)
        out += "Rollout " + std::to_string(r.rollout) + ", " + rep.id.label() +
               " incorrect: " + rep.verdict.error_description.value_or("") + "\n";
  }
  return out;
}

}  // namespace pfv
