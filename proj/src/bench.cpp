#include "pfv/bench.hpp"

#include <algorithm>
#include <regex>

#include "pfv/error.hpp"
#include "pfv/prompts.hpp"
#include "pfv/util.hpp"

namespace pfv {

std::set<std::size_t> StepBenchItem::incorrect_steps() const {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!labels[i]) out.insert(i);
  return out;
}

namespace {

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  const auto text = read_file(path);
  std::size_t line_no = 0;
  for (auto line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw Error(Errc::SchemaViolation, path.string() + ": record is not a JSON object", line_no);
    try {
      fn(j, line_no);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::SchemaViolation, path.string() + ": " + e.what(), line_no);
    }
  }
}

std::string required_string(const nlohmann::json& j, const char* key, const std::filesystem::path& path,
                            std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string())
    throw Error(Errc::SchemaViolation, path.string() + ": missing string field \"" + key + "\"", line);
  return it->get<std::string>();
}

std::string record_id(const nlohmann::json& j, const std::filesystem::path& path, std::size_t line) {
  auto it = j.find("id");
  if (it != j.end() && it->is_number_integer()) return std::to_string(it->get<long long>());
  return required_string(j, "id", path, line);
}

}  // namespace

std::vector<StepBenchItem> load_step_dataset(const std::filesystem::path& path) {
  std::vector<StepBenchItem> items;
  std::set<std::string> ids;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t line) {
    StepBenchItem item;
    item.item_id = record_id(j, path, line);
    item.problem = required_string(j, "problem", path, line);
    if (!j.contains("steps") || !j["steps"].is_array())
      throw Error(Errc::SchemaViolation, path.string() + ": \"steps\" must be a list", line);
    item.steps = j["steps"].get<std::vector<std::string>>();
    if (!j.contains("labels") || !j["labels"].is_array())
      throw Error(Errc::SchemaViolation, path.string() + ": \"labels\" must be a list", line);
    item.labels = j["labels"].get<std::vector<bool>>();
    if (item.labels.size() != item.steps.size())
      throw Error(Errc::SchemaViolation,
                  path.string() + ": " + std::to_string(item.labels.size()) + " labels for " +
                      std::to_string(item.steps.size()) + " steps",
                  line);
    if (!ids.insert(item.item_id).second)
      throw Error(Errc::SchemaViolation, path.string() + ": duplicate id '" + item.item_id + "'", line);
    items.push_back(std::move(item));
  });
  return items;
}

std::vector<std::string> split_locations(std::string_view text) {
  static const std::regex sep(R"(\s*(?:[,;]|\band\b)\s*)", std::regex::icase);
  std::vector<std::string> out;
  std::string s(text);
  for (std::sregex_token_iterator it(s.begin(), s.end(), sep, -1), end; it != end; ++it) {
    auto piece = trim(it->str());
    if (!piece.empty()) out.emplace_back(piece);
  }
  return out;
}

std::vector<PaperBenchItem> load_paper_dataset(const std::filesystem::path& path) {
  std::vector<PaperBenchItem> items;
  std::set<std::string> ids;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t line) {
    PaperBenchItem item;
    item.item_id = record_id(j, path, line);
    item.latex_source = required_string(j, "latex_source", path, line);
    item.revision_comment = j.value("revision_comment", "");
    auto locs = j.find("error_locations");
    if (locs == j.end())
      throw Error(Errc::SchemaViolation, path.string() + ": missing \"error_locations\"", line);
    if (locs->is_string()) {
      item.error_locations = split_locations(locs->get<std::string>());
    } else if (locs->is_array()) {
      for (const auto& l : *locs)
        for (auto& piece : split_locations(l.get<std::string>())) item.error_locations.push_back(std::move(piece));
    } else {
      throw Error(Errc::SchemaViolation, path.string() + ": \"error_locations\" must be a string or a list", line);
    }
    if (item.error_locations.empty())
      throw Error(Errc::SchemaViolation, path.string() + ": at least one error location is required", line);
    if (j.contains("pdf_base64")) {
      item.pdf = base64_decode(j["pdf_base64"].get<std::string>());
    } else if (j.contains("pdf_path")) {
      item.pdf = read_file(path.parent_path() / j["pdf_path"].get<std::string>());
    }
    if (!ids.insert(item.item_id).second)
      throw Error(Errc::SchemaViolation, path.string() + ": duplicate id '" + item.item_id + "'", line);
    items.push_back(std::move(item));
  });
  return items;
}

std::string_view policy_name(MatchPolicy policy) noexcept {
  return policy == MatchPolicy::Judge ? "judge" : "normalized";
}

std::string_view method_name(Method method) noexcept {
  return method == Method::Baseline ? "baseline" : "pf";
}

std::optional<bool> JudgeCache::find(const std::string& predicted, const std::string& truth) const {
  std::lock_guard lock(mu_);
  auto it = answers_.find({predicted, truth});
  if (it == answers_.end()) return std::nullopt;
  return it->second;
}

void JudgeCache::store(const std::string& predicted, const std::string& truth, bool same) {
  std::lock_guard lock(mu_);
  answers_[{predicted, truth}] = same;
}

namespace {

bool judge_pair(std::string_view predicted, const std::string& truth, Gateway& gateway, JudgeCache* cache) {
  std::string p(trim(predicted));
  if (cache)
    if (auto hit = cache->find(p, truth)) return *hit;
  ChatRequest req;
  req.user_prompt = prompts::render(prompts::get(prompts::kLocationJudge), {{"predicted", p}, {"truth", truth}});
  std::string reply;
  try {
    reply = gateway.complete(std::move(req), {stage::kJudge, 0}).text;
  } catch (const Error& e) {
    throw Error(Errc::JudgeUnavailable, e.what());
  }
  auto word = single_word_answer(reply);
  if (!word || (*word != "yes" && *word != "no"))
    throw Error(Errc::JudgeUnavailable, "judge answered '" + std::string(trim(reply)).substr(0, 80) + "'");
  const bool same = *word == "yes";
  if (cache) cache->store(p, truth, same);
  return same;
}

MatchDecision match_against(std::string_view predicted, const std::vector<std::string>& truths,
                            const std::vector<bool>& taken, MatchPolicy policy, Gateway* gateway, JudgeCache* cache) {
  MatchDecision d{std::string(predicted), std::nullopt, MatchPolicy::Normalized, std::nullopt};
  const auto key = normalize_location(predicted);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (!taken[i] && normalize_location(truths[i]) == key) {
      d.matched_truth = truths[i];
      return d;
    }
  }
  if (policy != MatchPolicy::Judge) return d;
  if (!gateway) {
    d.warning = "JudgeUnavailable: no gateway configured; used normalized matching";
    return d;
  }
  try {
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (taken[i]) continue;
      if (judge_pair(predicted, truths[i], *gateway, cache)) {
        d.matched_truth = truths[i];
        d.method = MatchPolicy::Judge;
        return d;
      }
    }
    d.method = MatchPolicy::Judge;
  } catch (const Error& e) {
    d.warning = std::string(e.what()) + "; used normalized matching";
  }
  return d;
}

}  // namespace

MatchDecision match_location(std::string_view predicted, const std::vector<std::string>& truths, MatchPolicy policy,
                             Gateway* gateway, JudgeCache* cache) {
  return match_against(predicted, truths, std::vector<bool>(truths.size(), false), policy, gateway, cache);
}

std::vector<MatchDecision> match_locations(const std::vector<std::string>& predicted,
                                           const std::vector<std::string>& truths, MatchPolicy policy,
                                           Gateway* gateway, JudgeCache* cache) {
  std::vector<bool> taken(truths.size(), false);
  std::vector<MatchDecision> out;
  for (const auto& p : predicted) {
    auto d = match_against(p, truths, taken, policy, gateway, cache);
    if (d.matched_truth) {
      for (std::size_t i = 0; i < truths.size(); ++i) {
        if (!taken[i] && truths[i] == *d.matched_truth) {
          taken[i] = true;
          break;
        }
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

LabeledPrediction<std::string> paper_prediction(const std::string& item_id, const std::vector<std::string>& truths,
                                                const std::vector<MatchDecision>& matches) {
  LabeledPrediction<std::string> p;
  p.item_id = item_id;
  for (const auto& t : truths) p.truth.insert(normalize_location(t));
  for (const auto& m : matches) {
    if (m.matched_truth) {
      p.predicted.insert(normalize_location(*m.matched_truth));
    } else {
      p.predicted.insert("unmatched: " + normalize_location(m.predicted_location));
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Baseline grader

std::vector<Attempt<std::set<std::size_t>>> run_baseline_judge(const StepBenchItem& item, std::size_t k,
                                                                Gateway& gateway) {
  const auto system = prompts::get(prompts::kStepBaselineSystem);
  const auto user = prompts::render(prompts::get(prompts::kStepBaselineUser),
                                    {{"problem", item.problem}, {"steps", format_steps(item.steps)}});
  std::vector<Attempt<std::set<std::size_t>>> out;
  for (std::size_t r = 0; r < k; ++r) {
    Attempt<std::set<std::size_t>> a;
    for (int attempt = 0; attempt < 2 && !a.value; ++attempt) {
      try {
        ChatRequest req{system, user, {}, {}, std::nullopt, std::nullopt};
        auto verdicts = parse_step_verdict_line(gateway.complete(std::move(req), {stage::kBaseline, r}).text,
                                                item.steps.size());
        a.value = flagged_steps(verdicts);
        a.failure.clear();
      } catch (const Error& e) {
        a.failure = e.what();
        if (!is_format_error(e.code())) break;
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Attempt<ErrorList>> run_baseline_judge(const PaperBenchItem& item, std::size_t k, Gateway& gateway) {
  const auto user = prompts::render(prompts::get(prompts::kPaperBaseline), {{"paper_tex", item.latex_source}});
  std::vector<Attachment> attachments;
  if (item.pdf) attachments.push_back({"application/pdf", item.item_id + ".pdf", *item.pdf});
  std::vector<Attempt<ErrorList>> out;
  for (std::size_t r = 0; r < k; ++r) {
    Attempt<ErrorList> a;
    for (int attempt = 0; attempt < 2 && !a.value; ++attempt) {
      try {
        ChatRequest req{std::nullopt, user, attachments, {}, std::nullopt, std::nullopt};
        a.value = parse_error_list(gateway.complete(std::move(req), {stage::kBaseline, r}).text);
        a.failure.clear();
      } catch (const Error& e) {
        a.failure = e.what();
        if (!is_format_error(e.code())) break;
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark runners

namespace {

std::size_t max_k(const BenchConfig& config) {
  if (config.ks.empty()) throw Error(Errc::ConfigError, "at least one k is required");
  std::size_t k = 0;
  for (auto v : config.ks) {
    if (v == 0) throw Error(Errc::ConfigError, "k must be at least 1");
    k = std::max(k, v);
  }
  return k;
}

template <typename T, typename Fn>
std::vector<Attempt<T>> pf_attempts(const TaskInput& input, std::size_t k, Gateway& gateway,
                                    const PipelineConfig& config, Fn&& extract) {
  std::vector<Attempt<T>> out;
  for (auto& rec : execute_rollouts(input, k, gateway, config)) {
    Attempt<T> a;
    if (rec.result) {
      a.value = extract(rec.result->calibration.verdict);
    } else {
      a.failure = rec.failure.value_or("unknown failure");
    }
    out.push_back(std::move(a));
  }
  return out;
}

template <typename T>
std::vector<T> successes(const std::vector<Attempt<T>>& attempts) {
  std::vector<T> out;
  for (const auto& a : attempts)
    if (a.value) out.push_back(*a.value);
  return out;
}

nlohmann::json sweep_json(const Sweep& sweep) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [k, s] : sweep) out.push_back({{"k", k}, {"metrics", to_json(s)}});
  return out;
}

nlohmann::json base_manifest(TaskMode mode, const BenchConfig& config, const BenchOutcome& o, Gateway& gateway) {
  return {{"mode", std::string(mode_name(mode))},
          {"config", to_json(config)},
          {"metrics", to_json(o.summary)},
          {"sweep", sweep_json(o.sweep)},
          {"failed_items", o.failed_items},
          {"excluded_from_sweep", o.excluded_from_sweep},
          {"warnings", o.warnings},
          {"usage", gateway.ledger().to_json(kReferencePricing)}};
}

nlohmann::json error_list_json(const ErrorList& errors) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : errors) out.push_back({{"location", e.location}, {"description", e.description}});
  return out;
}

// Union of locations in first-appearance order, deduplicated by normalized location.
ErrorList ordered_union(const std::vector<ErrorList>& lists, std::size_t k) {
  ErrorList out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < k && i < lists.size(); ++i)
    for (const auto& e : lists[i])
      if (seen.insert(normalize_location(e.location)).second) out.push_back(e);
  return out;
}

std::vector<std::string> locations(const ErrorList& errors) {
  std::vector<std::string> out;
  for (const auto& e : errors) out.push_back(e.location);
  return out;
}

}  // namespace

nlohmann::json to_json(const BenchConfig& config) {
  return {{"method", std::string(method_name(config.method))},
          {"ks", config.ks},
          {"match_policy", std::string(policy_name(config.match_policy))},
          {"pipeline", to_json(config.pipeline)}};
}

StepBenchResult run_step_benchmark(const std::vector<StepBenchItem>& dataset, const BenchConfig& config,
                                   Gateway& gateway) {
  const auto kmax = max_k(config);
  StepBenchResult result;
  std::vector<LabeledPrediction<std::size_t>> headline;
  std::vector<RolloutPredictions<std::size_t>> sweepable;

  for (const auto& item : dataset) {
    StepItemRecord rec;
    rec.item_id = item.item_id;
    rec.truth = item.incorrect_steps();
    if (config.method == Method::Baseline) {
      rec.rollouts = run_baseline_judge(item, kmax, gateway);
    } else {
      rec.rollouts = pf_attempts<std::set<std::size_t>>(
          StepTask{item.problem, item.steps}, kmax, gateway, config.pipeline,
          [](const Calibrated& c) { return flagged_steps(std::get<StepVerdicts>(c)); });
    }
    auto ok = successes(rec.rollouts);
    for (const auto& s : ok) rec.predicted.insert(s.begin(), s.end());
    if (ok.empty()) {
      result.outcome.failed_items.push_back(item.item_id);
    } else {
      headline.push_back({item.item_id, rec.truth, rec.predicted});
      if (ok.size() >= kmax) {
        sweepable.push_back({item.item_id, rec.truth, ok});
      } else {
        result.outcome.excluded_from_sweep.push_back(item.item_id);
      }
      if (ok.size() < kmax)
        result.outcome.warnings.push_back(item.item_id + ": effective k " + std::to_string(ok.size()) + " of " +
                                          std::to_string(kmax));
    }
    result.items.push_back(std::move(rec));
  }
  result.outcome.summary = summarize(headline);
  result.outcome.sweep = k_sweep(sweepable, config.ks);

  auto manifest = base_manifest(TaskMode::Step, config, result.outcome, gateway);
  nlohmann::json items = nlohmann::json::array();
  for (const auto& rec : result.items) {
    nlohmann::json rollouts = nlohmann::json::array();
    for (const auto& a : rec.rollouts) {
      if (a.value) {
        rollouts.push_back({{"flagged_steps", *a.value}});
      } else {
        rollouts.push_back({{"failure", a.failure}});
      }
    }
    items.push_back({{"id", rec.item_id}, {"truth", rec.truth}, {"predicted", rec.predicted}, {"rollouts", rollouts}});
  }
  manifest["items"] = items;
  result.outcome.manifest = std::move(manifest);
  return result;
}

PaperBenchResult run_paper_benchmark(const std::vector<PaperBenchItem>& dataset, const BenchConfig& config,
                                     Gateway& gateway) {
  const auto kmax = max_k(config);
  PaperBenchResult result;
  JudgeCache cache;
  std::vector<LabeledPrediction<std::string>> headline;
  std::map<std::size_t, std::vector<LabeledPrediction<std::string>>> per_k;

  auto match = [&](const std::vector<std::string>& predicted, const std::vector<std::string>& truths) {
    auto decisions = match_locations(predicted, truths, config.match_policy, &gateway, &cache);
    for (const auto& d : decisions)
      if (d.warning) result.outcome.warnings.push_back(*d.warning);
    return decisions;
  };

  for (const auto& item : dataset) {
    PaperItemRecord rec;
    rec.item_id = item.item_id;
    rec.truths = item.error_locations;
    if (config.method == Method::Baseline) {
      rec.rollouts = run_baseline_judge(item, kmax, gateway);
    } else {
      PaperTask task{item.latex_source, item.pdf, item.item_id + ".pdf"};
      rec.rollouts = pf_attempts<ErrorList>(task, kmax, gateway, config.pipeline,
                                            [](const Calibrated& c) { return std::get<ErrorList>(c); });
    }
    auto ok = successes(rec.rollouts);
    if (ok.empty()) {
      result.outcome.failed_items.push_back(item.item_id);
      result.items.push_back(std::move(rec));
      continue;
    }
    rec.predicted = ordered_union(ok, ok.size());
    rec.matches = match(locations(rec.predicted), rec.truths);
    headline.push_back(paper_prediction(item.item_id, rec.truths, rec.matches));
    if (ok.size() >= kmax) {
      for (auto k : config.ks)
        per_k[k].push_back(paper_prediction(item.item_id, rec.truths,
                                            match(locations(ordered_union(ok, k)), rec.truths)));
    } else {
      result.outcome.excluded_from_sweep.push_back(item.item_id);
      result.outcome.warnings.push_back(item.item_id + ": effective k " + std::to_string(ok.size()) + " of " +
                                        std::to_string(kmax));
    }
    result.items.push_back(std::move(rec));
  }
  result.outcome.summary = summarize(headline);
  for (auto k : config.ks) result.outcome.sweep.emplace_back(k, summarize(per_k[k]));

  auto manifest = base_manifest(TaskMode::Paper, config, result.outcome, gateway);
  nlohmann::json items = nlohmann::json::array();
  for (const auto& rec : result.items) {
    nlohmann::json rollouts = nlohmann::json::array();
    for (const auto& a : rec.rollouts) {
      if (a.value) {
        rollouts.push_back({{"errors", error_list_json(*a.value)}});
      } else {
        rollouts.push_back({{"failure", a.failure}});
      }
    }
    nlohmann::json matches = nlohmann::json::array();
    for (const auto& m : rec.matches)
      matches.push_back({{"predicted", m.predicted_location},
                         {"matched_truth", m.matched_truth ? nlohmann::json(*m.matched_truth) : nlohmann::json()},
                         {"method", std::string(policy_name(m.method))}});
    items.push_back({{"id", rec.item_id},
                     {"truths", rec.truths},
                     {"predicted", error_list_json(rec.predicted)},
                     {"matches", matches},
                     {"rollouts", rollouts}});
  }
  manifest["items"] = items;
  result.outcome.manifest = std::move(manifest);
  return result;
}

}  // namespace pfv
