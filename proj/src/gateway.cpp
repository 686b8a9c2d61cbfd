#include "pfv/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

#include "pfv/error.hpp"
#include "pfv/util.hpp"

namespace pfv {

double cost(const TokenUsage& usage, const Pricing& pricing) noexcept {
  return static_cast<double>(usage.input) / 1e6 * pricing.input_per_m +
         static_cast<double>(usage.cached) / 1e6 * pricing.cached_per_m +
         static_cast<double>(usage.output) / 1e6 * pricing.output_per_m;
}

std::string format_dollars(double dollars) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "$%.2f", std::round(dollars * 100.0) / 100.0);
  return buf;
}

std::string canonicalize_prompt(std::string_view text) {
  std::string out;
  for (auto line : split_lines(text)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    out += line;
    out += '\n';
  }
  return std::string(trim(out));
}

std::string request_fingerprint(std::string_view stage, const ChatRequest& request) {
  std::string material(stage);
  material += '\x1f';
  material += canonicalize_prompt(request.system_prompt.value_or(""));
  material += '\x1e';
  material += canonicalize_prompt(request.user_prompt);
  return sha256_hex(material);
}

// ---------------------------------------------------------------------------
// ScriptedBackend

namespace {

bool is_hex_digest(const std::string& s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

ScriptedBackend::Reply parse_reply(const nlohmann::json& j) {
  ScriptedBackend::Reply r;
  if (j.is_string()) {
    r.text = j.get<std::string>();
    return r;
  }
  if (!j.is_object()) throw Error(Errc::InvalidScript, "reply must be a string or an object");
  if (auto f = j.find("fail"); f != j.end()) {
    auto kind = f->get<std::string>();
    if (kind == "transient") {
      r.failure = ScriptedBackend::Reply::Failure::Transient;
    } else if (kind == "refused") {
      r.failure = ScriptedBackend::Reply::Failure::Refused;
    } else {
      throw Error(Errc::InvalidScript, "unknown failure kind '" + kind + "'");
    }
  }
  r.text = j.value("text", "");
  if (auto u = j.find("usage"); u != j.end()) {
    TokenUsage usage;
    usage.input = u->value("input", std::int64_t{0});
    usage.cached = u->value("cached", std::int64_t{0});
    usage.output = u->value("output", std::int64_t{0});
    if (usage.input < 0 || usage.cached < 0 || usage.output < 0)
      throw Error(Errc::InvalidScript, "negative token count");
    r.usage = usage;
  }
  return r;
}

std::vector<ScriptedBackend::Reply> parse_reply_list(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw Error(Errc::InvalidScript, "reply list must be a non-empty array");
  std::vector<ScriptedBackend::Reply> out;
  for (const auto& r : j) out.push_back(parse_reply(r));
  return out;
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::vector<Entry> entries, bool supports_attachments, std::uint64_t seed)
    : entries_(std::move(entries)), supports_attachments_(supports_attachments), seed_(seed) {}

ScriptedBackend::ScriptedBackend(ScriptedBackend&& other) noexcept
    : entries_(std::move(other.entries_)),
      supports_attachments_(other.supports_attachments_),
      seed_(other.seed_),
      cursor_(std::move(other.cursor_)),
      calls_(other.calls_) {}

ScriptedBackend ScriptedBackend::from_json(const nlohmann::json& script, std::uint64_t seed) {
  const nlohmann::json* list = &script;
  bool attachments = true;
  if (script.is_object()) {
    attachments = script.value("supports_attachments", true);
    auto it = script.find("entries");
    if (it == script.end()) throw Error(Errc::InvalidScript, "script object needs an \"entries\" list");
    list = &*it;
  }
  if (!list->is_array()) throw Error(Errc::InvalidScript, "script must be a list of entries");
  std::vector<Entry> entries;
  for (const auto& e : *list) {
    if (!e.is_object()) throw Error(Errc::InvalidScript, "script entry must be an object");
    Entry entry;
    entry.key_hint = e.value("key_hint", "");
    if (is_hex_digest(entry.key_hint)) entry.fingerprint = entry.key_hint;
    if (e.contains("stage")) entry.stage = e.at("stage").get<std::string>();
    if (e.contains("match")) {
      entry.match_source = e.at("match").get<std::string>();
      try {
        entry.match.emplace(*entry.match_source, std::regex::ECMAScript);
      } catch (const std::regex_error& ex) {
        throw Error(Errc::InvalidScript, "bad match regex '" + *entry.match_source + "': " + ex.what());
      }
    }
    if (e.contains("contains")) entry.contains = e.at("contains").get<std::string>();
    if (e.contains("responses")) entry.rollouts.push_back(parse_reply_list(e.at("responses")));
    if (e.contains("rollouts")) {
      if (!entry.rollouts.empty()) throw Error(Errc::InvalidScript, "entry has both responses and rollouts");
      for (const auto& r : e.at("rollouts")) entry.rollouts.push_back(parse_reply_list(r));
    }
    if (entry.rollouts.empty()) throw Error(Errc::InvalidScript, "entry '" + entry.key_hint + "' has no replies");
    entries.push_back(std::move(entry));
  }
  return ScriptedBackend(std::move(entries), attachments, seed);
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path, std::uint64_t seed) {
  auto text = read_file(path);
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::InvalidScript, path.string() + " is not valid JSON");
  return from_json(j, seed);
}

ChatResponse ScriptedBackend::send(const ChatRequest& request, const CallContext& context,
                                   std::chrono::milliseconds /*deadline*/) {
  const auto fp = request_fingerprint(context.stage, request);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.fingerprint && *e.fingerprint != fp) continue;
    if (e.stage && *e.stage != context.stage) continue;
    if (e.contains && request.user_prompt.find(*e.contains) == std::string::npos) continue;
    if (e.match && !std::regex_search(request.user_prompt, *e.match)) continue;

    const auto& replies = e.rollouts[(context.rollout + seed_) % e.rollouts.size()];
    Reply reply;
    {
      std::lock_guard lock(mu_);
      ++calls_;
      auto& n = cursor_[{i, context.rollout, fp}];
      reply = replies[std::min(n, replies.size() - 1)];
      ++n;
    }
    switch (reply.failure) {
      case Reply::Failure::Transient: throw TransientFailure("scripted transient failure");
      case Reply::Failure::Refused: throw Error(Errc::BackendRefused, "scripted refusal");
      case Reply::Failure::None: break;
    }
    ChatResponse out;
    out.text = reply.text;
    if (reply.usage) {
      out.usage = *reply.usage;
    } else {
      // No tokenizer: four characters per token.
      std::size_t prompt_chars = request.user_prompt.size() + request.system_prompt.value_or("").size();
      out.usage = {static_cast<std::int64_t>(prompt_chars / 4), 0, static_cast<std::int64_t>(reply.text.size() / 4)};
    }
    return out;
  }
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  throw Error(Errc::ScriptMiss, "no script entry for stage '" + context.stage + "' (fingerprint " + fp + ")");
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// ---------------------------------------------------------------------------
// UsageLedger

void UsageLedger::record(const std::string& stage, const TokenUsage& usage, std::size_t attempts) {
  std::lock_guard lock(mu_);
  auto& s = stages_[stage];
  ++s.calls;
  s.attempts += attempts;
  s.usage += usage;
}

std::map<std::string, StageTotals> UsageLedger::stages() const {
  std::lock_guard lock(mu_);
  return stages_;
}

TokenUsage UsageLedger::total() const {
  std::lock_guard lock(mu_);
  TokenUsage t;
  for (const auto& [_, s] : stages_) t += s.usage;
  return t;
}

std::size_t UsageLedger::total_calls() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [_, s] : stages_) n += s.calls;
  return n;
}

double UsageLedger::total_cost(const Pricing& pricing) const {
  return cost(total(), pricing);
}

nlohmann::json UsageLedger::to_json(const Pricing& pricing) const {
  auto usage_json = [&](const TokenUsage& u) {
    return nlohmann::json{{"input", u.input}, {"cached", u.cached}, {"output", u.output}};
  };
  nlohmann::json out;
  nlohmann::json stages = nlohmann::json::object();
  for (const auto& [name, s] : this->stages()) {
    stages[name] = {{"calls", s.calls}, {"attempts", s.attempts}, {"usage", usage_json(s.usage)},
                    {"cost", format_dollars(cost(s.usage, pricing))}};
  }
  out["stages"] = stages;
  out["total"] = {{"calls", total_calls()}, {"usage", usage_json(total())},
                  {"cost", format_dollars(total_cost(pricing))}};
  out["pricing_per_million"] = {
      {"input", pricing.input_per_m}, {"cached", pricing.cached_per_m}, {"output", pricing.output_per_m}};
  return out;
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<Backend> backend, Options options)
    : backend_(std::move(backend)), options_(std::move(options)), jitter_(options_.jitter_seed) {
  if (!backend_) throw Error(Errc::ConfigError, "gateway needs a backend");
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
  if (!options_.sleeper) options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

void Gateway::acquire() {
  std::unique_lock lock(mu_);
  slot_free_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
  ++in_flight_;
}

void Gateway::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  slot_free_.notify_one();
}

std::chrono::milliseconds Gateway::backoff_delay(std::size_t retry) {
  auto ceiling = options_.retry.base.count();
  for (std::size_t i = 1; i < retry && ceiling < options_.retry.cap.count(); ++i) ceiling *= 2;
  ceiling = std::min<std::int64_t>(ceiling, options_.retry.cap.count());
  if (ceiling <= 0) return std::chrono::milliseconds(0);
  std::lock_guard lock(mu_);
  std::uniform_int_distribution<std::int64_t> dist(0, ceiling);
  return std::chrono::milliseconds(dist(jitter_));
}

std::vector<AttemptRecord> Gateway::attempt_log() const {
  std::lock_guard lock(mu_);
  return attempts_;
}

ChatResponse Gateway::complete(ChatRequest request, const CallContext& context) {
  if (trim(request.user_prompt).empty()) throw Error(Errc::ConfigError, "empty user prompt");
  if (!request.attachments.empty() && !backend_->supports_attachments())
    throw Error(Errc::AttachmentUnsupported, backend_->describe() + " cannot take file attachments");
  if (request.model_name.empty()) request.model_name = options_.model_name;
  if (!request.effort_hint) request.effort_hint = options_.effort_hint;
  const std::size_t retries = request.max_retries.value_or(options_.max_retries);

  auto log = [&](std::size_t attempt, std::string outcome) {
    std::lock_guard lock(mu_);
    attempts_.push_back({context.stage, context.rollout, attempt, std::move(outcome)});
  };

  std::string last_error;
  for (std::size_t attempt = 1; attempt <= retries + 1; ++attempt) {
    if (attempt > 1) options_.sleeper(backoff_delay(attempt - 1));
    acquire();
    try {
      auto response = backend_->send(request, context, options_.attempt_deadline);
      release();
      response.attempts = attempt;
      log(attempt, "ok");
      ledger_.record(context.stage, response.usage, attempt);
      return response;
    } catch (const TransientFailure& e) {
      release();
      last_error = e.what();
      log(attempt, std::string("transient: ") + e.what());
    } catch (const Error& e) {
      release();
      log(attempt, std::string("refused: ") + e.what());
      throw;
    } catch (...) {
      release();
      throw;
    }
  }
  throw Error(Errc::TransportExhausted, "stage '" + context.stage + "' failed after " + std::to_string(retries + 1) +
                                            " attempts: " + last_error);
}

}  // namespace pfv
