#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace pfv {

struct TokenUsage {
  std::int64_t input = 0;
  std::int64_t cached = 0;
  std::int64_t output = 0;

  TokenUsage& operator+=(const TokenUsage& o) {
    input += o.input;
    cached += o.cached;
    output += o.output;
    return *this;
  }
  bool operator==(const TokenUsage&) const = default;
};

/// Dollars per million tokens.
struct Pricing {
  double input_per_m = 0;
  double cached_per_m = 0;
  double output_per_m = 0;
};

/// List prices of the reference model.
inline constexpr Pricing kReferencePricing{0.75, 0.075, 4.50};

/// Exact dollar cost; round only for display.
double cost(const TokenUsage& usage, const Pricing& pricing) noexcept;
/// "$33.11"
std::string format_dollars(double dollars);

struct Attachment {
  std::string media_type;  // e.g. "application/pdf"
  std::string filename;
  std::string bytes;
};

struct ChatRequest {
  std::optional<std::string> system_prompt;
  std::string user_prompt;
  std::vector<Attachment> attachments;
  std::string model_name;              // empty: gateway default
  std::optional<std::string> effort_hint;
  std::optional<std::size_t> max_retries;  // empty: gateway default
};

/// Who is calling: the ledger stage label and the rollout the call belongs to.
struct CallContext {
  std::string stage;
  std::size_t rollout = 0;
};

struct ChatResponse {
  std::string text;
  TokenUsage usage;
  std::size_t attempts = 1;
};

/// Thrown by backends for failures worth retrying (timeouts, 429, 5xx).
class TransientFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Backend {
 public:
  virtual ~Backend() = default;
  /// Throws TransientFailure, or pfv::Error(BackendRefused) for permanent failures.
  virtual ChatResponse send(const ChatRequest& request, const CallContext& context,
                            std::chrono::milliseconds deadline) = 0;
  virtual bool supports_attachments() const = 0;
  virtual std::string describe() const = 0;
};

/// Whitespace-normalized prompt text: CRLF folded, trailing spaces per line
/// and surrounding blank lines removed.
std::string canonicalize_prompt(std::string_view text);

/// SHA-256 hex of (stage, canonical system prompt, canonical user prompt).
std::string request_fingerprint(std::string_view stage, const ChatRequest& request);

/// Deterministic replay backend driven by a JSON script.
///
/// Script: a list of entries (or {"supports_attachments": bool, "entries": [...]}).
/// Each entry selects requests by any of
///   "key_hint": 64-hex fingerprint (exact match; other values are labels only),
///   "stage":    ledger stage label,
///   "match":    ECMAScript regex searched in the user prompt,
///   "contains": substring of the user prompt,
/// and supplies replies either as "responses": [...] (shared by all rollouts)
/// or "rollouts": [[...], [...]] (rollout r uses list (r + seed) mod n).
/// A reply is {"text", "usage": {"input","cached","output"}} or {"fail": "transient"|"refused"}.
/// Successive calls with the same fingerprint in the same rollout walk the
/// list and stick on its last element. Entries are tried in order.
class ScriptedBackend final : public Backend {
 public:
  struct Reply {
    enum class Failure { None, Transient, Refused };
    std::string text;
    std::optional<TokenUsage> usage;
    Failure failure = Failure::None;
  };
  struct Entry {
    std::string key_hint;
    std::optional<std::string> fingerprint;
    std::optional<std::string> stage;
    std::optional<std::string> match_source;
    std::optional<std::regex> match;
    std::optional<std::string> contains;
    std::vector<std::vector<Reply>> rollouts;
  };

  explicit ScriptedBackend(std::vector<Entry> entries, bool supports_attachments = true, std::uint64_t seed = 0);
  ScriptedBackend(ScriptedBackend&& other) noexcept;
  static ScriptedBackend from_json(const nlohmann::json& script, std::uint64_t seed = 0);
  static ScriptedBackend from_file(const std::filesystem::path& path, std::uint64_t seed = 0);

  ChatResponse send(const ChatRequest& request, const CallContext& context, std::chrono::milliseconds deadline) override;
  bool supports_attachments() const override { return supports_attachments_; }
  std::string describe() const override { return "scripted"; }

  /// Total requests served (including scripted failures).
  std::size_t calls() const;

 private:
  std::vector<Entry> entries_;
  bool supports_attachments_;
  std::uint64_t seed_;
  mutable std::mutex mu_;
  std::map<std::tuple<std::size_t, std::size_t, std::string>, std::size_t> cursor_;
  std::size_t calls_ = 0;
};

struct HttpBackendConfig {
  std::string base_url;                       // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string api_key;
  bool supports_attachments = false;          // sends PDFs as OpenAI "file" content parts
};

/// Chat-completions over HTTP(S) with JSON bodies.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ChatResponse send(const ChatRequest& request, const CallContext& context, std::chrono::milliseconds deadline) override;
  bool supports_attachments() const override { return config_.supports_attachments; }
  std::string describe() const override { return "http " + config_.base_url + config_.path; }

  /// Request body for `request` (exposed for tests).
  nlohmann::json request_body(const ChatRequest& request) const;
  /// Extracts text and usage from a chat-completions response body.
  static ChatResponse parse_response_body(const std::string& body);

 private:
  HttpBackendConfig config_;
};

struct StageTotals {
  std::size_t calls = 0;
  std::size_t attempts = 0;
  TokenUsage usage;
};

/// Thread-safe per-stage usage accumulator.
class UsageLedger {
 public:
  void record(const std::string& stage, const TokenUsage& usage, std::size_t attempts);
  std::map<std::string, StageTotals> stages() const;
  TokenUsage total() const;
  std::size_t total_calls() const;
  double total_cost(const Pricing& pricing) const;
  nlohmann::json to_json(const Pricing& pricing) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, StageTotals> stages_;
};

struct RetryPolicy {
  std::chrono::milliseconds base{1000};
  std::chrono::milliseconds cap{60000};
};

struct AttemptRecord {
  std::string stage;
  std::size_t rollout = 0;
  std::size_t attempt = 0;  // 1-based
  std::string outcome;      // "ok", "transient: ...", "refused: ..."
};

/// Retries, throttling and metering in front of a Backend. Safe for concurrent use.
class Gateway {
 public:
  struct Options {
    std::string model_name;
    std::optional<std::string> effort_hint;
    std::size_t max_retries = 3;
    RetryPolicy retry;
    std::chrono::milliseconds attempt_deadline{std::chrono::seconds(600)};
    std::size_t max_in_flight = 8;
    std::uint64_t jitter_seed = 0;
    /// Replaces std::this_thread::sleep_for (tests pass a no-op).
    std::function<void(std::chrono::milliseconds)> sleeper;
  };

  Gateway(std::shared_ptr<Backend> backend, Options options);

  /// Throws Error with AttachmentUnsupported, BackendRefused or TransportExhausted.
  ChatResponse complete(ChatRequest request, const CallContext& context);

  UsageLedger& ledger() noexcept { return ledger_; }
  const UsageLedger& ledger() const noexcept { return ledger_; }
  std::vector<AttemptRecord> attempt_log() const;
  const Backend& backend() const noexcept { return *backend_; }
  const Options& options() const noexcept { return options_; }

  /// Full-jitter exponential delay before retry number `retry` (1-based).
  std::chrono::milliseconds backoff_delay(std::size_t retry);

 private:
  void acquire();
  void release();

  std::shared_ptr<Backend> backend_;
  Options options_;
  UsageLedger ledger_;
  mutable std::mutex mu_;
  std::condition_variable slot_free_;
  std::size_t in_flight_ = 0;
  std::mt19937_64 jitter_;
  std::vector<AttemptRecord> attempts_;
};

}  // namespace pfv
