#include <chrono>

#include "httplib.h"
#include "pfv/error.hpp"
#include "pfv/gateway.hpp"
#include "pfv/util.hpp"

namespace pfv {

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw Error(Errc::ConfigError, "HTTP backend needs a base_url");
}

nlohmann::json HttpBackend::request_body(const ChatRequest& request) const {
  nlohmann::json messages = nlohmann::json::array();
  if (request.system_prompt) messages.push_back({{"role", "system"}, {"content", *request.system_prompt}});
  if (request.attachments.empty()) {
    messages.push_back({{"role", "user"}, {"content", request.user_prompt}});
  } else {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& a : request.attachments) {
      parts.push_back({{"type", "file"},
                       {"file",
                        {{"filename", a.filename.empty() ? "attachment" : a.filename},
                         {"file_data", "data:" + a.media_type + ";base64," + base64_encode(a.bytes)}}}});
    }
    parts.push_back({{"type", "text"}, {"text", request.user_prompt}});
    messages.push_back({{"role", "user"}, {"content", parts}});
  }
  nlohmann::json body{{"model", request.model_name}, {"messages", messages}};
  if (request.effort_hint) body["reasoning_effort"] = *request.effort_hint;
  return body;
}

ChatResponse HttpBackend::parse_response_body(const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::BackendRefused, "response body is not JSON");
  ChatResponse out;
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    out.text = content.is_string() ? content.get<std::string>() : std::string{};
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      out.usage.input = u->value("prompt_tokens", std::int64_t{0});
      out.usage.output = u->value("completion_tokens", std::int64_t{0});
      if (auto d = u->find("prompt_tokens_details"); d != u->end() && d->is_object())
        out.usage.cached = d->value("cached_tokens", std::int64_t{0});
      // Cached tokens are reported inside prompt_tokens; bill them once.
      out.usage.input = std::max<std::int64_t>(0, out.usage.input - out.usage.cached);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BackendRefused, std::string("unexpected response shape: ") + e.what());
  }
  return out;
}

ChatResponse HttpBackend::send(const ChatRequest& request, const CallContext& /*context*/,
                               std::chrono::milliseconds deadline) {
  httplib::Client client(config_.base_url);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(deadline).count();
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(deadline).count() % 1000000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto result = client.Post(config_.path, headers, request_body(request).dump(), "application/json");
  if (!result) throw TransientFailure("transport error: " + httplib::to_string(result.error()));
  const int status = result->status;
  if (status == 408 || status == 409 || status == 429 || status >= 500)
    throw TransientFailure("HTTP " + std::to_string(status));
  if (status < 200 || status >= 300)
    throw Error(Errc::BackendRefused, "HTTP " + std::to_string(status) + ": " + result->body.substr(0, 500));
  return parse_response_body(result->body);
}

}  // namespace pfv
