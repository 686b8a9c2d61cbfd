#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfv/bench.hpp"
#include "pfv/pipeline.hpp"

namespace pfv {

// Exit codes.
inline constexpr int kExitAccepted = 0;
inline constexpr int kExitErrorsFound = 1;
inline constexpr int kExitFailure = 2;

struct RunConfig {
  // Backend: a mock script, or a live endpoint.
  std::string mock_script;
  std::string base_url;
  std::string api_path = "/v1/chat/completions";
  std::string api_key;  // environment only; never written out
  bool supports_attachments = false;

  std::string model_name;
  std::optional<std::string> effort;
  TaskMode mode = TaskMode::Step;
  Method method = Method::PF;
  std::size_t k = 1;
  std::vector<std::size_t> ks;  // bench sweep; defaults to {k}
  MatchPolicy match_policy = MatchPolicy::Normalized;
  PipelineConfig pipeline;
  std::size_t max_retries = 3;
  std::size_t max_in_flight = 8;
  std::uint64_t seed = 0;
  std::string out_dir = "pfv-out";
};

/// Overlays the keys present in `j`. Relative paths resolve against `base_dir`.
/// Throws ConfigError on unknown keys or bad values.
void apply_config_json(RunConfig& config, const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Snapshot for manifests; omits the API key.
nlohmann::json to_json(const RunConfig& config);

/// Throws ConfigError when the configuration cannot run.
void validate(const RunConfig& config);

std::shared_ptr<Backend> make_backend(const RunConfig& config);

/// Entry point behind the `pfv` binary; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pfv
