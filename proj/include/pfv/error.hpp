#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pfv {

// Every failure the library reports is a pfv::Error carrying one of these codes.
enum class Errc {
  // pf_core
  CycleInDependencyGraph,
  ScopeNotForest,
  DanglingEdge,
  DuplicateId,
  UnknownId,
  BadLemmaPrefix,
  ForwardReference,
  EmptyConclusion,
  MalformedId,
  // pf_text
  MalformedTag,
  NestedTag,
  MissingId,
  TextOutsideTags,
  OrphanProof,
  MissingProof,
  MissingTheorem,
  UnserializableText,
  NoJsonBlock,
  UnknownVerdictString,
  MissingDescription,
  NoVerdictLine,
  LengthMismatch,
  UnknownToken,
  NoCalibrationBlock,
  MalformedCalibration,
  NoErrorsBlock,
  MalformedErrorEntry,
  // llm_gateway
  TransportExhausted,
  BackendRefused,
  AttachmentUnsupported,
  ScriptMiss,
  InvalidScript,
  // verify_pipeline
  UnparseableRewrite,
  CalibrationParseFailure,
  RolloutsExhausted,
  // metrics / bench
  InsufficientRollouts,
  SchemaViolation,
  JudgeUnavailable,
  // corpus_miner
  UnparseableLabel,
  ApiUnavailable,
  // cli
  ConfigError,
  IoError,
};

std::string_view errc_name(Errc code) noexcept;

// Structural and response-format failures: what a model can fix by answering again.
constexpr bool is_format_error(Errc code) noexcept { return code <= Errc::MalformedErrorEntry; }

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::size_t line = 0)
      : std::runtime_error(format(code, message, line)), code_(code), detail_(message), line_(line) {}

  Errc code() const noexcept { return code_; }
  // Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }
  // 1-based source line for text-format errors, 0 when not applicable.
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(Errc code, const std::string& message, std::size_t line);

  Errc code_;
  std::string detail_;
  std::size_t line_;
};

}  // namespace pfv
