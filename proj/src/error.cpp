#include "pfv/error.hpp"

namespace pfv {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::CycleInDependencyGraph: return "CycleInDependencyGraph";
    case Errc::ScopeNotForest: return "ScopeNotForest";
    case Errc::DanglingEdge: return "DanglingEdge";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::UnknownId: return "UnknownId";
    case Errc::BadLemmaPrefix: return "BadLemmaPrefix";
    case Errc::ForwardReference: return "ForwardReference";
    case Errc::EmptyConclusion: return "EmptyConclusion";
    case Errc::MalformedId: return "MalformedId";
    case Errc::MalformedTag: return "MalformedTag";
    case Errc::NestedTag: return "NestedTag";
    case Errc::MissingId: return "MissingId";
    case Errc::TextOutsideTags: return "TextOutsideTags";
    case Errc::OrphanProof: return "OrphanProof";
    case Errc::MissingProof: return "MissingProof";
    case Errc::MissingTheorem: return "MissingTheorem";
    case Errc::UnserializableText: return "UnserializableText";
    case Errc::NoJsonBlock: return "NoJsonBlock";
    case Errc::UnknownVerdictString: return "UnknownVerdictString";
    case Errc::MissingDescription: return "MissingDescription";
    case Errc::NoVerdictLine: return "NoVerdictLine";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::UnknownToken: return "UnknownToken";
    case Errc::NoCalibrationBlock: return "NoCalibrationBlock";
    case Errc::MalformedCalibration: return "MalformedCalibration";
    case Errc::NoErrorsBlock: return "NoErrorsBlock";
    case Errc::MalformedErrorEntry: return "MalformedErrorEntry";
    case Errc::TransportExhausted: return "TransportExhausted";
    case Errc::BackendRefused: return "BackendRefused";
    case Errc::AttachmentUnsupported: return "AttachmentUnsupported";
    case Errc::ScriptMiss: return "ScriptMiss";
    case Errc::InvalidScript: return "InvalidScript";
    case Errc::UnparseableRewrite: return "UnparseableRewrite";
    case Errc::CalibrationParseFailure: return "CalibrationParseFailure";
    case Errc::RolloutsExhausted: return "RolloutsExhausted";
    case Errc::InsufficientRollouts: return "InsufficientRollouts";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::JudgeUnavailable: return "JudgeUnavailable";
    case Errc::UnparseableLabel: return "UnparseableLabel";
    case Errc::ApiUnavailable: return "ApiUnavailable";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

std::string Error::format(Errc code, const std::string& message, std::size_t line) {
  std::string out(errc_name(code));
  if (line != 0) out += " at line " + std::to_string(line);
  out += ": ";
  out += message;
  return out;
}

}  // namespace pfv
