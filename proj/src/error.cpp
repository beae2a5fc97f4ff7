#include "segsim/error.hpp"

namespace segsim {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::RangeViolation: return "RangeViolation";
    case ErrorCode::UnknownLevel: return "UnknownLevel";
    case ErrorCode::DuplicateRespondentId: return "DuplicateRespondentId";
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::InvalidCodebook: return "InvalidCodebook";
    case ErrorCode::MissingItem: return "MissingItem";
    case ErrorCode::UncoveredCombination: return "UncoveredCombination";
    case ErrorCode::InvalidDecisionTable: return "InvalidDecisionTable";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::EmptyCandidates: return "EmptyCandidates";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorCode::UnknownConfiguration: return "UnknownConfiguration";
    case ErrorCode::MissingAttribute: return "MissingAttribute";
    case ErrorCode::InvalidTemplate: return "InvalidTemplate";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::TransientFailure: return "TransientFailure";
    case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::EndpointRejected: return "EndpointRejected";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::TooFewSubgroups: return "TooFewSubgroups";
    case ErrorCode::LabelMismatch: return "LabelMismatch";
    case ErrorCode::ZeroSpreadReference: return "ZeroSpreadReference";
    case ErrorCode::DegenerateTable: return "DegenerateTable";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::StaleInput: return "StaleInput";
    case ErrorCode::MissingStage: return "MissingStage";
  }
  return "Unknown";
}

namespace {
std::string format_message(ErrorCode code, const std::string& message) {
  std::string out(to_string(code));
  out += ": ";
  out += message;
  return out;
}
}  // namespace

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(format_message(code, message)), code_(code), detail_(message) {}

Error Error::with_context(const std::string& context) const {
  return Error(code_, context + ": " + detail_);
}

}  // namespace segsim
