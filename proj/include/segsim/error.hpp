#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace segsim {

enum class ErrorCode {
  MissingColumn,
  UnknownColumn,
  RangeViolation,
  UnknownLevel,
  DuplicateRespondentId,
  MissingValue,
  EmptySelection,
  InvalidCodebook,
  MissingItem,
  UncoveredCombination,
  InvalidDecisionTable,
  DegenerateTarget,
  EmptyCandidates,
  CountMismatch,
  UnknownIdentifier,
  UnknownConfiguration,
  MissingAttribute,
  InvalidTemplate,
  ParseFailure,
  TransientFailure,
  EndpointUnreachable,
  EndpointRejected,
  LengthMismatch,
  InvalidDistribution,
  TooFewSubgroups,
  LabelMismatch,
  ZeroSpreadReference,
  DegenerateTable,
  EmptyList,
  IoFailure,
  InvalidConfig,
  StaleInput,
  MissingStage,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can map it onto exit statuses without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  // Returns a copy with `context` prepended to the message, same code.
  Error with_context(const std::string& context) const;

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace segsim
