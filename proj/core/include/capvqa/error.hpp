// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace capvqa {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kParse,
  kMalformedRecord,
  kUnknownTypeString,
  kDuplicateQuestionId,
  kNetwork,
  kHttpStatus,
  kEmptyChoice,
  kZeroVector,
  kDimMismatch,
  kAllCandidatesDegenerate,
  kEmptyCandidateSet,
  kMissingKeywords,
  kImageUnreadable,
  kEmptyCaption,
  kEmptyContext,
  kEmptyQuestion,
  kUnknownQuestionId,
  kConflictingPayload,
  kConfig,
  kInternal,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace capvqa
