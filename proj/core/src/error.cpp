// SPDX-License-Identifier: Apache-2.0
#include "capvqa/error.hpp"

namespace capvqa {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kUnknownTypeString: return "UnknownTypeString";
    case ErrorCode::kDuplicateQuestionId: return "DuplicateQuestionId";
    case ErrorCode::kNetwork: return "Network";
    case ErrorCode::kHttpStatus: return "HttpStatus";
    case ErrorCode::kEmptyChoice: return "EmptyChoice";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kAllCandidatesDegenerate: return "AllCandidatesDegenerate";
    case ErrorCode::kEmptyCandidateSet: return "EmptyCandidateSet";
    case ErrorCode::kMissingKeywords: return "MissingKeywords";
    case ErrorCode::kImageUnreadable: return "ImageUnreadable";
    case ErrorCode::kEmptyCaption: return "EmptyCaption";
    case ErrorCode::kEmptyContext: return "EmptyContext";
    case ErrorCode::kEmptyQuestion: return "EmptyQuestion";
    case ErrorCode::kUnknownQuestionId: return "UnknownQuestionId";
    case ErrorCode::kConflictingPayload: return "ConflictingPayload";
    case ErrorCode::kConfig: return "Config";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

}  // namespace capvqa
