// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capvqa/backends.hpp"
#include "capvqa/dataset.hpp"
#include "capvqa/qa.hpp"

namespace capvqa {

struct MatchPolicy {
  enum class Kind { exact, semantic };

  Kind kind = Kind::exact;
  /// Inclusive cosine threshold in (0, 1]; semantic policies only.
  double threshold = 0.0;

  static MatchPolicy exact();
  static MatchPolicy semantic(double threshold);

  /// "EM" or "sim=0.70".
  std::string label() const;
  void validate() const;

  bool operator==(const MatchPolicy&) const = default;
};

/// Comma-separated list: "em" (or "exact") and bare thresholds.
std::vector<MatchPolicy> parse_policies(std::string_view spec);
MatchPolicy parse_policy(std::string_view item);

/// EM, 0.7, 0.8, 0.9.
std::vector<MatchPolicy> canonical_policies();

struct MatchResult {
  bool matched = false;
  std::optional<double> similarity;
  /// One side embedded to the zero vector; the verdict is false.
  bool degenerate = false;
};

/// Inputs must already be normalized. Equal strings short-circuit to
/// (true, 1.0) without touching the embedder.
MatchResult match_answer(std::string_view prediction, std::string_view gold,
                         const MatchPolicy& policy, EmbeddingBackend* embedder);

struct EvalRecord {
  std::string question_id;
  std::string prediction;
  std::string gold;
  std::optional<double> similarity;
  bool degenerate = false;
  /// Answer missing or errored.
  bool failed = false;
  /// Parallel to the policies the run was evaluated with.
  std::vector<bool> verdicts;

  bool operator==(const EvalRecord&) const = default;
};

struct Tally {
  std::size_t correct = 0;
  std::size_t total = 0;

  /// 100 * correct / total, or 0 for an empty tally.
  double accuracy() const;
  bool operator==(const Tally&) const = default;
};

struct PolicyResult {
  MatchPolicy policy;
  Tally overall;
  /// Only categories with at least one question appear.
  std::map<StructuralType, Tally> per_structural;
  std::map<SemanticType, Tally> per_semantic;

  bool operator==(const PolicyResult&) const = default;
};

struct ReportMetadata {
  std::size_t total_questions = 0;
  std::size_t answered = 0;
  std::size_t errored = 0;
  std::size_t missing = 0;
  std::size_t degenerate_similarity = 0;
  std::string embedding_model;
  std::string manifest_ref;
  std::vector<std::string> deviation_flags;

  bool operator==(const ReportMetadata&) const = default;
};

struct RunReport {
  std::vector<PolicyResult> results;
  ReportMetadata metadata;

  bool operator==(const RunReport&) const = default;
};

/// Flag recorded because normalization goes beyond punctuation removal.
inline constexpr std::string_view kNormalizationDeviationFlag =
    "normalize_answer: lowercase + whitespace collapse in addition to "
    "punctuation removal";

struct Evaluation {
  RunReport report;
  std::vector<EvalRecord> records;
};

/// Scores every question under every policy. Missing and errored answers
/// count as incorrect. `embedder` may be null when all policies are exact.
/// Throws kUnknownQuestionId for answers that match no question.
Evaluation evaluate_run(const std::vector<AnswerRecord>& answers,
                        const std::vector<QuestionRecord>& questions,
                        const std::vector<MatchPolicy>& policies,
                        EmbeddingBackend* embedder);

/// Throws kInternal if any policy's overall correct count differs from
/// either partition sum.
void check_partition_consistency(const RunReport& report);

/// EM <= sim@t_high <= sim@t_low for every row present in the report.
bool thresholds_monotone(const RunReport& report);

struct ErrorReport {
  double share_of_errors_yesno = 0.0;
  double nonyesno_rate_among_wrong_yesno = 0.0;
  double unanswerable_rate = 0.0;
  double over_length_rate = 0.0;

  std::size_t total = 0;
  std::size_t wrong = 0;
  std::size_t wrong_yesno = 0;
  std::size_t wrong_yesno_nonyesno = 0;
  std::size_t unanswerable = 0;
  std::size_t over_length = 0;

  bool operator==(const ErrorReport&) const = default;
};

/// Yes/no questions are those whose normalized gold is "yes" or "no".
ErrorReport analyze_errors(const std::vector<AnswerRecord>& answers,
                           const std::vector<QuestionRecord>& questions,
                           const MatchPolicy& policy,
                           EmbeddingBackend* embedder);

/// Same, reusing records from evaluate_run; `policy_index` selects the
/// verdict column.
ErrorReport analyze_errors(const std::vector<AnswerRecord>& answers,
                           const std::vector<EvalRecord>& records,
                           std::size_t policy_index);

}  // namespace capvqa
