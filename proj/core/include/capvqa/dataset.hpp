// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capvqa {

// Enumerator order is the row order of the question-type overview table and
// is used for every report.
enum class StructuralType { verify, query, choose, logical, compare };
enum class SemanticType { object, attribute, category, relation, global };

inline constexpr std::array kStructuralTypes = {
    StructuralType::verify, StructuralType::query, StructuralType::choose,
    StructuralType::logical, StructuralType::compare};
inline constexpr std::array kSemanticTypes = {
    SemanticType::object, SemanticType::attribute, SemanticType::category,
    SemanticType::relation, SemanticType::global};

std::string_view to_string(StructuralType type);
std::string_view to_string(SemanticType type);

/// Exact lowercase names only; anything else throws kUnknownTypeString.
StructuralType parse_structural(std::string_view text);
SemanticType parse_semantic(std::string_view text);

struct QuestionRecord {
  std::string question_id;
  std::string image_id;
  std::string question;
  std::string gold_answer;
  StructuralType structural = StructuralType::verify;
  SemanticType semantic = SemanticType::object;

  bool operator==(const QuestionRecord&) const = default;
};

enum class DatasetFormat { gqa_json, fixture_jsonl };

DatasetFormat parse_dataset_format(std::string_view text);
std::string_view to_string(DatasetFormat format);

/// `.jsonl` files are fixtures, everything else is treated as upstream GQA.
DatasetFormat infer_dataset_format(const std::filesystem::path& path);

/// Loads and validates a question file. Records come back sorted by
/// question_id. Malformed input throws with the offending line (fixture) or
/// question id (GQA).
std::vector<QuestionRecord> load_questions(const std::filesystem::path& path,
                                           DatasetFormat format);

std::vector<QuestionRecord> parse_fixture_jsonl(std::string_view text);
std::vector<QuestionRecord> parse_gqa_json(std::string_view text);

/// One fixture line (no trailing newline), keys in fixture order.
std::string to_fixture_line(const QuestionRecord& record);

struct DatasetSummary {
  std::size_t total = 0;
  std::array<std::size_t, kStructuralTypes.size()> per_structural{};
  std::array<std::size_t, kSemanticTypes.size()> per_semantic{};

  std::size_t count(StructuralType type) const {
    return per_structural[static_cast<std::size_t>(type)];
  }
  std::size_t count(SemanticType type) const {
    return per_semantic[static_cast<std::size_t>(type)];
  }

  bool operator==(const DatasetSummary&) const = default;
};

DatasetSummary summarize(const std::vector<QuestionRecord>& records);

/// Plain-text table of the summary as printed by `capvqa ingest`.
std::string format_summary(const DatasetSummary& summary);

}  // namespace capvqa
