// SPDX-License-Identifier: Apache-2.0
#include "capvqa/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "capvqa/error.hpp"
#include "capvqa/text.hpp"
#include "json.hpp"

namespace capvqa {
namespace {

using nlohmann::json;

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open dataset " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string required_string(const json& object, const char* key,
                            const std::string& where) {
  auto it = object.find(key);
  if (it == object.end() || !it->is_string()) {
    throw Error(ErrorCode::kMalformedRecord,
                where + ": missing or non-string field '" + key + "'");
  }
  return it->get<std::string>();
}

void validate_record(const QuestionRecord& record, const std::string& where) {
  if (trim(record.question_id).empty()) {
    throw Error(ErrorCode::kMalformedRecord, where + ": empty question_id");
  }
  if (trim(record.image_id).empty()) {
    throw Error(ErrorCode::kMalformedRecord, where + ": empty image_id");
  }
  if (trim(record.question).empty()) {
    throw Error(ErrorCode::kMalformedRecord, where + ": empty question");
  }
  if (trim(record.gold_answer).empty()) {
    throw Error(ErrorCode::kMalformedRecord, where + ": empty answer");
  }
}

void finalize(std::vector<QuestionRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const QuestionRecord& a, const QuestionRecord& b) {
              return a.question_id < b.question_id;
            });
  auto dup = std::adjacent_find(
      records.begin(), records.end(),
      [](const QuestionRecord& a, const QuestionRecord& b) {
        return a.question_id == b.question_id;
      });
  if (dup != records.end()) {
    throw Error(ErrorCode::kDuplicateQuestionId,
                "question_id '" + dup->question_id + "' appears more than once");
  }
}

// Upstream GQA annotations abbreviate most semantic types.
SemanticType parse_gqa_semantic(std::string_view text) {
  if (text == "obj") return SemanticType::object;
  if (text == "attr") return SemanticType::attribute;
  if (text == "cat") return SemanticType::category;
  if (text == "rel") return SemanticType::relation;
  return parse_semantic(text);
}

}  // namespace

std::string_view to_string(StructuralType type) {
  switch (type) {
    case StructuralType::verify: return "verify";
    case StructuralType::query: return "query";
    case StructuralType::choose: return "choose";
    case StructuralType::logical: return "logical";
    case StructuralType::compare: return "compare";
  }
  return "?";
}

std::string_view to_string(SemanticType type) {
  switch (type) {
    case SemanticType::object: return "object";
    case SemanticType::attribute: return "attribute";
    case SemanticType::category: return "category";
    case SemanticType::relation: return "relation";
    case SemanticType::global: return "global";
  }
  return "?";
}

StructuralType parse_structural(std::string_view text) {
  for (StructuralType type : kStructuralTypes) {
    if (to_string(type) == text) return type;
  }
  throw Error(ErrorCode::kUnknownTypeString,
              "unknown structural type '" + std::string(text) + "'");
}

SemanticType parse_semantic(std::string_view text) {
  for (SemanticType type : kSemanticTypes) {
    if (to_string(type) == text) return type;
  }
  throw Error(ErrorCode::kUnknownTypeString,
              "unknown semantic type '" + std::string(text) + "'");
}

DatasetFormat parse_dataset_format(std::string_view text) {
  if (text == "gqa-json") return DatasetFormat::gqa_json;
  if (text == "fixture-jsonl") return DatasetFormat::fixture_jsonl;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown dataset format '" + std::string(text) + "'");
}

std::string_view to_string(DatasetFormat format) {
  return format == DatasetFormat::gqa_json ? "gqa-json" : "fixture-jsonl";
}

DatasetFormat infer_dataset_format(const std::filesystem::path& path) {
  return path.extension() == ".jsonl" ? DatasetFormat::fixture_jsonl
                                      : DatasetFormat::gqa_json;
}

std::vector<QuestionRecord> parse_fixture_jsonl(std::string_view text) {
  std::vector<QuestionRecord> records;
  std::size_t offset = 0;
  std::size_t line_no = 0;
  while (offset < text.size()) {
    std::size_t nl = text.find('\n', offset);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(offset, nl - offset);
    ++line_no;
    const std::string where =
        "line " + std::to_string(line_no) + " (byte offset " +
        std::to_string(offset) + ")";
    if (!trim(line).empty()) {
      json object = json::parse(line, nullptr, false);
      if (object.is_discarded() || !object.is_object()) {
        throw Error(ErrorCode::kMalformedRecord, where + ": not a JSON object");
      }
      QuestionRecord record;
      record.question_id = required_string(object, "question_id", where);
      const std::string at = where + " [" + record.question_id + "]";
      record.image_id = required_string(object, "image_id", at);
      record.question = required_string(object, "question", at);
      record.gold_answer = required_string(object, "answer", at);
      record.structural =
          parse_structural(required_string(object, "structural", at));
      record.semantic = parse_semantic(required_string(object, "semantic", at));
      validate_record(record, at);
      records.push_back(std::move(record));
    }
    offset = nl + 1;
  }
  finalize(records);
  return records;
}

std::vector<QuestionRecord> parse_gqa_json(std::string_view text) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error(ErrorCode::kParse, "GQA questions file is not a JSON object");
  }
  std::vector<QuestionRecord> records;
  records.reserve(root.size());
  for (const auto& [id, entry] : root.items()) {
    const std::string where = "question " + id;
    if (!entry.is_object()) {
      throw Error(ErrorCode::kMalformedRecord, where + ": not an object");
    }
    auto types = entry.find("types");
    if (types == entry.end() || !types->is_object()) {
      throw Error(ErrorCode::kMalformedRecord, where + ": missing type annotation");
    }
    QuestionRecord record;
    record.question_id = id;
    record.image_id = required_string(entry, "imageId", where);
    record.question = required_string(entry, "question", where);
    record.gold_answer = required_string(entry, "answer", where);
    record.structural = parse_structural(required_string(*types, "structural", where));
    record.semantic = parse_gqa_semantic(required_string(*types, "semantic", where));
    validate_record(record, where);
    records.push_back(std::move(record));
  }
  finalize(records);
  return records;
}

std::vector<QuestionRecord> load_questions(const std::filesystem::path& path,
                                           DatasetFormat format) {
  const std::string text = read_all(path);
  return format == DatasetFormat::gqa_json ? parse_gqa_json(text)
                                           : parse_fixture_jsonl(text);
}

std::string to_fixture_line(const QuestionRecord& record) {
  // ordered_json keeps the documented key order.
  nlohmann::ordered_json object;
  object["question_id"] = record.question_id;
  object["image_id"] = record.image_id;
  object["question"] = record.question;
  object["answer"] = record.gold_answer;
  object["structural"] = std::string(to_string(record.structural));
  object["semantic"] = std::string(to_string(record.semantic));
  return object.dump();
}

DatasetSummary summarize(const std::vector<QuestionRecord>& records) {
  DatasetSummary summary;
  summary.total = records.size();
  for (const auto& record : records) {
    ++summary.per_structural[static_cast<std::size_t>(record.structural)];
    ++summary.per_semantic[static_cast<std::size_t>(record.semantic)];
  }
  return summary;
}

std::string format_summary(const DatasetSummary& summary) {
  std::ostringstream out;
  out << "total " << summary.total << "\n";
  out << "structural\n";
  for (StructuralType type : kStructuralTypes) {
    out << "  " << to_string(type) << " " << summary.count(type) << "\n";
  }
  out << "semantic\n";
  for (SemanticType type : kSemanticTypes) {
    out << "  " << to_string(type) << " " << summary.count(type) << "\n";
  }
  return out.str();
}

}  // namespace capvqa
