// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "capvqa/dataset.hpp"
#include "capvqa/error.hpp"
#include "test_support.hpp"

namespace capvqa {
namespace {

using testing::question;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInternal;
}

TEST(Dataset, SingleFixtureRecordRoundTrips) {
  const auto q = question("q1", "img1", "Is it an outdoors scene?", "yes",
                          StructuralType::verify, SemanticType::global);
  const auto records = parse_fixture_jsonl(to_fixture_line(q) + "\n");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0], q);
}

TEST(Dataset, UnknownTypeStringRejected) {
  const std::string line =
      R"({"question_id":"q1","image_id":"i","question":"x","answer":"y","structural":"guess","semantic":"global"})";
  EXPECT_EQ(code_of([&] { parse_fixture_jsonl(line); }), ErrorCode::kUnknownTypeString);
}

TEST(Dataset, MalformedLineNamesTheLine) {
  const std::string text =
      R"({"question_id":"q1","image_id":"i","question":"x","answer":"y","structural":"verify","semantic":"global"})"
      "\n{not json\n";
  try {
    parse_fixture_jsonl(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedRecord);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([] { parse_fixture_jsonl(R"({"question_id":"q1"})"); }),
            ErrorCode::kMalformedRecord);
}

TEST(Dataset, DuplicateIdsRejected) {
  const auto q = question("q1", "i", "x", "y", StructuralType::verify, SemanticType::global);
  const std::string text = to_fixture_line(q) + "\n" + to_fixture_line(q) + "\n";
  EXPECT_EQ(code_of([&] { parse_fixture_jsonl(text); }), ErrorCode::kDuplicateQuestionId);
}

TEST(Dataset, GqaJsonWithAbbreviatedSemantics) {
  const std::string text = R"({
    "201": {"imageId": "n1", "question": "Is the sky blue?", "answer": "yes",
            "types": {"structural": "verify", "semantic": "attr", "detailed": "verifyAttr"}},
    "102": {"imageId": "n2", "question": "What is on the table?", "answer": "cup",
            "types": {"structural": "query", "semantic": "rel"}},
    "103": {"imageId": "n2", "question": "Which kind of furniture is it?", "answer": "chair",
            "types": {"structural": "query", "semantic": "cat"}},
    "104": {"imageId": "n3", "question": "Is there a dog?", "answer": "no",
            "types": {"structural": "verify", "semantic": "obj"}},
    "105": {"imageId": "n3", "question": "Is it indoors?", "answer": "no",
            "types": {"structural": "verify", "semantic": "global"}}
  })";
  const auto records = parse_gqa_json(text);
  ASSERT_EQ(records.size(), 5u);
  EXPECT_EQ(records[0].question_id, "102");
  EXPECT_EQ(records[0].semantic, SemanticType::relation);
  EXPECT_EQ(records[1].semantic, SemanticType::category);
  EXPECT_EQ(records[2].semantic, SemanticType::object);
  EXPECT_EQ(records[4].question_id, "201");
  EXPECT_EQ(records[4].semantic, SemanticType::attribute);
  EXPECT_EQ(records[4].image_id, "n1");

  EXPECT_EQ(code_of([] { parse_gqa_json(R"({"1": {"imageId": "a"}})"); }),
            ErrorCode::kMalformedRecord);
  EXPECT_EQ(code_of([] { parse_gqa_json("[1, 2]"); }), ErrorCode::kParse);
}

TEST(Dataset, SummaryCounts) {
  EXPECT_EQ(summarize({}).total, 0u);
  for (auto t : kStructuralTypes) EXPECT_EQ(summarize({}).count(t), 0u);
  const std::vector<QuestionRecord> records = {
      question("a", "i", "x", "y", StructuralType::verify, SemanticType::object),
      question("b", "i", "x", "y", StructuralType::verify, SemanticType::global),
      question("c", "i", "x", "y", StructuralType::query, SemanticType::global)};
  const auto s = summarize(records);
  EXPECT_EQ(s.total, 3u);
  EXPECT_EQ(s.count(StructuralType::verify), 2u);
  EXPECT_EQ(s.count(StructuralType::query), 1u);
  EXPECT_EQ(s.count(SemanticType::global), 2u);
  EXPECT_NE(format_summary(s).find("verify"), std::string::npos);
}

TEST(DatasetProperty, PartitionTotalsAgree) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<QuestionRecord> records;
    const int n = static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) {
      records.push_back(question(std::to_string(i), "i", "x", "y",
                                 kStructuralTypes[rng() % kStructuralTypes.size()],
                                 kSemanticTypes[rng() % kSemanticTypes.size()]));
    }
    const auto s = summarize(records);
    std::size_t structural = 0;
    std::size_t semantic = 0;
    for (auto t : kStructuralTypes) structural += s.count(t);
    for (auto t : kSemanticTypes) semantic += s.count(t);
    EXPECT_EQ(structural, s.total);
    EXPECT_EQ(semantic, s.total);
    EXPECT_EQ(s.total, records.size());
  }
}

TEST(DatasetProperty, LoadingIsIdempotentAndOrderStable) {
  testing::TempDir dir;
  std::string text;
  for (int i = 9; i >= 0; --i) {
    text += to_fixture_line(question("q" + std::to_string(i), "i", "x", "y",
                                     StructuralType::compare, SemanticType::relation)) +
            "\n";
  }
  testing::write_text(dir / "f.jsonl", text);
  const auto a = load_questions(dir / "f.jsonl", DatasetFormat::fixture_jsonl);
  const auto b = load_questions(dir / "f.jsonl", DatasetFormat::fixture_jsonl);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end(), [](const auto& x, const auto& y) {
    return x.question_id < y.question_id;
  }));
}

TEST(Dataset, FormatNames) {
  EXPECT_EQ(parse_dataset_format("gqa-json"), DatasetFormat::gqa_json);
  EXPECT_EQ(parse_dataset_format("fixture-jsonl"), DatasetFormat::fixture_jsonl);
  EXPECT_EQ(infer_dataset_format("x/testdev_balanced_questions.json"), DatasetFormat::gqa_json);
  EXPECT_EQ(infer_dataset_format("x.jsonl"), DatasetFormat::fixture_jsonl);
  for (auto t : kStructuralTypes) EXPECT_EQ(parse_structural(to_string(t)), t);
  for (auto t : kSemanticTypes) EXPECT_EQ(parse_semantic(to_string(t)), t);
}

}  // namespace
}  // namespace capvqa
