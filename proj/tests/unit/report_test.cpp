// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "capvqa/error.hpp"
#include "capvqa/mock_backends.hpp"
#include "capvqa/pipeline.hpp"
#include "capvqa/report.hpp"
#include "test_support.hpp"

namespace capvqa {
namespace {

using testing::question;

RunReport single_category_report() {
  const std::vector<QuestionRecord> questions = {
      question("a", "i", "q", "yes", StructuralType::verify, SemanticType::global),
      question("b", "i", "q", "no", StructuralType::verify, SemanticType::global)};
  const std::vector<AnswerRecord> answers = {
      make_answer_record("a", ContextKind::qd_caption, "", "yes"),
      make_answer_record("b", ContextKind::qd_caption, "", "yes")};
  return evaluate_run(answers, questions, {MatchPolicy::exact()}, nullptr).report;
}

TEST(Report, SingleCategoryMarkdownIsThreeLines) {
  RunReport report = single_category_report();
  // Keep only the structural partition populated.
  report.results[0].per_semantic.clear();
  const auto md = render_report(report, ReportFormat::markdown);
  EXPECT_EQ(md, "| category | EM |\n|---|---:|\n| verify | 50.00 |\n");
}

TEST(Report, CsvHeader) {
  MockEmbeddingBackend embedder;
  const std::vector<QuestionRecord> questions = {
      question("a", "i", "q", "yes", StructuralType::verify, SemanticType::global)};
  const std::vector<AnswerRecord> answers = {
      make_answer_record("a", ContextKind::qd_caption, "", "yes")};
  const auto report = evaluate_run(answers, questions, canonical_policies(), &embedder).report;
  const auto csv = render_report(report, ReportFormat::csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "category,EM,sim=0.70,sim=0.80,sim=0.90");
  EXPECT_NE(csv.find("verify,100.00,100.00,100.00,100.00\n"), std::string::npos);
  EXPECT_NE(csv.find("total,100.00"), std::string::npos);
}

TEST(Report, JsonRoundTrip) {
  MockEmbeddingBackend embedder(256);
  const auto dir = testing::data_dir() / "eval10";
  const auto questions = load_questions(dir / "questions.jsonl", DatasetFormat::fixture_jsonl);
  const auto answers = answers_from_jsonl(testing::read_text(dir / "answers.jsonl"));
  const auto report = evaluate_run(answers, questions, canonical_policies(), &embedder).report;
  const auto json = render_report(report, ReportFormat::json);
  const auto parsed = parse_report_json(json);
  EXPECT_EQ(parsed, report);
  EXPECT_EQ(render_report(parsed, ReportFormat::json), json);
  EXPECT_EQ(render_report(parsed, ReportFormat::markdown),
            render_report(report, ReportFormat::markdown));
  EXPECT_THROW(parse_report_json("{}"), Error);
}

TEST(Report, ErrorReportRoundTrip) {
  const auto f = testing::make_error_fixture();
  const auto report = analyze_errors(f.answers, f.questions, MatchPolicy::exact(), nullptr);
  const auto parsed = parse_error_report(render_error_report(report));
  EXPECT_EQ(parsed, report);
}

TEST(Report, FormatNames) {
  EXPECT_EQ(parse_report_format("md"), ReportFormat::markdown);
  EXPECT_EQ(parse_report_format("markdown"), ReportFormat::markdown);
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::csv);
  EXPECT_EQ(parse_report_format("json"), ReportFormat::json);
  EXPECT_EQ(extension(ReportFormat::markdown), "md");
  EXPECT_THROW(parse_report_format("xml"), Error);
  EXPECT_EQ(format_percent(100.0 / 3.0), "33.33");
  EXPECT_EQ(format_percent(200.0 / 3.0), "66.67");
}

}  // namespace
}  // namespace capvqa
