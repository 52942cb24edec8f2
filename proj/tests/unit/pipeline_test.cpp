// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "capvqa/cache.hpp"
#include "capvqa/config.hpp"
#include "capvqa/error.hpp"
#include "capvqa/mock_backends.hpp"
#include "capvqa/pipeline.hpp"
#include "capvqa/report.hpp"
#include "json.hpp"
#include "test_support.hpp"

namespace capvqa {
namespace {

namespace fs = std::filesystem;

struct Mocks {
  std::shared_ptr<ScriptedChatBackend> chat;
  std::shared_ptr<MockEmbeddingBackend> embed;
  BackendSet set() const { return {chat, chat, embed, embed}; }
  std::uint64_t calls() const { return chat->call_count() + embed->call_count(); }
};

Mocks e2e_mocks() {
  return {ScriptedChatBackend::from_file(testing::data_dir() / "e2e" / "script.json"),
          std::make_shared<MockEmbeddingBackend>(256)};
}

RunConfig e2e_config(const fs::path& run_root) {
  auto config = load_run_config(testing::data_dir() / "e2e" / "config.json");
  config.run_root = run_root;
  return config;
}

TEST(Pipeline, GoldenRunAndZeroCallRerun) {
  testing::TempDir dir;
  const auto config = e2e_config(dir / "run");
  const auto golden = testing::data_dir() / "e2e" / "golden";

  auto first = e2e_mocks();
  const auto r1 = run_pipeline(config, first.set());
  EXPECT_EQ(r1.errored_questions(), 0u);
  EXPECT_EQ(first.chat->fallback_count(), 0u);
  for (const char* name : {"report.md", "report.csv", "report.json"}) {
    EXPECT_EQ(testing::read_text(dir / "run" / name), testing::read_text(golden / name)) << name;
  }
  const auto report_bytes = testing::read_text(dir / "run" / "report.json");
  const auto chat_cache = testing::read_text(dir / "run" / "cache" / "chat.jsonl");

  auto second = e2e_mocks();
  const auto r2 = run_pipeline(config, second.set());
  EXPECT_EQ(second.calls(), 0u);
  EXPECT_EQ(testing::read_text(dir / "run" / "report.json"), report_bytes);
  EXPECT_EQ(testing::read_text(dir / "run" / "cache" / "chat.jsonl"), chat_cache);
  EXPECT_EQ(r2.manifest.stages.at("captions").cached, 3u);
  EXPECT_EQ(r2.manifest.stages.at("answers").cached, 3u);
}

TEST(Pipeline, ManifestStageCountsSumToQuestions) {
  testing::TempDir dir;
  auto mocks = e2e_mocks();
  const auto result = run_pipeline(e2e_config(dir / "run"), mocks.set());
  for (const auto& [stage, counts] : result.manifest.stages) {
    EXPECT_EQ(counts.sum(), 3u) << stage;
  }
  const auto manifest = nlohmann::json::parse(testing::read_text(dir / "run" / "manifest.json"));
  EXPECT_EQ(manifest["questions"], 3);
  EXPECT_EQ(manifest["stopword_checksum"], StopwordList::english().checksum());
  EXPECT_EQ(manifest["backends"][0]["model"], "scripted-e2e");
  EXPECT_EQ(manifest["stages"]["captions"]["fetched"], 3);
  for (const char* name : {"keywords.jsonl", "captions.jsonl", "answers.jsonl", "errors.json",
                           "evaluations.jsonl"}) {
    EXPECT_TRUE(fs::exists(dir / "run" / name)) << name;
  }
}

TEST(Pipeline, LimitOneProcessesOneQuestion) {
  testing::TempDir dir;
  auto config = e2e_config(dir / "run");
  config.limit = 1;
  auto mocks = e2e_mocks();
  const auto result = run_pipeline(config, mocks.set());
  EXPECT_EQ(result.questions.size(), 1u);
  EXPECT_EQ(result.answers.size(), 1u);
  EXPECT_EQ(result.manifest.questions, 1u);
  EXPECT_EQ(result.manifest.stages.at("answers").sum(), 1u);
  EXPECT_EQ(mocks.chat->call_count(), 2u);
}

TEST(Pipeline, GeneralModeCaptionsOncePerImage) {
  testing::TempDir dir;
  auto config = e2e_config(dir / "run");
  config.context = ContextKind::general_caption;
  auto mocks = e2e_mocks();
  const auto result = run_pipeline(config, mocks.set());
  EXPECT_EQ(result.captions.size(), 2u);
  // Two caption calls for two images, three answer calls.
  EXPECT_EQ(mocks.chat->call_count(), 5u);
  EXPECT_EQ(result.manifest.stages.at("keywords").skipped, 3u);
  for (const auto& c : result.captions) EXPECT_EQ(c.mode, CaptionMode::general);
}

TEST(Pipeline, QdModeCaptionsOncePerImageKeywordPair) {
  testing::TempDir dir;
  const std::string q = testing::read_text(testing::data_dir() / "e2e" / "questions.jsonl");
  const std::string dup =
      R"({"question_id":"q4","image_id":"img1","question":"Is it an outdoors scene or not?","answer":"yes","structural":"verify","semantic":"global"})";
  testing::write_text(dir / "q.jsonl", q + dup + "\n");
  auto config = e2e_config(dir / "run");
  config.dataset_path = dir / "q.jsonl";
  auto mocks = e2e_mocks();
  const auto result = run_pipeline(config, mocks.set());
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& t : result.traces) {
    pairs.insert({result.captions[*t.caption_index].image_id, format_keywords(*t.keywords)});
  }
  EXPECT_EQ(result.captions.size(), pairs.size());
  EXPECT_EQ(result.captions.size(), 3u);
  EXPECT_EQ(mocks.chat->call_count(), 3u + 4u);
  for (const auto& c : result.captions) {
    EXPECT_EQ(c.prompt, build_caption_prompt(c.mode, c.keywords));
  }
}

TEST(Pipeline, RelevantSentenceContext) {
  testing::TempDir dir;
  auto config = e2e_config(dir / "run");
  config.context = ContextKind::relevant_sentence;
  auto mocks = e2e_mocks();
  const auto result = run_pipeline(config, mocks.set());
  for (std::size_t i = 0; i < result.traces.size(); ++i) {
    const auto& t = result.traces[i];
    ASSERT_TRUE(t.sentence);
    const auto sentences = split_sentences(result.captions[*t.caption_index].caption);
    EXPECT_EQ(t.sentence->index,
              testing::sentence_oracle(sentences, result.questions[i].question, 256));
    EXPECT_EQ(t.context, sentences[t.sentence->index]);
    EXPECT_NE(result.answers[i].prompt.find("Text: " + t.context + ", Question: "),
              std::string::npos);
  }
  EXPECT_EQ(result.traces[1].context, "A red bus drives down a city street.");
}

TEST(Pipeline, StopwordOnlyQuestionFallsBackToGeneralCaption) {
  testing::TempDir dir;
  testing::write_text(
      dir / "q.jsonl",
      R"({"question_id":"s1","image_id":"img1","question":"Is it?","answer":"yes","structural":"verify","semantic":"global"})"
      "\n");
  auto config = e2e_config(dir / "run");
  config.dataset_path = dir / "q.jsonl";
  auto mocks = e2e_mocks();
  const auto result = run_pipeline(config, mocks.set());
  EXPECT_TRUE(result.traces[0].keyword_fallback);
  EXPECT_EQ(result.captions[0].mode, CaptionMode::general);
  EXPECT_EQ(result.manifest.stages.at("keywords").fallbacks, 1u);
  EXPECT_EQ(result.manifest.stages.at("captions").fallbacks, 1u);
  EXPECT_EQ(result.answers[0].context_kind, ContextKind::general_caption);
  EXPECT_FALSE(result.answers[0].error);
}

TEST(Pipeline, BackendFailuresAreRecordedPerQuestion) {
  testing::TempDir dir;
  auto config = e2e_config(dir / "run");
  auto failing = std::make_shared<testing::FailingChat>();
  auto embed = std::make_shared<MockEmbeddingBackend>(256);
  const auto result = run_pipeline(config, {failing, failing, embed, embed});
  EXPECT_EQ(result.errored_questions(), 3u);
  EXPECT_EQ(result.manifest.stages.at("captions").errored, 3u);
  EXPECT_EQ(result.manifest.stages.at("answers").skipped, 3u);
  ASSERT_TRUE(result.evaluation);
  for (const auto& r : result.evaluation->report.results) EXPECT_EQ(r.overall.correct, 0u);
  EXPECT_EQ(result.evaluation->report.metadata.errored, 3u);
  EXPECT_TRUE(fs::exists(dir / "run" / "manifest.json"));
  for (const auto& a : result.answers) {
    ASSERT_TRUE(a.error);
    EXPECT_NE(a.error->find("unreachable"), std::string::npos);
  }
}

TEST(Pipeline, MissingImageErrorsOnlyThatQuestion) {
  testing::TempDir dir;
  const std::string q = testing::read_text(testing::data_dir() / "e2e" / "questions.jsonl");
  const std::string extra =
      R"({"question_id":"q9","image_id":"ghost","question":"What color is the bus?","answer":"red","structural":"query","semantic":"attribute"})";
  testing::write_text(dir / "q.jsonl", q + extra + "\n");
  auto config = e2e_config(dir / "run");
  config.dataset_path = dir / "q.jsonl";
  auto mocks = e2e_mocks();
  const auto result = run_pipeline(config, mocks.set());
  EXPECT_EQ(result.errored_questions(), 1u);
  EXPECT_TRUE(result.answers[3].error);
  EXPECT_FALSE(result.answers[0].error);
}

TEST(Pipeline, StopsAfterRequestedStage) {
  testing::TempDir dir;
  auto mocks = e2e_mocks();
  const auto result = run_pipeline(e2e_config(dir / "run"), mocks.set(), Stage::captions);
  EXPECT_EQ(result.captions.size(), 3u);
  EXPECT_TRUE(result.answers.empty());
  EXPECT_FALSE(result.evaluation);
  EXPECT_TRUE(fs::exists(dir / "run" / "captions.jsonl"));
  EXPECT_FALSE(fs::exists(dir / "run" / "report.md"));
  EXPECT_TRUE(fs::exists(dir / "run" / "manifest.json"));
}

TEST(AnswersJsonl, RoundTrip) {
  const std::vector<AnswerRecord> answers = {
      make_answer_record("a", ContextKind::qd_caption, "p\n\"x\"", "Yes."),
      make_failed_answer("b", ContextKind::relevant_sentence, "", "timeout")};
  EXPECT_EQ(answers_from_jsonl(answers_to_jsonl(answers)), answers);
  EXPECT_THROW(answers_from_jsonl("{}\n"), Error);
}

TEST(WriteFileAtomic, ReplacesContents) {
  testing::TempDir dir;
  write_file_atomic(dir / "sub" / "f.txt", "one");
  write_file_atomic(dir / "sub" / "f.txt", "two");
  EXPECT_EQ(read_file(dir / "sub" / "f.txt"), "two");
  EXPECT_FALSE(fs::exists(dir / "sub" / "f.txt.tmp"));
  EXPECT_THROW(read_file(dir / "nope"), Error);
}

}  // namespace
}  // namespace capvqa
