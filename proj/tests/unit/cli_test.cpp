// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "capvqa/report.hpp"
#include "capvqa_tools/cli.hpp"
#include "json.hpp"
#include "test_support.hpp"

namespace capvqa {
namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string e2e(const char* name) { return (testing::data_dir() / "e2e" / name).string(); }

TEST(Cli, IngestPrintsSummary) {
  const auto r = run({"ingest", "--dataset", e2e("questions.jsonl")});
  EXPECT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("3"), std::string::npos);
  EXPECT_NE(r.out.find("query"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  const auto unknown = run({"ingest", "--dataset", e2e("questions.jsonl"), "--frobnicate"});
  EXPECT_EQ(unknown.code, cli::kExitUsage);
  EXPECT_NE(unknown.err.find("--frobnicate"), std::string::npos) << unknown.err;
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"launch"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"ingest"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"run", "--dataset", e2e("questions.jsonl"), "--mode", "weird"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"run", "--dataset", e2e("questions.jsonl")}).code, cli::kExitUsage);
}

TEST(Cli, MissingDatasetIsRunFailure) {
  EXPECT_EQ(run({"ingest", "--dataset", "/nonexistent/q.jsonl"}).code, cli::kExitFailure);
}

TEST(Cli, RunMatchesGoldenAndReportRerenders) {
  testing::TempDir dir;
  const auto r = run({"run", "--config", e2e("config.json"), "--out", dir.path().string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(testing::read_text(dir / "report.md"),
            testing::read_text(testing::data_dir() / "e2e" / "golden" / "report.md"));

  const auto csv = run({"report", "--input", (dir / "report.json").string(), "--format", "csv"});
  EXPECT_EQ(csv.code, cli::kExitOk);
  EXPECT_EQ(csv.out, testing::read_text(dir / "report.csv"));

  const auto again = run({"run", "--config", e2e("config.json"), "--out", dir.path().string()});
  ASSERT_EQ(again.code, cli::kExitOk);
  const auto manifest = nlohmann::json::parse(testing::read_text(dir / "manifest.json"));
  for (const auto& b : manifest["backends"]) EXPECT_EQ(b["calls"], 0) << b.dump();
}

TEST(Cli, FlagDrivenRunWithMocks) {
  testing::TempDir dir;
  const auto r = run({"run", "--dataset", e2e("questions.jsonl"), "--images",
                      (testing::data_dir() / "e2e" / "images").string(), "--backend-chat",
                      "mock:" + e2e("script.json"), "--backend-embed", "mock", "--mode", "qd",
                      "--out", dir.path().string()});
  // Images resolve as {id}.jpg by default, so every caption fails.
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
}

TEST(Cli, UnreachableBackendExitsOneWithManifest) {
  testing::TempDir dir;
  const std::string config = R"({
    "dataset": {"path": ")" + e2e("questions.jsonl") + R"("},
    "images": {"root": ")" + e2e("images") + R"(", "pattern": "{image_id}.png"},
    "context": "general_caption",
    "backends": {
      "caption": {"type": "openai", "base_url": "http://127.0.0.1:1", "model": "m",
                  "max_retries": 1, "backoff_base_s": 0.001, "backoff_cap_s": 0.002},
      "answer": {"type": "openai", "base_url": "http://127.0.0.1:1", "model": "m",
                 "max_retries": 0},
      "eval_embedding": {"type": "mock-embed"}
    }
  })";
  testing::write_text(dir / "c.json", config);
  const auto r = run({"run", "--config", (dir / "c.json").string(), "--out",
                      (dir / "run").string()});
  EXPECT_EQ(r.code, cli::kExitFailure) << r.err;
  const auto manifest = nlohmann::json::parse(testing::read_text(dir / "run" / "manifest.json"));
  EXPECT_EQ(manifest["stages"]["captions"]["errored"], 3);
  EXPECT_EQ(manifest["backends"][0]["retries"], 2);
}

TEST(Cli, KeywordsEvaluateAndAnalyze) {
  testing::TempDir dir;
  const auto kw = run({"keywords", "--dataset", e2e("questions.jsonl"), "--backend-embed", "mock",
                       "--out", dir.path().string()});
  ASSERT_EQ(kw.code, cli::kExitOk) << kw.err;
  EXPECT_NE(kw.out.find(R"("formatted":"kind, vehicle, waiting, traffic, light")"),
            std::string::npos)
      << kw.out;

  const auto eval10 = testing::data_dir() / "eval10";
  const auto ev = run({"evaluate", "--dataset", (eval10 / "questions.jsonl").string(),
                       "--answers", (eval10 / "answers.jsonl").string(), "--backend-embed",
                       "mock", "--out", dir.path().string()});
  ASSERT_EQ(ev.code, cli::kExitOk) << ev.err;
  EXPECT_EQ(ev.out, testing::read_text(eval10 / "expected.md"));

  const auto an = run({"analyze-errors", "--dataset", (eval10 / "questions.jsonl").string(),
                       "--answers", (eval10 / "answers.jsonl").string(), "--policy", "em",
                       "--out", dir.path().string()});
  ASSERT_EQ(an.code, cli::kExitOk) << an.err;
  const auto report = parse_error_report(an.out);
  EXPECT_EQ(report.wrong, 7u);
  EXPECT_EQ(report.unanswerable, 1u);
}

}  // namespace
}  // namespace capvqa
