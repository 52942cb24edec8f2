// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>

#include "capvqa/config.hpp"
#include "capvqa/error.hpp"
#include "test_support.hpp"

namespace capvqa {
namespace {

constexpr const char* kOpenAiConfig = R"({
  "dataset": {"path": "q.jsonl"},
  "images": {"root": "imgs"},
  "context": "relevant_sentence",
  "keywords": {"k": 3, "ngram_range": [1, 2]},
  "backends": {
    "caption": {"type": "openai", "base_url": "http://localhost:8000", "model": "llava",
                "api_key": "${CAPVQA_TEST_KEY}"},
    "answer": {"type": "openai", "base_url": "https://api.example.com", "model": "gpt",
               "api_key_env": "CAPVQA_TEST_KEY", "max_retries": 5},
    "text_embedding": {"type": "mock-embed", "dim": 64},
    "eval_embedding": {"type": "mock-embed"}
  },
  "policies": "em,0.7",
  "workers": 2,
  "limit": 5
})";

TEST(RunConfig, ParsesAndResolves) {
  ::setenv("CAPVQA_TEST_KEY", "sk-secret", 1);
  const auto c = parse_run_config(kOpenAiConfig, "/base");
  EXPECT_EQ(c.dataset_path, std::filesystem::path("/base/q.jsonl"));
  EXPECT_EQ(c.image_root, "/base/imgs");
  EXPECT_EQ(c.context, ContextKind::relevant_sentence);
  EXPECT_EQ(c.keywords.k, 3u);
  EXPECT_EQ(c.keywords.ngrams, (NgramRange{1, 2}));
  EXPECT_EQ(c.caption_backend->config.api_key, "sk-secret");
  EXPECT_EQ(c.answer_backend->config.api_key, "sk-secret");
  EXPECT_EQ(c.answer_backend->config.max_retries, 5);
  EXPECT_EQ(c.text_embedding_backend->dim, 64u);
  EXPECT_EQ(c.policies, (std::vector<MatchPolicy>{MatchPolicy::exact(), MatchPolicy::semantic(0.7)}));
  EXPECT_EQ(c.limit, 5u);
  EXPECT_NO_THROW(c.validate());

  const auto snapshot = config_snapshot(c);
  EXPECT_EQ(snapshot.find("sk-secret"), std::string::npos);
  EXPECT_NE(snapshot.find("<redacted>"), std::string::npos);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_run_config(R"({"datasett": {}})", "."), Error);
  EXPECT_THROW(parse_run_config("not json", "."), Error);
  EXPECT_THROW(parse_run_config(R"({"backends": {"caption": {"type": "carrier-pigeon"}}})", "."),
               Error);
}

TEST(RunConfig, ValidationNamesTheProblem) {
  RunConfig c;
  c.dataset_path = "q.jsonl";
  c.caption_backend = BackendSpec::from_flag("mock:s.json", BackendKind::chat);
  c.answer_backend = c.caption_backend;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    EXPECT_NE(std::string(e.what()).find("text_embedding"), std::string::npos) << e.what();
  }
  c.text_embedding_backend = BackendSpec::from_flag("mock", BackendKind::embedding);
  EXPECT_THROW(c.validate(), Error);  // semantic policies need eval_embedding
  c.policies = {MatchPolicy::exact()};
  c.error_policy = MatchPolicy::exact();
  EXPECT_NO_THROW(c.validate());
  c.limit = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(RunConfig, ImagePaths) {
  RunConfig c;
  c.image_pattern = "{image_id}.jpg";
  const auto q = testing::question("q", "n123", "x", "y", StructuralType::verify,
                                   SemanticType::global);
  EXPECT_EQ(c.image_for(q).location, "n123.jpg");
  c.image_root = "/data/images";
  EXPECT_EQ(c.image_for(q).location, "/data/images/n123.jpg");
  c.image_root = "https://cdn.example.com/gqa";
  EXPECT_EQ(c.image_for(q).location, "https://cdn.example.com/gqa/n123.jpg");
  EXPECT_EQ(c.image_for(q).id, "n123");
}

TEST(BackendSpec, Flags) {
  const auto chat = BackendSpec::from_flag("mock:script.json", BackendKind::chat);
  EXPECT_EQ(chat.type, BackendSpec::Type::scripted_mock);
  EXPECT_EQ(chat.script, std::filesystem::path("script.json"));
  EXPECT_EQ(BackendSpec::from_flag("mock:32", BackendKind::embedding).dim, 32u);
  EXPECT_EQ(BackendSpec::from_flag("mock", BackendKind::embedding).dim, 256u);
  EXPECT_THROW(BackendSpec::from_flag("mock", BackendKind::chat), Error);
  EXPECT_THROW(BackendSpec::from_flag("mock:abc", BackendKind::embedding), Error);
}

TEST(RunConfig, LoadFromFileResolvesRelativeToIt) {
  testing::TempDir dir;
  testing::write_text(dir / "c.json", R"({"dataset": {"path": "data/q.jsonl"}})");
  const auto c = load_run_config(dir / "c.json");
  EXPECT_EQ(c.dataset_path, dir / "data" / "q.jsonl");
  EXPECT_THROW(load_run_config(dir / "missing.json"), Error);
}

}  // namespace
}  // namespace capvqa
