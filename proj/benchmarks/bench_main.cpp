// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "capvqa/dataset.hpp"
#include "capvqa/evaluation.hpp"
#include "capvqa/keywords.hpp"
#include "capvqa/mock_backends.hpp"
#include "capvqa/qa.hpp"
#include "capvqa/vector_math.hpp"

namespace {

using namespace capvqa;

void BM_MockEmbed(benchmark::State& state) {
  const std::string text = "Which kind of vehicle is waiting for the traffic light?";
  const auto dim = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mock_embed(text, dim));
}
BENCHMARK(BM_MockEmbed)->Arg(256)->Arg(1536);

void BM_Cosine(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist;
  std::vector<double> u(dim), v(dim);
  for (auto& x : u) x = dist(rng);
  for (auto& x : v) x = dist(rng);
  const EmbeddingVector a(u), b(v);
  for (auto _ : state) benchmark::DoNotOptimize(cosine_similarity(a, b));
}
BENCHMARK(BM_Cosine)->Arg(256)->Arg(1536)->Arg(3072);

void BM_ExtractKeywords(benchmark::State& state) {
  MockEmbeddingBackend embedder(256);
  const std::string q = "Which kind of vehicle is waiting for the traffic light on the left?";
  const NgramRange range{1, static_cast<int>(state.range(0))};
  for (auto _ : state) {
    const auto candidates = extract_candidates(q, range, StopwordList::english());
    benchmark::DoNotOptimize(rank_keywords(q, candidates, embedder, 5));
  }
}
BENCHMARK(BM_ExtractKeywords)->Arg(1)->Arg(3);

void BM_NormalizeAnswer(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(normalize_answer("  The Red Bus.\n"));
}
BENCHMARK(BM_NormalizeAnswer);

void BM_EvaluateRun(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  static const char* kWords[] = {"red", "bus", "yes", "no", "left", "table", "dog", "sofa"};
  std::vector<QuestionRecord> questions;
  std::vector<AnswerRecord> answers;
  for (int i = 0; i < n; ++i) {
    QuestionRecord q;
    q.question_id = "q" + std::to_string(i);
    q.image_id = "img" + std::to_string(i % 50);
    q.question = "What is it?";
    q.gold_answer = kWords[i % 8];
    q.structural = kStructuralTypes[i % 5];
    q.semantic = kSemanticTypes[(i / 5) % 5];
    answers.push_back(make_answer_record(q.question_id, ContextKind::qd_caption, "", kWords[(i * 3) % 8]));
    questions.push_back(std::move(q));
  }
  MockEmbeddingBackend embedder(256);
  const auto policies = canonical_policies();
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_run(answers, questions, policies, &embedder));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EvaluateRun)->Arg(100)->Arg(2000);

}  // namespace

BENCHMARK_MAIN();
