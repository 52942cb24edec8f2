// SPDX-License-Identifier: Apache-2.0
#include "capvqa/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "capvqa/error.hpp"
#include "capvqa/text.hpp"

namespace capvqa {
namespace {

constexpr std::size_t kEmbedChunk = 256;

bool is_yes_no(std::string_view text) { return text == "yes" || text == "no"; }

double percent(std::size_t part, std::size_t whole) {
  return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

// Is `a` at least as strict as `b`?
bool at_least_as_strict(const MatchPolicy& a, const MatchPolicy& b) {
  if (a.kind == MatchPolicy::Kind::exact) return true;
  if (b.kind == MatchPolicy::Kind::exact) return false;
  return a.threshold >= b.threshold;
}

using VectorTable = std::unordered_map<std::string, EmbeddingVector>;

VectorTable embed_all(const std::set<std::string>& texts, EmbeddingBackend& embedder) {
  VectorTable table;
  std::vector<std::string> chunk;
  auto flush = [&] {
    if (chunk.empty()) return;
    auto vectors = embedder.embed(chunk);
    check_embedding_batch(vectors, chunk.size());
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      table.emplace(std::move(chunk[i]), std::move(vectors[i]));
    }
    chunk.clear();
  };
  for (const auto& text : texts) {
    chunk.push_back(text);
    if (chunk.size() == kEmbedChunk) flush();
  }
  flush();
  return table;
}

}  // namespace

MatchPolicy MatchPolicy::exact() { return {Kind::exact, 0.0}; }

MatchPolicy MatchPolicy::semantic(double threshold) {
  MatchPolicy policy{Kind::semantic, threshold};
  policy.validate();
  return policy;
}

std::string MatchPolicy::label() const {
  if (kind == Kind::exact) return "EM";
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "sim=%.2f", threshold);
  return buffer;
}

void MatchPolicy::validate() const {
  if (kind == Kind::semantic && !(threshold > 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "semantic threshold must be in (0, 1], got " + std::to_string(threshold));
  }
}

MatchPolicy parse_policy(std::string_view item) {
  const std::string text = ascii_lower(trim(item));
  if (text == "em" || text == "exact") return MatchPolicy::exact();
  double threshold = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), threshold);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::kInvalidArgument, "bad match policy '" + text + "'");
  }
  return MatchPolicy::semantic(threshold);
}

std::vector<MatchPolicy> parse_policies(std::string_view spec) {
  std::vector<MatchPolicy> out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    std::size_t comma = spec.find(',', pos);
    if (comma == std::string_view::npos) comma = spec.size();
    out.push_back(parse_policy(spec.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

std::vector<MatchPolicy> canonical_policies() {
  return {MatchPolicy::exact(), MatchPolicy::semantic(0.7),
          MatchPolicy::semantic(0.8), MatchPolicy::semantic(0.9)};
}

MatchResult match_answer(std::string_view prediction, std::string_view gold,
                         const MatchPolicy& policy, EmbeddingBackend* embedder) {
  policy.validate();
  if (prediction == gold) return {true, 1.0, false};
  if (policy.kind == MatchPolicy::Kind::exact) return {false, std::nullopt, false};
  if (prediction.empty() || gold.empty()) return {false, std::nullopt, true};
  if (embedder == nullptr) {
    throw Error(ErrorCode::kConfig, "semantic matching needs an embedding backend");
  }
  const std::vector<std::string> texts{std::string(prediction), std::string(gold)};
  const auto vectors = embedder->embed(texts);
  check_embedding_batch(vectors, 2);
  if (vectors[0].is_zero() || vectors[1].is_zero()) {
    return {false, std::nullopt, true};
  }
  const double similarity = cosine_similarity(vectors[0], vectors[1]);
  return {similarity >= policy.threshold, similarity, false};
}

double Tally::accuracy() const { return percent(correct, total); }

Evaluation evaluate_run(const std::vector<AnswerRecord>& answers,
                        const std::vector<QuestionRecord>& questions,
                        const std::vector<MatchPolicy>& policies,
                        EmbeddingBackend* embedder) {
  for (const auto& policy : policies) policy.validate();
  const bool needs_embeddings =
      std::any_of(policies.begin(), policies.end(), [](const MatchPolicy& p) {
        return p.kind == MatchPolicy::Kind::semantic;
      });
  if (needs_embeddings && embedder == nullptr) {
    throw Error(ErrorCode::kConfig, "semantic policies need an embedding backend");
  }

  std::vector<const QuestionRecord*> ordered;
  ordered.reserve(questions.size());
  std::unordered_map<std::string, const AnswerRecord*> by_question;
  for (const auto& q : questions) {
    ordered.push_back(&q);
    by_question.emplace(q.question_id, nullptr);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const QuestionRecord* a, const QuestionRecord* b) {
              return a->question_id < b->question_id;
            });
  for (const auto& answer : answers) {
    auto it = by_question.find(answer.question_id);
    if (it == by_question.end()) {
      throw Error(ErrorCode::kUnknownQuestionId, answer.question_id);
    }
    if (it->second != nullptr) {
      throw Error(ErrorCode::kInvalidArgument,
                  "more than one answer for " + answer.question_id);
    }
    it->second = &answer;
  }

  Evaluation evaluation;
  auto& meta = evaluation.report.metadata;
  meta.total_questions = ordered.size();
  meta.manifest_ref = "manifest.json";
  meta.deviation_flags = {std::string(kNormalizationDeviationFlag)};
  if (needs_embeddings) meta.embedding_model = embedder->model();

  std::set<std::string> to_embed;
  for (const QuestionRecord* q : ordered) {
    const AnswerRecord* answer = by_question[q->question_id];
    EvalRecord record;
    record.question_id = q->question_id;
    record.gold = normalize_answer(q->gold_answer);
    if (answer == nullptr) {
      record.failed = true;
      ++meta.missing;
    } else if (answer->error) {
      record.failed = true;
      ++meta.errored;
    } else {
      record.prediction = normalize_answer(answer->raw_answer);
      ++meta.answered;
    }
    if (!record.failed && record.prediction == record.gold) {
      record.similarity = 1.0;
    } else if (!record.failed && needs_embeddings) {
      if (record.prediction.empty() || record.gold.empty()) {
        record.degenerate = true;
      } else {
        to_embed.insert(record.prediction);
        to_embed.insert(record.gold);
      }
    }
    evaluation.records.push_back(std::move(record));
  }

  const VectorTable vectors =
      to_embed.empty() ? VectorTable{} : embed_all(to_embed, *embedder);
  for (auto& record : evaluation.records) {
    if (record.failed || record.similarity || record.degenerate || !needs_embeddings) {
      continue;
    }
    const auto& p = vectors.at(record.prediction);
    const auto& g = vectors.at(record.gold);
    if (p.is_zero() || g.is_zero()) {
      record.degenerate = true;
    } else {
      record.similarity = cosine_similarity(p, g);
    }
  }

  evaluation.report.results.reserve(policies.size());
  for (const auto& policy : policies) {
    PolicyResult result;
    result.policy = policy;
    evaluation.report.results.push_back(std::move(result));
  }
  for (std::size_t r = 0; r < evaluation.records.size(); ++r) {
    auto& record = evaluation.records[r];
    const QuestionRecord& q = *ordered[r];
    if (record.degenerate) ++meta.degenerate_similarity;
    record.verdicts.reserve(policies.size());
    for (std::size_t p = 0; p < policies.size(); ++p) {
      bool correct = false;
      if (!record.failed) {
        if (record.prediction == record.gold) {
          correct = true;
        } else if (policies[p].kind == MatchPolicy::Kind::semantic &&
                   record.similarity) {
          correct = *record.similarity >= policies[p].threshold;
        }
      }
      record.verdicts.push_back(correct);
      auto& result = evaluation.report.results[p];
      for (Tally* tally : {&result.overall, &result.per_structural[q.structural],
                           &result.per_semantic[q.semantic]}) {
        ++tally->total;
        if (correct) ++tally->correct;
      }
    }
  }
  check_partition_consistency(evaluation.report);
  return evaluation;
}

void check_partition_consistency(const RunReport& report) {
  for (const auto& result : report.results) {
    Tally structural;
    Tally semantic;
    for (const auto& [type, tally] : result.per_structural) {
      structural.correct += tally.correct;
      structural.total += tally.total;
    }
    for (const auto& [type, tally] : result.per_semantic) {
      semantic.correct += tally.correct;
      semantic.total += tally.total;
    }
    if (structural != result.overall || semantic != result.overall) {
      throw Error(ErrorCode::kInternal,
                  "partition sums disagree with overall for policy " +
                      result.policy.label());
    }
  }
}

bool thresholds_monotone(const RunReport& report) {
  for (const auto& a : report.results) {
    for (const auto& b : report.results) {
      if (&a == &b || !at_least_as_strict(a.policy, b.policy)) continue;
      if (a.overall.correct > b.overall.correct) return false;
      for (const auto& [type, tally] : a.per_structural) {
        auto it = b.per_structural.find(type);
        if (it != b.per_structural.end() && tally.correct > it->second.correct) {
          return false;
        }
      }
      for (const auto& [type, tally] : a.per_semantic) {
        auto it = b.per_semantic.find(type);
        if (it != b.per_semantic.end() && tally.correct > it->second.correct) {
          return false;
        }
      }
    }
  }
  return true;
}

ErrorReport analyze_errors(const std::vector<AnswerRecord>& answers,
                           const std::vector<EvalRecord>& records,
                           std::size_t policy_index) {
  std::unordered_map<std::string, const AnswerRecord*> by_question;
  for (const auto& answer : answers) by_question.emplace(answer.question_id, &answer);

  ErrorReport report;
  report.total = records.size();
  for (const auto& record : records) {
    if (policy_index >= record.verdicts.size()) {
      throw Error(ErrorCode::kInvalidArgument, "policy index out of range");
    }
    if (auto it = by_question.find(record.question_id);
        it != by_question.end() && !it->second->error) {
      if (it->second->unanswerable) ++report.unanswerable;
      if (it->second->over_length) ++report.over_length;
    }
    if (record.verdicts[policy_index]) continue;
    ++report.wrong;
    if (!is_yes_no(record.gold)) continue;
    ++report.wrong_yesno;
    if (!is_yes_no(record.prediction)) ++report.wrong_yesno_nonyesno;
  }
  report.share_of_errors_yesno = percent(report.wrong_yesno, report.wrong);
  report.nonyesno_rate_among_wrong_yesno =
      percent(report.wrong_yesno_nonyesno, report.wrong_yesno);
  report.unanswerable_rate = percent(report.unanswerable, report.total);
  report.over_length_rate = percent(report.over_length, report.total);
  return report;
}

ErrorReport analyze_errors(const std::vector<AnswerRecord>& answers,
                           const std::vector<QuestionRecord>& questions,
                           const MatchPolicy& policy, EmbeddingBackend* embedder) {
  const auto evaluation = evaluate_run(answers, questions, {policy}, embedder);
  return analyze_errors(answers, evaluation.records, 0);
}

}  // namespace capvqa
