// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capvqa/backends.hpp"
#include "capvqa/captioning.hpp"
#include "capvqa/config.hpp"
#include "capvqa/evaluation.hpp"
#include "capvqa/keywords.hpp"
#include "capvqa/qa.hpp"

namespace capvqa {

/// Raw (uncached) backends for each pipeline role. Roles the run does not
/// use may be null.
struct BackendSet {
  std::shared_ptr<ChatBackend> caption;
  std::shared_ptr<ChatBackend> answer;
  std::shared_ptr<EmbeddingBackend> text_embedding;
  std::shared_ptr<EmbeddingBackend> eval_embedding;
};

BackendSet make_backends(const RunConfig& config);

enum class Stage { keywords, captions, answers, evaluation };

/// Per-question outcome counts for one stage.
/// completed + errored + skipped == number of questions processed.
struct StageCounts {
  std::size_t completed = 0;
  std::size_t errored = 0;
  std::size_t skipped = 0;
  /// Subsets of `completed` for stages that call a chat backend.
  std::size_t cached = 0;
  std::size_t fetched = 0;
  /// Questions whose keywords degraded to a general caption.
  std::size_t fallbacks = 0;

  std::size_t sum() const { return completed + errored + skipped; }
};

struct BackendUsage {
  std::string role;
  std::string model;
  BackendStats stats;
};

struct RunManifest {
  std::string config_snapshot;
  std::string stopword_checksum;
  std::size_t questions = 0;
  std::map<std::string, StageCounts> stages;
  std::vector<BackendUsage> backends;
  std::vector<std::string> deviation_flags;
  std::map<std::string, double> timings_ms;
  std::string started_at;
  std::string finished_at;

  std::string to_json() const;
};

/// Everything known about one question after the run.
struct QuestionTrace {
  std::string question_id;
  std::optional<KeywordSet> keywords;
  bool keyword_fallback = false;
  std::optional<std::string> keyword_error;
  /// Index into PipelineResult::captions.
  std::optional<std::size_t> caption_index;
  std::optional<SentenceChoice> sentence;
  std::string context;
  std::optional<std::string> error;
};

struct PipelineResult {
  std::vector<QuestionRecord> questions;
  std::vector<QuestionTrace> traces;
  std::vector<CaptionRecord> captions;
  /// Per-caption-job error, parallel to `captions` (empty caption on error).
  std::vector<std::optional<std::string>> caption_errors;
  std::vector<AnswerRecord> answers;
  std::optional<Evaluation> evaluation;
  std::optional<ErrorReport> errors;
  RunManifest manifest;

  /// Questions that ended without a usable answer.
  std::size_t errored_questions() const;
};

/// Runs dataset -> keywords -> captions -> (sentence filter) -> answers ->
/// evaluation up to `until`, caching every backend call under
/// config.run_root and writing the stage artifacts there.
/// Per-question failures are recorded, never thrown; only configuration and
/// storage problems abort.
PipelineResult run_pipeline(const RunConfig& config, const BackendSet& backends,
                            Stage until = Stage::evaluation);
PipelineResult run_pipeline(const RunConfig& config,
                            Stage until = Stage::evaluation);

/// Writes report.{md,csv,json} and errors.json under `dir`.
void write_reports(const std::filesystem::path& dir, const RunReport& report,
                   const std::optional<ErrorReport>& errors);

std::string answers_to_jsonl(const std::vector<AnswerRecord>& answers);
std::vector<AnswerRecord> answers_from_jsonl(std::string_view text);

/// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace capvqa
