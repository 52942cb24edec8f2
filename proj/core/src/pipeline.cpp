// SPDX-License-Identifier: Apache-2.0
#include "capvqa/pipeline.hpp"

#include <atomic>
#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>
#include <unordered_map>

#include "capvqa/cache.hpp"
#include "capvqa/error.hpp"
#include "capvqa/mock_backends.hpp"
#include "capvqa/openai_client.hpp"
#include "capvqa/report.hpp"
#include "json.hpp"

namespace capvqa {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

// Storage failures abort the run; everything else is charged to a question.
bool is_fatal(const Error& e) { return e.code() == ErrorCode::kIo; }

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception stops further items from starting and is rethrown after join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
    }
  };
  const std::size_t count = std::min(workers, n);
  if (count <= 1) {
    body();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(count);
    for (std::size_t t = 0; t < count; ++t) threads.emplace_back(body);
  }
  if (failure) std::rethrow_exception(failure);
}

/// Adapter that records whether the cached backend served a request without
/// a backend call.
class TracingChat final : public ChatBackend {
 public:
  explicit TracingChat(CachedChatBackend& inner) : inner_(inner) {}

  std::string complete(const ChatRequest& request) override {
    auto result = inner_.complete_traced(request);
    from_cache_ = result.from_cache;
    return std::move(result.text);
  }
  std::string model() const override { return inner_.model(); }
  bool vision_capable() const override { return inner_.vision_capable(); }
  bool from_cache() const { return from_cache_; }

 private:
  CachedChatBackend& inner_;
  bool from_cache_ = false;
};

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

ordered_json stage_json(const StageCounts& s) {
  return {{"completed", s.completed}, {"errored", s.errored}, {"skipped", s.skipped},
          {"cached", s.cached},       {"fetched", s.fetched}, {"fallbacks", s.fallbacks}};
}

ordered_json keyword_json(const QuestionTrace& trace) {
  ordered_json j;
  j["question_id"] = trace.question_id;
  ordered_json terms = ordered_json::array();
  if (trace.keywords) {
    for (const auto& kw : trace.keywords->keywords) {
      terms.push_back({{"term", kw.term}, {"score", kw.score}});
    }
  }
  j["keywords"] = terms;
  j["formatted"] = trace.keywords ? format_keywords(*trace.keywords) : std::string();
  j["fallback"] = trace.keyword_fallback;
  j["error"] = trace.keyword_error ? ordered_json(*trace.keyword_error) : ordered_json(nullptr);
  return j;
}

ordered_json caption_json(const CaptionRecord& record,
                          const std::optional<std::string>& error) {
  ordered_json j;
  j["image_id"] = record.image_id;
  j["mode"] = std::string(to_string(record.mode));
  j["keywords"] = record.keywords ? ordered_json(*record.keywords) : ordered_json(nullptr);
  j["prompt"] = record.prompt;
  j["caption"] = record.caption;
  j["backend_model"] = record.backend_model;
  j["created_at"] = record.created_at;
  j["error"] = error ? ordered_json(*error) : ordered_json(nullptr);
  return j;
}

struct CaptionJob {
  ImageRef image;
  CaptionMode mode = CaptionMode::general;
  std::optional<std::string> keywords;
  bool from_cache = false;
  std::size_t first_question = 0;
};

}  // namespace

std::size_t PipelineResult::errored_questions() const {
  std::size_t count = 0;
  for (const auto& answer : answers) count += answer.error ? 1 : 0;
  return count;
}

std::string RunManifest::to_json() const {
  ordered_json j;
  j["config"] = json::parse(config_snapshot);
  j["stopword_checksum"] = stopword_checksum;
  j["questions"] = questions;
  ordered_json stage_counts = ordered_json::object();
  for (const auto& [name, counts] : stages) stage_counts[name] = stage_json(counts);
  j["stages"] = stage_counts;
  ordered_json usage = ordered_json::array();
  for (const auto& b : backends) {
    usage.push_back({{"role", b.role},
                     {"model", b.model},
                     {"calls", b.stats.calls},
                     {"retries", b.stats.retries},
                     {"failures", b.stats.failures},
                     {"cache_hits", b.stats.cache_hits}});
  }
  j["backends"] = usage;
  j["deviation_flags"] = deviation_flags;
  j["timings_ms"] = timings_ms;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j.dump(2) + "\n";
}

BackendSet make_backends(const RunConfig& config) {
  auto chat = [](const std::optional<BackendSpec>& spec) -> std::shared_ptr<ChatBackend> {
    if (!spec) return nullptr;
    if (spec->type == BackendSpec::Type::scripted_mock) {
      return ScriptedChatBackend::from_file(spec->script);
    }
    if (spec->type == BackendSpec::Type::openai) {
      return std::make_shared<OpenAiChatClient>(spec->config);
    }
    throw Error(ErrorCode::kConfig, "embedding backend used for a chat role");
  };
  auto embedder =
      [](const std::optional<BackendSpec>& spec) -> std::shared_ptr<EmbeddingBackend> {
    if (!spec) return nullptr;
    if (spec->type == BackendSpec::Type::mock_embed) {
      return std::make_shared<MockEmbeddingBackend>(spec->dim);
    }
    if (spec->type == BackendSpec::Type::openai) {
      return std::make_shared<OpenAiEmbeddingClient>(spec->config);
    }
    throw Error(ErrorCode::kConfig, "chat backend used for an embedding role");
  };
  return {chat(config.caption_backend), chat(config.answer_backend),
          embedder(config.text_embedding_backend),
          embedder(config.eval_embedding_backend)};
}

PipelineResult run_pipeline(const RunConfig& config, Stage until) {
  config.validate();
  return run_pipeline(config, make_backends(config), until);
}

PipelineResult run_pipeline(const RunConfig& config, const BackendSet& backends,
                            Stage until) {
  config.validate();
  const auto run_start = Clock::now();
  PipelineResult result;
  RunManifest& manifest = result.manifest;
  manifest.started_at = utc_timestamp();
  manifest.config_snapshot = config_snapshot(config);
  manifest.deviation_flags = {std::string(kNormalizationDeviationFlag)};

  auto stage_start = Clock::now();
  result.questions = load_questions(config.dataset_path, config.dataset_format);
  if (config.limit && result.questions.size() > *config.limit) {
    result.questions.resize(*config.limit);
  }
  const auto& questions = result.questions;
  const std::size_t n = questions.size();
  manifest.questions = n;
  manifest.timings_ms["dataset"] = elapsed_ms(stage_start);

  const StopwordList stopwords = config.stopwords_path
                                     ? StopwordList::from_file(*config.stopwords_path)
                                     : StopwordList::english();
  manifest.stopword_checksum = stopwords.checksum();

  std::filesystem::create_directories(config.run_root);
  ResponseCache cache(config.run_root);

  const bool needs_text_embedding = config.context != ContextKind::general_caption;
  if (!backends.caption || !backends.answer ||
      (needs_text_embedding && !backends.text_embedding)) {
    throw Error(ErrorCode::kConfig, "backend set is missing a required role");
  }
  CachedChatBackend caption_backend(backends.caption, cache.chat());
  CachedChatBackend answer_backend(backends.answer, cache.chat());
  std::optional<CachedEmbeddingBackend> text_embedder;
  if (backends.text_embedding) text_embedder.emplace(backends.text_embedding, cache.embedding());
  std::optional<CachedEmbeddingBackend> eval_embedder;
  if (backends.eval_embedding) eval_embedder.emplace(backends.eval_embedding, cache.embedding());

  result.traces.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.traces[i].question_id = questions[i].question_id;
  auto& traces = result.traces;

  auto finish = [&]() -> PipelineResult& {
    manifest.backends.clear();
    manifest.backends.push_back({"caption", caption_backend.model(), caption_backend.stats()});
    manifest.backends.push_back({"answer", answer_backend.model(), answer_backend.stats()});
    if (text_embedder) {
      manifest.backends.push_back({"text_embedding", text_embedder->model(), text_embedder->stats()});
    }
    if (eval_embedder) {
      manifest.backends.push_back({"eval_embedding", eval_embedder->model(), eval_embedder->stats()});
    }
    manifest.timings_ms["total"] = elapsed_ms(run_start);
    manifest.finished_at = utc_timestamp();
    write_file_atomic(config.run_root / "manifest.json", manifest.to_json());
    return result;
  };

  // Keywords.
  stage_start = Clock::now();
  StageCounts keyword_counts;
  if (config.context == ContextKind::general_caption) {
    keyword_counts.skipped = n;
  } else {
    parallel_for(n, config.workers, [&](std::size_t i) {
      auto& trace = traces[i];
      try {
        trace.keywords =
            extract_keywords(questions[i].question, config.keywords, stopwords, *text_embedder);
      } catch (const Error& e) {
        if (is_fatal(e)) throw;
        if (e.code() == ErrorCode::kEmptyCandidateSet ||
            e.code() == ErrorCode::kAllCandidatesDegenerate) {
          trace.keyword_fallback = true;
        } else {
          trace.keyword_error = e.what();
          trace.error = e.what();
        }
      }
    });
    for (const auto& trace : traces) {
      if (trace.keyword_error) {
        ++keyword_counts.errored;
      } else {
        ++keyword_counts.completed;
        if (trace.keyword_fallback) ++keyword_counts.fallbacks;
      }
    }
  }
  manifest.stages["keywords"] = keyword_counts;
  manifest.timings_ms["keywords"] = elapsed_ms(stage_start);
  {
    std::string lines;
    for (const auto& trace : traces) lines += keyword_json(trace).dump() + "\n";
    write_file_atomic(config.run_root / "keywords.jsonl", lines);
  }
  if (until == Stage::keywords) return finish();

  // Captions: one backend request per distinct (image, mode, keywords).
  stage_start = Clock::now();
  std::vector<CaptionJob> jobs;
  std::map<std::tuple<std::string, int, std::string>, std::size_t> job_index;
  for (std::size_t i = 0; i < n; ++i) {
    auto& trace = traces[i];
    if (trace.error) continue;
    CaptionJob job;
    job.image = config.image_for(questions[i]);
    if (config.context != ContextKind::general_caption && trace.keywords &&
        !trace.keyword_fallback) {
      job.mode = CaptionMode::question_driven;
      job.keywords = format_keywords(*trace.keywords);
    }
    const auto key = std::make_tuple(job.image.id, static_cast<int>(job.mode),
                                     job.keywords.value_or(""));
    auto [it, inserted] = job_index.emplace(key, jobs.size());
    if (inserted) {
      job.first_question = i;
      jobs.push_back(std::move(job));
    }
    trace.caption_index = it->second;
  }
  result.captions.resize(jobs.size());
  result.caption_errors.resize(jobs.size());
  parallel_for(jobs.size(), config.workers, [&](std::size_t j) {
    auto& job = jobs[j];
    TracingChat tracer(caption_backend);
    try {
      result.captions[j] = caption_image(tracer, job.image, job.mode, job.keywords,
                                         config.caption_decoding);
      job.from_cache = tracer.from_cache();
    } catch (const Error& e) {
      if (is_fatal(e)) throw;
      auto& record = result.captions[j];
      record.image_id = job.image.id;
      record.mode = job.mode;
      record.keywords = job.keywords;
      try {
        record.prompt = build_caption_prompt(
            job.mode, job.keywords ? std::optional<std::string_view>(*job.keywords)
                                   : std::nullopt);
      } catch (const Error&) {
      }
      record.backend_model = caption_backend.model();
      result.caption_errors[j] = e.what();
    }
  });
  StageCounts caption_counts;
  for (std::size_t i = 0; i < n; ++i) {
    auto& trace = traces[i];
    if (!trace.caption_index) {
      ++caption_counts.skipped;
      continue;
    }
    const std::size_t j = *trace.caption_index;
    if (result.caption_errors[j]) {
      trace.error = *result.caption_errors[j];
      ++caption_counts.errored;
      continue;
    }
    ++caption_counts.completed;
    if (trace.keyword_fallback) ++caption_counts.fallbacks;
    if (jobs[j].first_question == i && !jobs[j].from_cache) {
      ++caption_counts.fetched;
    } else {
      ++caption_counts.cached;
    }
  }
  manifest.stages["captions"] = caption_counts;
  manifest.timings_ms["captions"] = elapsed_ms(stage_start);
  {
    std::string lines;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      lines += caption_json(result.captions[j], result.caption_errors[j]).dump() + "\n";
    }
    write_file_atomic(config.run_root / "captions.jsonl", lines);
  }
  if (until == Stage::captions) return finish();

  // Context for the answering prompt.
  stage_start = Clock::now();
  StageCounts context_counts;
  parallel_for(n, config.workers, [&](std::size_t i) {
    auto& trace = traces[i];
    if (trace.error) return;
    const std::string& caption = result.captions[*trace.caption_index].caption;
    if (config.context != ContextKind::relevant_sentence) {
      trace.context = caption;
      return;
    }
    try {
      trace.sentence = select_relevant_sentence(caption, questions[i].question, *text_embedder);
      trace.context = trace.sentence->sentence;
    } catch (const Error& e) {
      if (is_fatal(e)) throw;
      trace.error = e.what();
    }
  });
  for (const auto& trace : traces) {
    if (!trace.caption_index || (trace.error && trace.context.empty() &&
                                 result.caption_errors[*trace.caption_index])) {
      ++context_counts.skipped;
    } else if (trace.error) {
      ++context_counts.errored;
    } else {
      ++context_counts.completed;
    }
  }
  manifest.stages["context"] = context_counts;
  manifest.timings_ms["context"] = elapsed_ms(stage_start);

  // Answers.
  stage_start = Clock::now();
  result.answers.resize(n);
  std::vector<char> answer_from_cache(n, 0);
  std::vector<char> answer_attempted(n, 0);
  parallel_for(n, config.workers, [&](std::size_t i) {
    auto& trace = traces[i];
    ContextKind kind = config.context;
    if (kind == ContextKind::qd_caption && trace.keyword_fallback) {
      kind = ContextKind::general_caption;
    }
    if (trace.error) {
      result.answers[i] = make_failed_answer(questions[i].question_id, kind, "", *trace.error);
      return;
    }
    answer_attempted[i] = 1;
    std::string prompt;
    try {
      prompt = build_qa_prompt(trace.context, questions[i].question);
      TracingChat tracer(answer_backend);
      std::string raw = generate_answer(tracer, prompt, config.answer_decoding);
      answer_from_cache[i] = tracer.from_cache() ? 1 : 0;
      result.answers[i] = make_answer_record(questions[i].question_id, kind,
                                             std::move(prompt), std::move(raw));
    } catch (const Error& e) {
      if (is_fatal(e)) throw;
      trace.error = e.what();
      result.answers[i] =
          make_failed_answer(questions[i].question_id, kind, std::move(prompt), e.what());
    }
  });
  StageCounts answer_counts;
  for (std::size_t i = 0; i < n; ++i) {
    if (!answer_attempted[i]) {
      ++answer_counts.skipped;
    } else if (result.answers[i].error) {
      ++answer_counts.errored;
    } else {
      ++answer_counts.completed;
      if (answer_from_cache[i]) {
        ++answer_counts.cached;
      } else {
        ++answer_counts.fetched;
      }
    }
  }
  manifest.stages["answers"] = answer_counts;
  manifest.timings_ms["answers"] = elapsed_ms(stage_start);
  write_file_atomic(config.run_root / "answers.jsonl", answers_to_jsonl(result.answers));
  if (until == Stage::answers) return finish();

  // Evaluation.
  stage_start = Clock::now();
  EmbeddingBackend* evaluator = eval_embedder ? &*eval_embedder : nullptr;
  result.evaluation = evaluate_run(result.answers, questions, config.policies, evaluator);
  const auto& policies = config.policies;
  const auto found = std::find(policies.begin(), policies.end(), config.error_policy);
  if (found != policies.end()) {
    result.errors = analyze_errors(result.answers, result.evaluation->records,
                                   static_cast<std::size_t>(found - policies.begin()));
  } else {
    result.errors = analyze_errors(result.answers, questions, config.error_policy, evaluator);
  }
  StageCounts eval_counts;
  eval_counts.completed = result.evaluation->report.metadata.answered;
  eval_counts.errored = n - eval_counts.completed;
  manifest.stages["evaluation"] = eval_counts;
  write_reports(config.run_root, result.evaluation->report, result.errors);
  {
    std::string lines;
    for (const auto& record : result.evaluation->records) {
      ordered_json j;
      j["question_id"] = record.question_id;
      j["prediction"] = record.prediction;
      j["gold"] = record.gold;
      j["similarity"] =
          record.similarity ? ordered_json(*record.similarity) : ordered_json(nullptr);
      j["degenerate"] = record.degenerate;
      j["failed"] = record.failed;
      ordered_json verdicts = ordered_json::object();
      for (std::size_t p = 0; p < policies.size(); ++p) {
        verdicts[policies[p].label()] = static_cast<bool>(record.verdicts[p]);
      }
      j["verdicts"] = verdicts;
      lines += j.dump() + "\n";
    }
    write_file_atomic(config.run_root / "evaluations.jsonl", lines);
  }
  manifest.timings_ms["evaluation"] = elapsed_ms(stage_start);
  return finish();
}

void write_reports(const std::filesystem::path& dir, const RunReport& report,
                   const std::optional<ErrorReport>& errors) {
  for (ReportFormat format : {ReportFormat::markdown, ReportFormat::csv, ReportFormat::json}) {
    write_file_atomic(dir / ("report." + std::string(extension(format))),
                      render_report(report, format));
  }
  if (errors) write_file_atomic(dir / "errors.json", render_error_report(*errors));
}

std::string answers_to_jsonl(const std::vector<AnswerRecord>& answers) {
  std::string out;
  for (const auto& a : answers) {
    ordered_json j;
    j["question_id"] = a.question_id;
    j["context_kind"] = std::string(to_string(a.context_kind));
    j["prompt"] = a.prompt;
    j["raw_answer"] = a.raw_answer;
    j["normalized_answer"] = a.normalized_answer;
    j["over_length"] = a.over_length;
    j["unanswerable"] = a.unanswerable;
    j["error"] = a.error ? ordered_json(*a.error) : ordered_json(nullptr);
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<AnswerRecord> answers_from_jsonl(std::string_view text) {
  std::vector<AnswerRecord> out;
  std::size_t offset = 0;
  std::size_t line_no = 0;
  while (offset < text.size()) {
    std::size_t nl = text.find('\n', offset);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(offset, nl - offset);
    ++line_no;
    offset = nl + 1;
    if (trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("question_id")) {
      throw Error(ErrorCode::kMalformedRecord,
                  "answers line " + std::to_string(line_no) + " is not an answer object");
    }
    try {
      const auto id = j.at("question_id").get<std::string>();
      const auto kind = parse_context_kind(j.value("context_kind", std::string("general_caption")));
      const auto prompt = j.value("prompt", std::string());
      if (j.contains("error") && !j["error"].is_null()) {
        out.push_back(make_failed_answer(id, kind, prompt, j["error"].get<std::string>()));
      } else {
        // Derived fields are recomputed so they always agree with raw_answer.
        out.push_back(make_answer_record(id, kind, prompt, j.at("raw_answer").get<std::string>()));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedRecord,
                  "answers line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename " + tmp + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace capvqa
