// SPDX-License-Identifier: Apache-2.0
#include "capvqa_tools/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "capvqa/cache.hpp"
#include "capvqa/config.hpp"
#include "capvqa/error.hpp"
#include "capvqa/mock_backends.hpp"
#include "capvqa/pipeline.hpp"
#include "capvqa/report.hpp"
#include "json.hpp"

namespace capvqa::cli {
namespace {

namespace fs = std::filesystem;

/// Raised while turning flags into a RunConfig; maps to the usage exit code.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunFlags {
  std::string config;
  std::string dataset;
  std::string format;
  std::string images;
  std::string mode;
  std::optional<std::size_t> limit;
  std::string out;
  std::string policies;
  std::string backend_chat;
  std::string backend_embed;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> k;
};

void add_dataset_flags(CLI::App& app, RunFlags& f) {
  app.add_option("--dataset", f.dataset, "Question file (fixture JSONL or GQA JSON)");
  app.add_option("--format", f.format, "Dataset format: fixture-jsonl or gqa-json");
  app.add_option("--limit", f.limit, "Process only the first N questions")
      ->check(CLI::PositiveNumber);
}

void add_run_flags(CLI::App& app, RunFlags& f) {
  app.add_option("--config", f.config, "JSON run config");
  add_dataset_flags(app, f);
  app.add_option("--images", f.images, "Image directory or URL prefix");
  app.add_option("--mode", f.mode, "Context kind")
      ->check(CLI::IsMember({"general", "qd", "sentence", "general_caption", "qd_caption",
                             "relevant_sentence"}));
  app.add_option("--out", f.out, "Run directory");
  app.add_option("--policies", f.policies, "Match policies, e.g. em,0.7,0.8,0.9");
  app.add_option("--backend-chat", f.backend_chat, "Chat backend override: mock:FILE");
  app.add_option("--backend-embed", f.backend_embed,
                 "Embedding backend override: mock or mock:DIM");
  app.add_option("--workers", f.workers, "Concurrent question workers")
      ->check(CLI::PositiveNumber);
  app.add_option("--k", f.k, "Keywords per question")->check(CLI::PositiveNumber);
}

RunConfig resolve_config(const RunFlags& f, bool require_chat) {
  try {
    RunConfig config = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    if (!f.dataset.empty()) {
      config.dataset_path = f.dataset;
      config.dataset_format = infer_dataset_format(f.dataset);
    }
    if (!f.format.empty()) config.dataset_format = parse_dataset_format(f.format);
    if (!f.images.empty()) config.image_root = f.images;
    if (!f.mode.empty()) config.context = parse_context_kind(f.mode);
    if (f.limit) config.limit = f.limit;
    if (!f.out.empty()) config.run_root = f.out;
    if (!f.policies.empty()) config.policies = parse_policies(f.policies);
    if (f.workers) config.workers = *f.workers;
    if (f.k) config.keywords.k = *f.k;
    if (!f.backend_chat.empty()) {
      const auto spec = BackendSpec::from_flag(f.backend_chat, BackendKind::chat);
      config.caption_backend = spec;
      config.answer_backend = spec;
    }
    if (!f.backend_embed.empty()) {
      const auto spec = BackendSpec::from_flag(f.backend_embed, BackendKind::embedding);
      config.text_embedding_backend = spec;
      config.eval_embedding_backend = spec;
    }
    if (config.dataset_path.empty()) throw UsageError("--dataset or --config is required");
    if (require_chat) config.validate();
    return config;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig || e.code() == ErrorCode::kInvalidArgument) {
      throw UsageError(e.what());
    }
    throw;
  }
}

std::vector<QuestionRecord> load_limited(const RunConfig& config) {
  auto questions = load_questions(config.dataset_path, config.dataset_format);
  if (config.limit && questions.size() > *config.limit) questions.resize(*config.limit);
  return questions;
}

std::shared_ptr<EmbeddingBackend> make_embedder(const std::optional<BackendSpec>& spec,
                                                const char* role) {
  if (!spec) throw UsageError(std::string("no ") + role + " backend; pass --backend-embed");
  RunConfig probe;
  probe.eval_embedding_backend = spec;
  return make_backends(probe).eval_embedding;
}

void print_stage(std::ostream& out, const RunManifest& manifest, const std::string& stage) {
  const auto it = manifest.stages.find(stage);
  if (it == manifest.stages.end()) return;
  const auto& s = it->second;
  out << stage << ": completed " << s.completed << ", errored " << s.errored << ", skipped "
      << s.skipped << ", cached " << s.cached << ", fetched " << s.fetched << ", fallbacks "
      << s.fallbacks << "\n";
}

int pipeline_exit(const PipelineResult& result, std::ostream& err) {
  const std::size_t errored = result.errored_questions();
  if (errored == 0) return kExitOk;
  err << errored << " of " << result.questions.size() << " questions errored\n";
  return kExitFailure;
}

int cmd_ingest(const RunFlags& f, std::ostream& out) {
  if (f.dataset.empty()) throw UsageError("--dataset is required");
  RunConfig config;
  config.dataset_path = f.dataset;
  try {
    config.dataset_format =
        f.format.empty() ? infer_dataset_format(f.dataset) : parse_dataset_format(f.format);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  config.limit = f.limit;
  out << format_summary(summarize(load_limited(config)));
  return kExitOk;
}

int cmd_keywords(const RunFlags& f, std::ostream& out) {
  const RunConfig config = resolve_config(f, false);
  config.keywords.validate();
  const auto questions = load_limited(config);
  const StopwordList stopwords = config.stopwords_path
                                     ? StopwordList::from_file(*config.stopwords_path)
                                     : StopwordList::english();
  ResponseCache cache(config.run_root);
  CachedEmbeddingBackend embedder(make_embedder(config.text_embedding_backend, "text_embedding"),
                                  cache.embedding());
  for (const auto& q : questions) {
    nlohmann::ordered_json j;
    j["question_id"] = q.question_id;
    try {
      const auto set = extract_keywords(q.question, config.keywords, stopwords, embedder);
      auto terms = nlohmann::ordered_json::array();
      for (const auto& kw : set.keywords) terms.push_back({{"term", kw.term}, {"score", kw.score}});
      j["keywords"] = terms;
      j["formatted"] = format_keywords(set);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyCandidateSet &&
          e.code() != ErrorCode::kAllCandidatesDegenerate) {
        throw;
      }
      j["keywords"] = nlohmann::ordered_json::array();
      j["fallback"] = std::string(to_string(e.code()));
    }
    out << j.dump() << "\n";
  }
  return kExitOk;
}

int cmd_stage(const RunFlags& f, Stage until, std::ostream& out, std::ostream& err) {
  const RunConfig config = resolve_config(f, true);
  const auto result = run_pipeline(config, until);
  for (const char* stage : {"keywords", "captions", "context", "answers", "evaluation"}) {
    print_stage(out, result.manifest, stage);
  }
  if (until == Stage::evaluation && result.evaluation) {
    out << render_report(result.evaluation->report, ReportFormat::markdown);
  }
  out << "artifacts: " << config.run_root.string() << "\n";
  return pipeline_exit(result, err);
}

int cmd_evaluate(const RunFlags& f, const std::string& answers_path, std::ostream& out) {
  const RunConfig config = resolve_config(f, false);
  const auto questions = load_limited(config);
  const fs::path path = answers_path.empty() ? config.run_root / "answers.jsonl" : fs::path(answers_path);
  auto answers = answers_from_jsonl(read_file(path));
  std::shared_ptr<EmbeddingBackend> embedder;
  const bool semantic = std::any_of(config.policies.begin(), config.policies.end(),
                                    [](const MatchPolicy& p) {
                                      return p.kind == MatchPolicy::Kind::semantic;
                                    }) ||
                        config.error_policy.kind == MatchPolicy::Kind::semantic;
  std::optional<ResponseCache> cache;
  std::shared_ptr<CachedEmbeddingBackend> cached;
  if (semantic) {
    embedder = make_embedder(config.eval_embedding_backend, "eval_embedding");
    cache.emplace(config.run_root);
    cached = std::make_shared<CachedEmbeddingBackend>(embedder, cache->embedding());
  }
  const auto evaluation = evaluate_run(answers, questions, config.policies, cached.get());
  const auto errors = analyze_errors(answers, questions, config.error_policy, cached.get());
  write_reports(config.run_root, evaluation.report, errors);
  out << render_report(evaluation.report, ReportFormat::markdown);
  return kExitOk;
}

int cmd_report(const std::string& input, const std::string& format, std::ostream& out) {
  ReportFormat fmt;
  try {
    fmt = parse_report_format(format);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  out << render_report(parse_report_json(read_file(input)), fmt);
  return kExitOk;
}

int cmd_analyze(const RunFlags& f, const std::string& answers_path, const std::string& policy,
                std::ostream& out) {
  RunConfig config = resolve_config(f, false);
  try {
    if (!policy.empty()) config.error_policy = parse_policy(policy);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto questions = load_limited(config);
  const fs::path path = answers_path.empty() ? config.run_root / "answers.jsonl" : fs::path(answers_path);
  const auto answers = answers_from_jsonl(read_file(path));
  std::optional<ResponseCache> cache;
  std::shared_ptr<CachedEmbeddingBackend> cached;
  if (config.error_policy.kind == MatchPolicy::Kind::semantic) {
    cache.emplace(config.run_root);
    cached = std::make_shared<CachedEmbeddingBackend>(
        make_embedder(config.eval_embedding_backend, "eval_embedding"), cache->embedding());
  }
  out << render_error_report(analyze_errors(answers, questions, config.error_policy, cached.get()));
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Caption-mediated visual question answering pipeline", "capvqa"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "capvqa 0.1.0");

  RunFlags ingest_flags;
  auto* ingest = app.add_subcommand("ingest", "Validate a dataset and print its summary");
  add_dataset_flags(*ingest, ingest_flags);

  RunFlags keyword_flags;
  auto* keywords = app.add_subcommand("keywords", "Extract and print keyword sets");
  add_run_flags(*keywords, keyword_flags);

  RunFlags caption_flags;
  auto* caption = app.add_subcommand("caption", "Run the pipeline through captioning");
  add_run_flags(*caption, caption_flags);

  RunFlags answer_flags;
  auto* answer = app.add_subcommand("answer", "Run the pipeline through answering");
  add_run_flags(*answer, answer_flags);

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run the whole pipeline and write reports");
  add_run_flags(*run_cmd, run_flags);

  RunFlags eval_flags;
  std::string eval_answers;
  auto* evaluate = app.add_subcommand("evaluate", "Score an answers.jsonl against gold answers");
  add_run_flags(*evaluate, eval_flags);
  evaluate->add_option("--answers", eval_answers, "Answers file (default OUT/answers.jsonl)");

  std::string report_input;
  std::string report_format = "md";
  auto* report = app.add_subcommand("report", "Re-render a report.json");
  report->add_option("--input", report_input, "report.json to render")->required();
  report->add_option("--format", report_format, "md, csv or json");

  RunFlags analyze_flags;
  std::string analyze_answers;
  std::string analyze_policy;
  auto* analyze = app.add_subcommand("analyze-errors", "Error composition of a scored run");
  add_run_flags(*analyze, analyze_flags);
  analyze->add_option("--answers", analyze_answers, "Answers file (default OUT/answers.jsonl)");
  analyze->add_option("--policy", analyze_policy, "Policy defining wrong answers (default 0.7)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(ingest_flags, out);
    if (keywords->parsed()) return cmd_keywords(keyword_flags, out);
    if (caption->parsed()) return cmd_stage(caption_flags, Stage::captions, out, err);
    if (answer->parsed()) return cmd_stage(answer_flags, Stage::answers, out, err);
    if (run_cmd->parsed()) return cmd_stage(run_flags, Stage::evaluation, out, err);
    if (evaluate->parsed()) return cmd_evaluate(eval_flags, eval_answers, out);
    if (report->parsed()) return cmd_report(report_input, report_format, out);
    if (analyze->parsed()) return cmd_analyze(analyze_flags, analyze_answers, analyze_policy, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace capvqa::cli
