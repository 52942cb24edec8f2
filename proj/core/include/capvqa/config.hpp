// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capvqa/backends.hpp"
#include "capvqa/dataset.hpp"
#include "capvqa/evaluation.hpp"
#include "capvqa/keywords.hpp"
#include "capvqa/qa.hpp"

namespace capvqa {

/// How one pipeline role is served.
struct BackendSpec {
  enum class Type { openai, scripted_mock, mock_embed };

  Type type = Type::openai;
  BackendConfig config;
  /// Name of the environment variable holding the API key, if any.
  std::string api_key_env;
  /// Scripted mock response table.
  std::filesystem::path script;
  /// Mock embedder dimension.
  std::size_t dim = 256;

  /// "mock:FILE" for chat roles, "mock" or "mock:DIM" for embedding roles.
  static BackendSpec from_flag(std::string_view flag, BackendKind kind);
};

struct RunConfig {
  std::filesystem::path dataset_path;
  DatasetFormat dataset_format = DatasetFormat::fixture_jsonl;
  /// Directory or URL prefix; empty means image ids are already paths.
  std::string image_root;
  /// "{image_id}" is replaced by the question's image id.
  std::string image_pattern = "{image_id}.jpg";

  ContextKind context = ContextKind::qd_caption;
  KeywordOptions keywords;
  std::optional<std::filesystem::path> stopwords_path;

  std::optional<BackendSpec> caption_backend;
  std::optional<BackendSpec> answer_backend;
  /// Keyword ranking and relevant-sentence selection.
  std::optional<BackendSpec> text_embedding_backend;
  /// Semantic answer matching.
  std::optional<BackendSpec> eval_embedding_backend;

  DecodingParams answer_decoding;
  std::optional<DecodingParams> caption_decoding;

  std::vector<MatchPolicy> policies = canonical_policies();
  /// Policy whose wrong set feeds the error analysis.
  MatchPolicy error_policy = MatchPolicy::semantic(0.7);

  std::size_t workers = 8;
  std::filesystem::path run_root = "run";
  std::optional<std::size_t> limit;

  /// Throws kConfig naming the first violated constraint.
  void validate() const;

  ImageRef image_for(const QuestionRecord& question) const;
};

/// Parses a JSON run config. Relative paths resolve against `base_dir`;
/// "${VAR}" inside api_key fields and api_key_env names are resolved from
/// the environment.
RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// JSON snapshot with every API key redacted.
std::string config_snapshot(const RunConfig& config);

}  // namespace capvqa
