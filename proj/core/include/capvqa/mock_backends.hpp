// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "capvqa/backends.hpp"

namespace capvqa {

/// Deterministic bag-of-words embedding. Tokens come from word_tokens();
/// tokens in the shipped English stopword list are dropped; each remaining
/// token adds 1.0 at fnv1a64(token) % dim; the sum is L2-normalised. No
/// surviving tokens gives the zero vector.
EmbeddingVector mock_embed(std::string_view text, std::size_t dim);

class MockEmbeddingBackend final : public EmbeddingBackend {
 public:
  explicit MockEmbeddingBackend(std::size_t dim = 256);

  std::vector<EmbeddingVector> embed(
      std::span<const std::string> texts) override;
  std::string model() const override;
  BackendStats stats() const override;

  std::size_t dim() const { return dim_; }
  std::uint64_t call_count() const { return calls_.load(); }

 private:
  std::size_t dim_;
  std::atomic<std::uint64_t> calls_{0};
};

/// What the scripted backend answers when a prompt has no entry.
struct ScriptFallback {
  enum class Mode { echo_last_user_word, fixed };
  Mode mode = Mode::echo_last_user_word;
  std::string text;

  /// "echo-last-user-word" or "fixed:<text>".
  static ScriptFallback parse(std::string_view spec);
  std::string to_string() const;
};

/// Chat backend answering from a table keyed by SHA-256 hex of
/// render_prompt(request).
class ScriptedChatBackend final : public ChatBackend {
 public:
  ScriptedChatBackend(std::map<std::string, std::string> responses,
                      ScriptFallback fallback,
                      std::string model = "scripted-mock");

  /// JSON file: {"model": ..., "responses": {hex: text}, "fallback": ...}.
  static std::unique_ptr<ScriptedChatBackend> from_file(
      const std::filesystem::path& path);

  std::string complete(const ChatRequest& request) override;
  std::string model() const override { return model_; }
  BackendStats stats() const override;

  std::uint64_t call_count() const { return calls_.load(); }
  std::uint64_t fallback_count() const { return fallbacks_.load(); }

 private:
  std::map<std::string, std::string> responses_;
  ScriptFallback fallback_;
  std::string model_;
  std::atomic<std::uint64_t> calls_{0};
  std::atomic<std::uint64_t> fallbacks_{0};
};

}  // namespace capvqa
