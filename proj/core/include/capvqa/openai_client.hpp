// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <random>
#include <semaphore>
#include <string>

#include "capvqa/backends.hpp"
#include "capvqa/backoff.hpp"

namespace capvqa {

namespace detail {
class JsonPoster;
}  // namespace detail

/// POST {base_url}/v1/chat/completions. Images are sent as data-URI
/// content parts. Transient failures (transport errors, 408, 429, 5xx) are
/// retried up to max_retries times with jittered exponential backoff; at
/// most max_in_flight requests are outstanding at once.
class OpenAiChatClient final : public ChatBackend {
 public:
  explicit OpenAiChatClient(BackendConfig config,
                            std::uint64_t seed = std::random_device{}());
  ~OpenAiChatClient() override;

  std::string complete(const ChatRequest& request) override;
  std::string model() const override;
  BackendStats stats() const override;

  /// The JSON body that complete() would send.
  static std::string request_body(const BackendConfig& config,
                                  const ChatRequest& request);

 private:
  std::unique_ptr<detail::JsonPoster> poster_;
};

/// POST {base_url}/v1/embeddings with {"model", "input": [...]}.
class OpenAiEmbeddingClient final : public EmbeddingBackend {
 public:
  explicit OpenAiEmbeddingClient(BackendConfig config,
                                 std::uint64_t seed = std::random_device{}());
  ~OpenAiEmbeddingClient() override;

  std::vector<EmbeddingVector> embed(
      std::span<const std::string> texts) override;
  std::string model() const override;
  BackendStats stats() const override;

 private:
  std::unique_ptr<detail::JsonPoster> poster_;
};

/// One-shot helpers over a fresh client.
std::string chat(const BackendConfig& config, const ChatRequest& request);
std::vector<EmbeddingVector> embed(const BackendConfig& config,
                                   std::span<const std::string> texts);

}  // namespace capvqa
