// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capvqa/vector_math.hpp"

namespace capvqa {

enum class BackendKind { chat, embedding };

std::string_view to_string(BackendKind kind);

/// Connection settings for one OpenAI-compatible service.
struct BackendConfig {
  BackendKind kind = BackendKind::chat;
  std::string base_url;
  std::string model;
  std::optional<std::string> api_key;
  double timeout_s = 60.0;
  int max_retries = 3;
  int max_in_flight = 4;
  double backoff_base_s = 0.5;
  double backoff_cap_s = 30.0;

  void validate() const;
};

/// Sampling parameters sent with every answer request. The defaults are the
/// answer-generation settings: temperature 0.2, top_p 1, no penalties and a
/// 10-token budget for two-word answers.
struct DecodingParams {
  double temperature = 0.2;
  double top_p = 1.0;
  double frequency_penalty = 0.0;
  double presence_penalty = 0.0;
  int max_tokens = 10;

  void validate() const;
  bool operator==(const DecodingParams&) const = default;
};

struct ImageRef {
  std::string id;
  /// Local file path or http(s)/data URL.
  std::string location;

  bool is_url() const;
};

/// Throws kImageUnreadable when a local image cannot be opened.
void check_image_readable(const ImageRef& image);

/// URL to put on the wire: URLs pass through, local files become base64
/// data URIs.
std::string image_transport_url(const ImageRef& image);

struct ChatMessage {
  std::string role = "user";
  std::string text;
  std::optional<ImageRef> image;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  /// Absent means "use the server's defaults".
  std::optional<DecodingParams> decoding;

  /// Single user turn, optionally with an attached image.
  static ChatRequest user(std::string text,
                          std::optional<ImageRef> image = std::nullopt,
                          std::optional<DecodingParams> decoding = std::nullopt);
};

/// Throws kInvalidArgument for an empty request or an image sent to a
/// text-only backend.
void validate_request(const ChatRequest& request, bool vision_capable);

/// Canonical text form of a request: each message is its text, prefixed by
/// "<image:ID>\n" when it carries an image; messages are joined by "\n".
/// A single text-only user message renders to exactly its text.
std::string render_prompt(const ChatRequest& request);

struct BackendStats {
  std::uint64_t calls = 0;
  std::uint64_t retries = 0;
  std::uint64_t failures = 0;
  std::uint64_t cache_hits = 0;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// Text of the first choice, verbatim.
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string model() const = 0;
  virtual bool vision_capable() const { return true; }
  virtual BackendStats stats() const { return {}; }
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  /// One vector per input, same order, all of one dimension.
  virtual std::vector<EmbeddingVector> embed(
      std::span<const std::string> texts) = 0;
  virtual std::string model() const = 0;
  virtual BackendStats stats() const { return {}; }

  EmbeddingVector embed_one(const std::string& text);
};

/// Checks the batch contract (count, consistent non-zero dim).
void check_embedding_batch(std::span<const EmbeddingVector> vectors,
                           std::size_t expected_count);

}  // namespace capvqa
