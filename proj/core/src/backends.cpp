// SPDX-License-Identifier: Apache-2.0
#include "capvqa/backends.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "capvqa/error.hpp"
#include "capvqa/hashing.hpp"

namespace capvqa {
namespace {

bool starts_with(std::string_view text, std::string_view prefix) {
  return text.substr(0, prefix.size()) == prefix;
}

std::string mime_type_for(const std::string& location) {
  const auto ext = std::filesystem::path(location).extension().string();
  if (ext == ".png" || ext == ".PNG") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "image/jpeg";
}

}  // namespace

std::string_view to_string(BackendKind kind) {
  return kind == BackendKind::chat ? "chat" : "embedding";
}

void BackendConfig::validate() const {
  if (base_url.empty()) throw Error(ErrorCode::kConfig, "backend base_url is empty");
  if (model.empty()) throw Error(ErrorCode::kConfig, "backend model is empty");
  if (!(timeout_s > 0.0)) throw Error(ErrorCode::kConfig, "timeout must be > 0");
  if (max_retries < 0) throw Error(ErrorCode::kConfig, "max_retries must be >= 0");
  if (max_in_flight < 1) throw Error(ErrorCode::kConfig, "max_in_flight must be >= 1");
  if (backoff_base_s < 0.0 || backoff_cap_s < 0.0) {
    throw Error(ErrorCode::kConfig, "backoff durations must be >= 0");
  }
}

void DecodingParams::validate() const {
  if (!(temperature >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be >= 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "top_p must be in (0, 1]");
  }
  if (max_tokens < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_tokens must be >= 1");
  }
}

bool ImageRef::is_url() const {
  return starts_with(location, "http://") || starts_with(location, "https://") ||
         starts_with(location, "data:");
}

void check_image_readable(const ImageRef& image) {
  if (image.is_url()) return;
  std::ifstream in(image.location, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kImageUnreadable,
                "image '" + image.id + "' at " + image.location);
  }
}

std::string image_transport_url(const ImageRef& image) {
  if (image.is_url()) return image.location;
  std::ifstream in(image.location, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kImageUnreadable,
                "image '" + image.id + "' at " + image.location);
  }
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return "data:" + mime_type_for(image.location) + ";base64," +
         base64_encode(bytes.str());
}

ChatRequest ChatRequest::user(std::string text, std::optional<ImageRef> image,
                              std::optional<DecodingParams> decoding) {
  ChatRequest request;
  request.messages.push_back(ChatMessage{"user", std::move(text), std::move(image)});
  request.decoding = std::move(decoding);
  return request;
}

void validate_request(const ChatRequest& request, bool vision_capable) {
  if (request.messages.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "chat request has no messages");
  }
  if (!vision_capable) {
    for (const auto& message : request.messages) {
      if (message.image) {
        throw Error(ErrorCode::kInvalidArgument,
                    "image sent to a text-only chat backend");
      }
    }
  }
  if (request.decoding) request.decoding->validate();
}

std::string render_prompt(const ChatRequest& request) {
  std::string out;
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    const auto& message = request.messages[i];
    if (i > 0) out += '\n';
    if (message.image) out += "<image:" + message.image->id + ">\n";
    out += message.text;
  }
  return out;
}

EmbeddingVector EmbeddingBackend::embed_one(const std::string& text) {
  auto vectors = embed(std::span<const std::string>(&text, 1));
  check_embedding_batch(vectors, 1);
  return std::move(vectors.front());
}

void check_embedding_batch(std::span<const EmbeddingVector> vectors,
                           std::size_t expected_count) {
  if (vectors.size() != expected_count) {
    throw Error(ErrorCode::kInternal,
                "embedding backend returned " + std::to_string(vectors.size()) +
                    " vectors for " + std::to_string(expected_count) + " inputs");
  }
  for (const auto& v : vectors) {
    if (v.empty() || v.dim() != vectors.front().dim()) {
      throw Error(ErrorCode::kInternal, "embedding dimension mismatch within a batch");
    }
  }
}

}  // namespace capvqa
