// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "capvqa/backends.hpp"

namespace capvqa {

struct CacheKey {
  std::string digest;

  /// SHA-256 of the canonical JSON of (kind, model, input, image_id,
  /// decoding). Keys are sorted and doubles use shortest round-trip form.
  static CacheKey for_request(BackendKind kind, std::string_view model,
                              std::string_view input,
                              std::string_view image_id,
                              const std::optional<DecodingParams>& decoding);

  static std::string canonical_form(
      BackendKind kind, std::string_view model, std::string_view input,
      std::string_view image_id, const std::optional<DecodingParams>& decoding);

  bool operator==(const CacheKey&) const = default;
};

using CachePayload = std::variant<std::string, std::vector<double>>;

struct CacheEntry {
  CacheKey key;
  CachePayload payload;
  std::string created_at;
  std::string backend_model;
};

/// Append-only JSONL store with an in-memory index. Each put is flushed and
/// fsync'd before returning. A torn final line left by a crash is ignored
/// on open.
class CacheStore {
 public:
  explicit CacheStore(std::filesystem::path file);
  ~CacheStore();

  CacheStore(const CacheStore&) = delete;
  CacheStore& operator=(const CacheStore&) = delete;

  std::optional<CacheEntry> get(const CacheKey& key) const;

  /// No-op for an identical re-put; kConflictingPayload for a different one.
  void put(const CacheKey& key, const CachePayload& payload,
           const std::string& backend_model);

  std::size_t size() const;
  const std::filesystem::path& path() const { return file_; }

 private:
  void append_line(const std::string& line);

  std::filesystem::path file_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, CacheEntry> index_;
  std::FILE* out_ = nullptr;
};

/// {run_root}/cache/{chat,embedding}.jsonl
class ResponseCache {
 public:
  explicit ResponseCache(const std::filesystem::path& run_root);

  CacheStore& chat() { return chat_; }
  CacheStore& embedding() { return embedding_; }

 private:
  CacheStore chat_;
  CacheStore embedding_;
};

/// Read-through cache in front of a chat backend. Concurrent requests for
/// the same key share one backend call.
class CachedChatBackend final : public ChatBackend {
 public:
  struct Result {
    std::string text;
    bool from_cache = false;
  };

  CachedChatBackend(std::shared_ptr<ChatBackend> inner, CacheStore& store);

  std::string complete(const ChatRequest& request) override;
  Result complete_traced(const ChatRequest& request);

  std::string model() const override { return inner_->model(); }
  bool vision_capable() const override { return inner_->vision_capable(); }
  BackendStats stats() const override;

  static CacheKey key_for(const ChatRequest& request, std::string_view model);

 private:
  std::shared_ptr<ChatBackend> inner_;
  CacheStore& store_;
  std::mutex mutex_;
  std::unordered_map<std::string, std::shared_future<std::string>> pending_;
  std::atomic<std::uint64_t> hits_{0};
};

/// Per-text read-through cache; only the misses of a batch reach the inner
/// backend, in one call.
class CachedEmbeddingBackend final : public EmbeddingBackend {
 public:
  CachedEmbeddingBackend(std::shared_ptr<EmbeddingBackend> inner,
                         CacheStore& store);

  std::vector<EmbeddingVector> embed(
      std::span<const std::string> texts) override;
  std::string model() const override { return inner_->model(); }
  BackendStats stats() const override;

 private:
  std::shared_ptr<EmbeddingBackend> inner_;
  CacheStore& store_;
  std::atomic<std::uint64_t> hits_{0};
};

}  // namespace capvqa
