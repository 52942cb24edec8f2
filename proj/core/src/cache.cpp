// SPDX-License-Identifier: Apache-2.0
#include "capvqa/cache.hpp"

#include <unistd.h>

#include <fstream>
#include <sstream>

#include "capvqa/captioning.hpp"
#include "capvqa/error.hpp"
#include "capvqa/hashing.hpp"
#include "json.hpp"

namespace capvqa {
namespace {

using nlohmann::json;

json payload_json(const CachePayload& payload) {
  if (const auto* text = std::get_if<std::string>(&payload)) return *text;
  return std::get<std::vector<double>>(payload);
}

CachePayload payload_from(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array()) return j.get<std::vector<double>>();
  throw Error(ErrorCode::kParse, "cache payload is neither text nor a vector");
}

CacheEntry entry_from(const json& j) {
  CacheEntry entry;
  entry.key.digest = j.at("key").get<std::string>();
  entry.payload = payload_from(j.at("payload"));
  entry.created_at = j.value("created_at", std::string());
  entry.backend_model = j.value("model", std::string());
  return entry;
}

}  // namespace

std::string CacheKey::canonical_form(BackendKind kind, std::string_view model,
                                     std::string_view input,
                                     std::string_view image_id,
                                     const std::optional<DecodingParams>& decoding) {
  // nlohmann::json objects keep keys sorted, which fixes the field order.
  json tuple;
  tuple["kind"] = std::string(to_string(kind));
  tuple["model"] = std::string(model);
  tuple["input"] = std::string(input);
  tuple["image_id"] = std::string(image_id);
  if (decoding) {
    tuple["decoding"] = {{"temperature", decoding->temperature},
                         {"top_p", decoding->top_p},
                         {"frequency_penalty", decoding->frequency_penalty},
                         {"presence_penalty", decoding->presence_penalty},
                         {"max_tokens", decoding->max_tokens}};
  } else {
    tuple["decoding"] = nullptr;
  }
  return tuple.dump();
}

CacheKey CacheKey::for_request(BackendKind kind, std::string_view model,
                               std::string_view input, std::string_view image_id,
                               const std::optional<DecodingParams>& decoding) {
  return {sha256_hex(canonical_form(kind, model, input, image_id, decoding))};
}

CacheStore::CacheStore(std::filesystem::path file) : file_(std::move(file)) {
  std::error_code ec;
  if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path(), ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + file_.parent_path().string());

  if (std::filesystem::exists(file_)) {
    std::ifstream in(file_, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot read cache " + file_.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    std::size_t offset = 0;
    while (offset < text.size()) {
      std::size_t nl = text.find('\n', offset);
      const bool terminated = nl != std::string::npos;
      if (!terminated) nl = text.size();
      const auto parsed = json::parse(text.substr(offset, nl - offset), nullptr, false);
      if (parsed.is_discarded() || !parsed.is_object()) {
        if (!terminated) {
          // Torn write from an interrupted run; drop it.
          std::filesystem::resize_file(file_, offset);
          break;
        }
        throw Error(ErrorCode::kParse, "corrupt cache line at byte " +
                                           std::to_string(offset) + " of " +
                                           file_.string());
      }
      try {
        CacheEntry entry = entry_from(parsed);
        const std::string digest = entry.key.digest;
        index_.insert_or_assign(digest, std::move(entry));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kParse, "bad cache entry in " + file_.string() + ": " + e.what());
      }
      offset = nl + 1;
    }
  }
  out_ = std::fopen(file_.c_str(), "ab");
  if (out_ == nullptr) throw Error(ErrorCode::kIo, "cannot append to " + file_.string());
}

CacheStore::~CacheStore() {
  if (out_ != nullptr) std::fclose(out_);
}

std::optional<CacheEntry> CacheStore::get(const CacheKey& key) const {
  std::lock_guard lock(mutex_);
  auto it = index_.find(key.digest);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void CacheStore::put(const CacheKey& key, const CachePayload& payload,
                     const std::string& backend_model) {
  std::lock_guard lock(mutex_);
  if (auto it = index_.find(key.digest); it != index_.end()) {
    if (it->second.payload == payload) return;
    throw Error(ErrorCode::kConflictingPayload, "key " + key.digest);
  }
  CacheEntry entry{key, payload, utc_timestamp(), backend_model};
  json line;
  line["key"] = key.digest;
  line["payload"] = payload_json(payload);
  line["created_at"] = entry.created_at;
  line["model"] = backend_model;
  append_line(line.dump() + "\n");
  index_.emplace(key.digest, std::move(entry));
}

std::size_t CacheStore::size() const {
  std::lock_guard lock(mutex_);
  return index_.size();
}

void CacheStore::append_line(const std::string& line) {
  if (std::fwrite(line.data(), 1, line.size(), out_) != line.size() ||
      std::fflush(out_) != 0 || ::fsync(::fileno(out_)) != 0) {
    throw Error(ErrorCode::kIo, "write to " + file_.string() + " failed");
  }
}

ResponseCache::ResponseCache(const std::filesystem::path& run_root)
    : chat_(run_root / "cache" / "chat.jsonl"),
      embedding_(run_root / "cache" / "embedding.jsonl") {}

CachedChatBackend::CachedChatBackend(std::shared_ptr<ChatBackend> inner,
                                     CacheStore& store)
    : inner_(std::move(inner)), store_(store) {
  if (!inner_) throw Error(ErrorCode::kConfig, "cached chat backend without a backend");
}

CacheKey CachedChatBackend::key_for(const ChatRequest& request,
                                    std::string_view model) {
  std::string image_ids;
  for (const auto& message : request.messages) {
    if (!message.image) continue;
    if (!image_ids.empty()) image_ids += ",";
    image_ids += message.image->id;
  }
  return CacheKey::for_request(BackendKind::chat, model, render_prompt(request),
                               image_ids, request.decoding);
}

std::string CachedChatBackend::complete(const ChatRequest& request) {
  return complete_traced(request).text;
}

CachedChatBackend::Result CachedChatBackend::complete_traced(
    const ChatRequest& request) {
  const CacheKey key = key_for(request, inner_->model());
  std::promise<std::string> promise;
  std::shared_future<std::string> waiting;
  {
    std::lock_guard lock(mutex_);
    if (auto entry = store_.get(key)) {
      ++hits_;
      return {std::get<std::string>(entry->payload), true};
    }
    if (auto it = pending_.find(key.digest); it != pending_.end()) {
      waiting = it->second;
    } else {
      pending_.emplace(key.digest, promise.get_future().share());
    }
  }
  if (waiting.valid()) {
    ++hits_;
    return {waiting.get(), true};
  }
  try {
    std::string text = inner_->complete(request);
    try {
      store_.put(key, text, inner_->model());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kConflictingPayload) throw;
      text = std::get<std::string>(store_.get(key)->payload);
    }
    promise.set_value(text);
    std::lock_guard lock(mutex_);
    pending_.erase(key.digest);
    return {std::move(text), false};
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    pending_.erase(key.digest);
    throw;
  }
}

BackendStats CachedChatBackend::stats() const {
  BackendStats s = inner_->stats();
  s.cache_hits = hits_.load();
  return s;
}

CachedEmbeddingBackend::CachedEmbeddingBackend(
    std::shared_ptr<EmbeddingBackend> inner, CacheStore& store)
    : inner_(std::move(inner)), store_(store) {
  if (!inner_) throw Error(ErrorCode::kConfig, "cached embedder without a backend");
}

std::vector<EmbeddingVector> CachedEmbeddingBackend::embed(
    std::span<const std::string> texts) {
  if (texts.empty()) throw Error(ErrorCode::kInvalidArgument, "embed() of no texts");
  const std::string model = inner_->model();
  std::vector<std::optional<EmbeddingVector>> found(texts.size());
  std::vector<CacheKey> keys;
  keys.reserve(texts.size());
  std::vector<std::string> misses;
  std::unordered_map<std::string, std::size_t> miss_index;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys.push_back(CacheKey::for_request(BackendKind::embedding, model, texts[i], "",
                                         std::nullopt));
    if (auto entry = store_.get(keys.back())) {
      ++hits_;
      found[i] = EmbeddingVector(std::get<std::vector<double>>(entry->payload));
    } else if (miss_index.emplace(texts[i], misses.size()).second) {
      misses.push_back(texts[i]);
    }
  }
  if (!misses.empty()) {
    auto fresh = inner_->embed(misses);
    check_embedding_batch(fresh, misses.size());
    for (std::size_t m = 0; m < misses.size(); ++m) {
      const auto key = CacheKey::for_request(BackendKind::embedding, model, misses[m],
                                             "", std::nullopt);
      std::vector<double> values(fresh[m].values().begin(), fresh[m].values().end());
      try {
        store_.put(key, values, model);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kConflictingPayload) throw;
        fresh[m] = EmbeddingVector(std::get<std::vector<double>>(store_.get(key)->payload));
      }
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (!found[i]) found[i] = fresh[miss_index.at(texts[i])];
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (auto& v : found) out.push_back(std::move(*v));
  check_embedding_batch(out, texts.size());
  return out;
}

BackendStats CachedEmbeddingBackend::stats() const {
  BackendStats s = inner_->stats();
  s.cache_hits = hits_.load();
  return s;
}

}  // namespace capvqa
