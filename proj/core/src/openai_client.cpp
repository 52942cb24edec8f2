// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "capvqa/openai_client.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <thread>

#include "capvqa/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace capvqa {
namespace detail {

using nlohmann::json;
using nlohmann::ordered_json;

/// Shared transport: retry loop, in-flight limit and counters.
class JsonPoster {
 public:
  JsonPoster(BackendConfig config, std::uint64_t seed)
      : config_(std::move(config)),
        slots_(config_.max_in_flight),
        backoff_(ExponentialBackoff::Duration(config_.backoff_base_s),
                 ExponentialBackoff::Duration(config_.backoff_cap_s), seed) {
    config_.validate();
    split_base_url();
  }

  const BackendConfig& config() const { return config_; }

  json post(const std::string& path, const std::string& body) {
    ++calls_;
    std::string last_error;
    for (int attempt = 0;; ++attempt) {
      double retry_after = 0.0;
      const Outcome outcome = attempt_once(path, body, retry_after);
      if (outcome.kind == Outcome::Kind::ok) return outcome.body;
      if (outcome.kind == Outcome::Kind::fatal) {
        ++failures_;
        throw Error(outcome.code, outcome.message);
      }
      last_error = outcome.message;
      if (attempt >= config_.max_retries) {
        ++failures_;
        throw Error(outcome.code, last_error + " (after " +
                                      std::to_string(attempt) + " retries)");
      }
      ++retries_;
      double wait = backoff_.delay(attempt).count();
      if (retry_after > 0.0) {
        wait = std::min(std::max(wait, retry_after), config_.backoff_cap_s);
      }
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
  }

  BackendStats stats() const {
    BackendStats s;
    s.calls = calls_.load();
    s.retries = retries_.load();
    s.failures = failures_.load();
    return s;
  }

 private:
  struct Outcome {
    enum class Kind { ok, retryable, fatal };
    Kind kind = Kind::ok;
    json body;
    ErrorCode code = ErrorCode::kNetwork;
    std::string message;
  };

  void split_base_url() {
    const std::string& url = config_.base_url;
    const auto scheme_end = url.find("://");
    const auto path_start =
        url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    origin_ = url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  static bool retryable_status(int status) {
    return status == 408 || status == 429 || status >= 500;
  }

  Outcome attempt_once(const std::string& path, const std::string& body,
                       double& retry_after) {
    slots_.acquire();
    httplib::Result result = [&] {
      httplib::Client client(origin_);
      const auto whole = static_cast<time_t>(config_.timeout_s);
      const auto micros = static_cast<time_t>(
          std::llround((config_.timeout_s - static_cast<double>(whole)) * 1e6));
      client.set_connection_timeout(whole, micros);
      client.set_read_timeout(whole, micros);
      client.set_write_timeout(whole, micros);
      httplib::Headers headers;
      if (config_.api_key && !config_.api_key->empty()) {
        headers.emplace("Authorization", "Bearer " + *config_.api_key);
      }
      return client.Post(prefix_ + path, headers, body, "application/json");
    }();
    slots_.release();

    Outcome outcome;
    if (!result) {
      outcome.kind = Outcome::Kind::retryable;
      outcome.code = ErrorCode::kNetwork;
      outcome.message = "POST " + origin_ + prefix_ + path + " failed: " +
                        httplib::to_string(result.error());
      return outcome;
    }
    const int status = result->status;
    if (status < 200 || status >= 300) {
      outcome.kind = retryable_status(status) ? Outcome::Kind::retryable
                                              : Outcome::Kind::fatal;
      outcome.code = ErrorCode::kHttpStatus;
      outcome.message = "HTTP " + std::to_string(status) + ": " +
                        result->body.substr(0, 200);
      if (result->has_header("Retry-After")) {
        const std::string value = result->get_header_value("Retry-After");
        int seconds = 0;
        auto [ptr, ec] =
            std::from_chars(value.data(), value.data() + value.size(), seconds);
        if (ec == std::errc() && seconds > 0) retry_after = seconds;
      }
      return outcome;
    }
    outcome.body = json::parse(result->body, nullptr, false);
    if (outcome.body.is_discarded()) {
      outcome.kind = Outcome::Kind::fatal;
      outcome.code = ErrorCode::kParse;
      outcome.message = "response is not JSON: " + result->body.substr(0, 200);
    }
    return outcome;
  }

  BackendConfig config_;
  std::string origin_;
  std::string prefix_;
  std::counting_semaphore<> slots_;
  ExponentialBackoff backoff_;
  std::atomic<std::uint64_t> calls_{0};
  std::atomic<std::uint64_t> retries_{0};
  std::atomic<std::uint64_t> failures_{0};
};

}  // namespace detail

OpenAiChatClient::OpenAiChatClient(BackendConfig config, std::uint64_t seed)
    : poster_(std::make_unique<detail::JsonPoster>(std::move(config), seed)) {}

OpenAiChatClient::~OpenAiChatClient() = default;

std::string OpenAiChatClient::request_body(const BackendConfig& config,
                                           const ChatRequest& request) {
  nlohmann::ordered_json body;
  body["model"] = config.model;
  auto& messages = body["messages"] = nlohmann::ordered_json::array();
  for (const auto& message : request.messages) {
    nlohmann::ordered_json entry;
    entry["role"] = message.role;
    if (message.image) {
      entry["content"] = nlohmann::ordered_json::array(
          {{{"type", "text"}, {"text", message.text}},
           {{"type", "image_url"},
            {"image_url", {{"url", image_transport_url(*message.image)}}}}});
    } else {
      entry["content"] = message.text;
    }
    messages.push_back(std::move(entry));
  }
  if (request.decoding) {
    const auto& d = *request.decoding;
    body["temperature"] = d.temperature;
    body["top_p"] = d.top_p;
    body["frequency_penalty"] = d.frequency_penalty;
    body["presence_penalty"] = d.presence_penalty;
    body["max_tokens"] = d.max_tokens;
  }
  return body.dump();
}

std::string OpenAiChatClient::complete(const ChatRequest& request) {
  validate_request(request, vision_capable());
  const auto response = poster_->post("/v1/chat/completions",
                                      request_body(poster_->config(), request));
  const auto choices = response.find("choices");
  if (choices == response.end() || !choices->is_array() || choices->empty()) {
    throw Error(ErrorCode::kEmptyChoice, "response has no choices");
  }
  const auto& first = (*choices)[0];
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    throw Error(ErrorCode::kEmptyChoice, "first choice has no text content");
  }
  return first["message"]["content"].get<std::string>();
}

std::string OpenAiChatClient::model() const { return poster_->config().model; }

BackendStats OpenAiChatClient::stats() const { return poster_->stats(); }

OpenAiEmbeddingClient::OpenAiEmbeddingClient(BackendConfig config,
                                             std::uint64_t seed)
    : poster_(std::make_unique<detail::JsonPoster>(std::move(config), seed)) {}

OpenAiEmbeddingClient::~OpenAiEmbeddingClient() = default;

std::vector<EmbeddingVector> OpenAiEmbeddingClient::embed(
    std::span<const std::string> texts) {
  if (texts.empty()) throw Error(ErrorCode::kInvalidArgument, "embed() of no texts");
  nlohmann::ordered_json body;
  body["model"] = poster_->config().model;
  body["input"] = std::vector<std::string>(texts.begin(), texts.end());
  const auto response = poster_->post("/v1/embeddings", body.dump());

  const auto data = response.find("data");
  if (data == response.end() || !data->is_array()) {
    throw Error(ErrorCode::kParse, "embedding response has no data array");
  }
  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
  for (std::size_t i = 0; i < data->size(); ++i) {
    const auto& item = (*data)[i];
    if (!item.contains("embedding") || !item["embedding"].is_array()) {
      throw Error(ErrorCode::kParse, "embedding item without a vector");
    }
    const std::size_t index = item.value("index", i);
    rows.emplace_back(index, item["embedding"].get<std::vector<double>>());
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<EmbeddingVector> out;
  out.reserve(rows.size());
  for (auto& row : rows) out.emplace_back(std::move(row.second));
  check_embedding_batch(out, texts.size());
  return out;
}

std::string OpenAiEmbeddingClient::model() const {
  return poster_->config().model;
}

BackendStats OpenAiEmbeddingClient::stats() const { return poster_->stats(); }

std::string chat(const BackendConfig& config, const ChatRequest& request) {
  if (config.kind != BackendKind::chat) {
    throw Error(ErrorCode::kConfig, "chat() needs a chat backend config");
  }
  return OpenAiChatClient(config).complete(request);
}

std::vector<EmbeddingVector> embed(const BackendConfig& config,
                                   std::span<const std::string> texts) {
  if (config.kind != BackendKind::embedding) {
    throw Error(ErrorCode::kConfig, "embed() needs an embedding backend config");
  }
  return OpenAiEmbeddingClient(config).embed(texts);
}

}  // namespace capvqa
