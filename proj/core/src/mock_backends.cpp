// SPDX-License-Identifier: Apache-2.0
#include "capvqa/mock_backends.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "capvqa/error.hpp"
#include "capvqa/hashing.hpp"
#include "capvqa/text.hpp"
#include "json.hpp"

namespace capvqa {

EmbeddingVector mock_embed(std::string_view text, std::size_t dim) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "mock_embed dim must be > 0");
  std::vector<double> values(dim, 0.0);
  const StopwordList& stopwords = StopwordList::english();
  bool any = false;
  for (const auto& token : word_tokens(text)) {
    if (stopwords.contains(token)) continue;
    values[fnv1a64(token) % dim] += 1.0;
    any = true;
  }
  if (any) {
    double sum = 0.0;
    for (double v : values) sum += v * v;
    const double norm = std::sqrt(sum);
    for (double& v : values) v /= norm;
  }
  return EmbeddingVector(std::move(values));
}

MockEmbeddingBackend::MockEmbeddingBackend(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::kConfig, "mock embedder dim must be > 0");
}

std::vector<EmbeddingVector> MockEmbeddingBackend::embed(
    std::span<const std::string> texts) {
  if (texts.empty()) throw Error(ErrorCode::kInvalidArgument, "embed() of no texts");
  ++calls_;
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) out.push_back(mock_embed(text, dim_));
  return out;
}

std::string MockEmbeddingBackend::model() const {
  return "mock-embed-fnv1a-" + std::to_string(dim_);
}

BackendStats MockEmbeddingBackend::stats() const {
  BackendStats s;
  s.calls = calls_.load();
  return s;
}

ScriptFallback ScriptFallback::parse(std::string_view spec) {
  if (spec == "echo-last-user-word") return {Mode::echo_last_user_word, {}};
  constexpr std::string_view kFixed = "fixed:";
  if (spec.substr(0, kFixed.size()) == kFixed) {
    return {Mode::fixed, std::string(spec.substr(kFixed.size()))};
  }
  throw Error(ErrorCode::kConfig, "unknown fallback mode '" + std::string(spec) + "'");
}

std::string ScriptFallback::to_string() const {
  return mode == Mode::fixed ? "fixed:" + text : "echo-last-user-word";
}

ScriptedChatBackend::ScriptedChatBackend(
    std::map<std::string, std::string> responses, ScriptFallback fallback,
    std::string model)
    : responses_(std::move(responses)),
      fallback_(std::move(fallback)),
      model_(std::move(model)) {}

std::unique_ptr<ScriptedChatBackend> ScriptedChatBackend::from_file(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open mock script " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  auto root = nlohmann::json::parse(buffer.str(), nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error(ErrorCode::kParse, "mock script " + path.string() + " is not a JSON object");
  }
  std::map<std::string, std::string> responses;
  if (auto it = root.find("responses"); it != root.end()) {
    if (!it->is_object()) {
      throw Error(ErrorCode::kParse, "mock script 'responses' must be an object");
    }
    for (const auto& [hash, text] : it->items()) {
      if (!text.is_string()) {
        throw Error(ErrorCode::kParse, "mock response for " + hash + " is not a string");
      }
      responses.emplace(hash, text.get<std::string>());
    }
  }
  ScriptFallback fallback =
      ScriptFallback::parse(root.value("fallback", std::string("echo-last-user-word")));
  return std::make_unique<ScriptedChatBackend>(std::move(responses), std::move(fallback),
                                               root.value("model", std::string("scripted-mock")));
}

std::string ScriptedChatBackend::complete(const ChatRequest& request) {
  validate_request(request, vision_capable());
  ++calls_;
  const std::string key = sha256_hex(render_prompt(request));
  if (auto it = responses_.find(key); it != responses_.end()) return it->second;
  ++fallbacks_;
  if (fallback_.mode == ScriptFallback::Mode::fixed) return fallback_.text;
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role != "user") continue;
    const auto words = split_whitespace(it->text);
    return words.empty() ? std::string() : words.back();
  }
  return {};
}

BackendStats ScriptedChatBackend::stats() const {
  BackendStats s;
  s.calls = calls_.load();
  return s;
}

}  // namespace capvqa
