// SPDX-License-Identifier: Apache-2.0
#include "capvqa/captioning.hpp"

#include <chrono>
#include <ctime>

#include "capvqa/error.hpp"
#include "capvqa/text.hpp"

namespace capvqa {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::string_view to_string(CaptionMode mode) {
  return mode == CaptionMode::general ? "general" : "question_driven";
}

CaptionMode parse_caption_mode(std::string_view text) {
  if (text == "general") return CaptionMode::general;
  if (text == "question_driven") return CaptionMode::question_driven;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown caption mode '" + std::string(text) + "'");
}

std::string build_caption_prompt(CaptionMode mode,
                                 std::optional<std::string_view> keywords) {
  if (mode == CaptionMode::general) {
    if (keywords) {
      throw Error(ErrorCode::kInvalidArgument,
                  "general captions take no keywords");
    }
    return std::string(kGeneralCaptionPrompt);
  }
  if (!keywords || trim(*keywords).empty()) {
    throw Error(ErrorCode::kMissingKeywords,
                "question-driven caption prompt needs keywords");
  }
  std::string prompt(kGeneralCaptionPrompt);
  prompt += ". Consider the keywords: ";
  prompt += *keywords;
  return prompt;
}

CaptionRecord caption_image(ChatBackend& backend, const ImageRef& image,
                            CaptionMode mode, std::optional<std::string> keywords,
                            std::optional<DecodingParams> decoding) {
  CaptionRecord record;
  record.image_id = image.id;
  record.mode = mode;
  record.prompt = build_caption_prompt(
      mode, keywords ? std::optional<std::string_view>(*keywords) : std::nullopt);
  record.keywords = std::move(keywords);
  check_image_readable(image);

  const std::string raw =
      backend.complete(ChatRequest::user(record.prompt, image, decoding));
  record.caption = std::string(trim(raw));
  if (record.caption.empty()) {
    throw Error(ErrorCode::kEmptyCaption, "empty caption for image '" + image.id + "'");
  }
  record.backend_model = backend.model();
  record.created_at = utc_timestamp();
  return record;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    std::string_view piece = trim(text.substr(start, end - start));
    if (!piece.empty()) out.emplace_back(piece);
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    if (i + 1 == text.size() || is_space(text[i + 1])) flush(i + 1);
  }
  flush(text.size());
  return out;
}

SentenceChoice select_relevant_sentence(std::string_view caption,
                                        std::string_view question,
                                        EmbeddingBackend& embedder) {
  auto sentences = split_sentences(caption);
  if (sentences.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "caption has no sentences");
  }
  if (sentences.size() == 1) return {std::move(sentences.front()), 0, std::nullopt};

  std::vector<std::string> texts;
  texts.reserve(sentences.size() + 1);
  texts.emplace_back(question);
  texts.insert(texts.end(), sentences.begin(), sentences.end());
  const auto vectors = embedder.embed(texts);
  check_embedding_batch(vectors, texts.size());
  if (vectors.front().is_zero()) {
    throw Error(ErrorCode::kAllCandidatesDegenerate,
                "question embedded to the zero vector");
  }
  const auto match = nearest(vectors.front(),
                             std::span<const EmbeddingVector>(vectors).subspan(1));
  return {std::move(sentences[match.index]), match.index, match.score};
}

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

}  // namespace capvqa
