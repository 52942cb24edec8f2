// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capvqa/backends.hpp"

namespace capvqa {

enum class CaptionMode { general, question_driven };

std::string_view to_string(CaptionMode mode);
CaptionMode parse_caption_mode(std::string_view text);

inline constexpr std::string_view kGeneralCaptionPrompt =
    "Describe the scene in this image";

/// general -> "Describe the scene in this image";
/// question_driven -> "Describe the scene in this image. Consider the
/// keywords: {keywords}". Throws kMissingKeywords when question_driven has
/// no (or empty) keywords, kInvalidArgument when general is given some.
std::string build_caption_prompt(
    CaptionMode mode, std::optional<std::string_view> keywords = std::nullopt);

struct CaptionRecord {
  std::string image_id;
  CaptionMode mode = CaptionMode::general;
  std::optional<std::string> keywords;
  std::string prompt;
  std::string caption;
  std::string backend_model;
  std::string created_at;
};

CaptionRecord caption_image(ChatBackend& backend, const ImageRef& image,
                            CaptionMode mode,
                            std::optional<std::string> keywords = std::nullopt,
                            std::optional<DecodingParams> decoding = std::nullopt);

/// Splits after '.', '!' or '?' when followed by whitespace or the end of
/// the text. Pieces are trimmed and empties dropped.
std::vector<std::string> split_sentences(std::string_view text);

struct SentenceChoice {
  std::string sentence;
  std::size_t index = 0;
  /// Unset when the caption had a single sentence and nothing was embedded.
  std::optional<double> score;
};

SentenceChoice select_relevant_sentence(std::string_view caption,
                                        std::string_view question,
                                        EmbeddingBackend& embedder);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace capvqa
