// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "capvqa/backends.hpp"

namespace capvqa {

enum class ContextKind { general_caption, qd_caption, relevant_sentence };

std::string_view to_string(ContextKind kind);
ContextKind parse_context_kind(std::string_view text);

inline constexpr std::size_t kMaxAnswerWords = 2;

/// The answering instruction with context and question substituted
/// verbatim. Throws kEmptyContext / kEmptyQuestion on blank inputs.
std::string build_qa_prompt(std::string_view context_text,
                            std::string_view question);

/// Sends the prompt as a single user message with the given decoding.
std::string generate_answer(ChatBackend& backend, const std::string& prompt,
                            const DecodingParams& decoding = {});

/// Drops Unicode punctuation (general category P*), lowercases, collapses
/// whitespace runs to one space and trims.
std::string normalize_answer(std::string_view raw);

/// True iff the normalized answer contains "not mentioned" or "not visible".
bool detect_unanswerable(std::string_view normalized);

std::size_t word_count(std::string_view text);

struct AnswerRecord {
  std::string question_id;
  ContextKind context_kind = ContextKind::general_caption;
  std::string prompt;
  std::string raw_answer;
  std::string normalized_answer;
  bool over_length = false;
  bool unanswerable = false;
  /// Set when no answer could be produced; such records count as incorrect.
  std::optional<std::string> error;

  bool operator==(const AnswerRecord&) const = default;
};

/// Fills the derived fields from raw_answer.
AnswerRecord make_answer_record(std::string question_id, ContextKind kind,
                                std::string prompt, std::string raw_answer);

AnswerRecord make_failed_answer(std::string question_id, ContextKind kind,
                                std::string prompt, std::string error);

}  // namespace capvqa
