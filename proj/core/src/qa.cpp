// SPDX-License-Identifier: Apache-2.0
#include "capvqa/qa.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "capvqa/error.hpp"
#include "capvqa/text.hpp"

namespace capvqa {
namespace {

constexpr std::string_view kQaInstruction =
    "Answer the question in a maximum of two words based on the text. "
    "Consider the type of question in your answer. For example, if it is a "
    "yes/no question, the answer should be yes or no. ";

void append_utf8(std::string& out, UChar32 c) {
  char buffer[U8_MAX_LENGTH];
  int32_t length = 0;
  U8_APPEND_UNSAFE(buffer, length, c);
  out.append(buffer, static_cast<std::size_t>(length));
}

}  // namespace

std::string_view to_string(ContextKind kind) {
  switch (kind) {
    case ContextKind::general_caption: return "general_caption";
    case ContextKind::qd_caption: return "qd_caption";
    case ContextKind::relevant_sentence: return "relevant_sentence";
  }
  return "?";
}

ContextKind parse_context_kind(std::string_view text) {
  if (text == "general_caption" || text == "general") return ContextKind::general_caption;
  if (text == "qd_caption" || text == "qd") return ContextKind::qd_caption;
  if (text == "relevant_sentence" || text == "sentence") {
    return ContextKind::relevant_sentence;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown context kind '" + std::string(text) + "'");
}

std::string build_qa_prompt(std::string_view context_text,
                            std::string_view question) {
  if (trim(context_text).empty()) {
    throw Error(ErrorCode::kEmptyContext, "answer prompt needs context text");
  }
  if (trim(question).empty()) {
    throw Error(ErrorCode::kEmptyQuestion, "answer prompt needs a question");
  }
  std::string prompt(kQaInstruction);
  prompt += "Text: ";
  prompt += context_text;
  prompt += ", Question: ";
  prompt += question;
  return prompt;
}

std::string generate_answer(ChatBackend& backend, const std::string& prompt,
                            const DecodingParams& decoding) {
  decoding.validate();
  return backend.complete(ChatRequest::user(prompt, std::nullopt, decoding));
}

std::string normalize_answer(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  const auto* bytes = reinterpret_cast<const uint8_t*>(raw.data());
  const auto length = static_cast<int32_t>(raw.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) {
      // Ill-formed bytes pass through untouched.
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.append(raw.substr(static_cast<std::size_t>(start),
                            static_cast<std::size_t>(i - start)));
      continue;
    }
    if (u_ispunct(c)) continue;
    if (u_isUWhiteSpace(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    append_utf8(out, u_tolower(c));
  }
  return out;
}

bool detect_unanswerable(std::string_view normalized) {
  return normalized.find("not mentioned") != std::string_view::npos ||
         normalized.find("not visible") != std::string_view::npos;
}

std::size_t word_count(std::string_view text) {
  return split_whitespace(text).size();
}

AnswerRecord make_answer_record(std::string question_id, ContextKind kind,
                                std::string prompt, std::string raw_answer) {
  AnswerRecord record;
  record.question_id = std::move(question_id);
  record.context_kind = kind;
  record.prompt = std::move(prompt);
  record.raw_answer = std::move(raw_answer);
  record.normalized_answer = normalize_answer(record.raw_answer);
  record.over_length = word_count(record.normalized_answer) > kMaxAnswerWords;
  record.unanswerable = detect_unanswerable(record.normalized_answer);
  return record;
}

AnswerRecord make_failed_answer(std::string question_id, ContextKind kind,
                                std::string prompt, std::string error) {
  AnswerRecord record;
  record.question_id = std::move(question_id);
  record.context_kind = kind;
  record.prompt = std::move(prompt);
  record.error = std::move(error);
  return record;
}

}  // namespace capvqa
