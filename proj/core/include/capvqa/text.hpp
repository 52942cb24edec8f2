// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace capvqa {

std::string_view trim(std::string_view text);
std::string ascii_lower(std::string_view text);

/// Splits on runs of ASCII whitespace; empty pieces are dropped.
std::vector<std::string> split_whitespace(std::string_view text);

/// Lowercases ASCII letters and splits on every byte that is not an ASCII
/// letter or digit. Bytes >= 0x80 are kept inside tokens so UTF-8 words
/// survive intact.
std::vector<std::string> word_tokens(std::string_view text);

/// 64-bit FNV-1a over the raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

/// A case-folded word set loaded from a one-word-per-line UTF-8 file.
class StopwordList {
 public:
  StopwordList() = default;

  static StopwordList from_file(const std::filesystem::path& path);
  static StopwordList from_text(std::string_view text);

  /// The shipped English list (core/data/stopwords_en.txt).
  static const StopwordList& english();

  bool contains(std::string_view word) const;
  std::size_t size() const { return words_.size(); }

  /// SHA-256 hex of the bytes the list was built from.
  const std::string& checksum() const { return checksum_; }

 private:
  std::unordered_set<std::string> words_;
  std::string checksum_;
};

/// Raw text of the shipped English stopword file.
std::string_view english_stopwords_text();

}  // namespace capvqa
