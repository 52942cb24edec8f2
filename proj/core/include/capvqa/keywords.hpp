// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capvqa/backends.hpp"
#include "capvqa/text.hpp"

namespace capvqa {

struct NgramRange {
  int lo = 1;
  int hi = 1;

  void validate() const;
  bool operator==(const NgramRange&) const = default;
};

/// Lowercase n-grams of a question, unique, in order of first occurrence.
struct CandidateSet {
  std::vector<std::string> candidates;
  std::string source_question;
};

struct ScoredKeyword {
  std::string term;
  double score = 0.0;

  bool operator==(const ScoredKeyword&) const = default;
};

/// Best keywords first; equal scores keep question order.
struct KeywordSet {
  std::vector<ScoredKeyword> keywords;
  std::size_t k = 0;

  bool empty() const { return keywords.empty(); }
  bool operator==(const KeywordSet&) const = default;
};

struct KeywordOptions {
  NgramRange ngrams;
  std::size_t k = 5;
  /// Maximal-marginal-relevance diversity in [0, 1]; unset means plain
  /// cosine ranking.
  std::optional<double> mmr_diversity;

  void validate() const;
};

/// Enumerates n-grams (lo <= n <= hi) over word_tokens(question) that
/// neither start nor end with a stopword. Throws kEmptyCandidateSet when
/// nothing survives.
CandidateSet extract_candidates(std::string_view question, NgramRange range,
                                const StopwordList& stopwords);

/// Embeds the question together with every candidate in one batch and keeps
/// the k candidates closest to the question. Zero-vector candidates are
/// skipped; if none remain, throws kAllCandidatesDegenerate.
KeywordSet rank_keywords(std::string_view question,
                         const CandidateSet& candidates,
                         EmbeddingBackend& embedder, std::size_t k,
                         std::optional<double> mmr_diversity = std::nullopt);

/// extract_candidates followed by rank_keywords.
KeywordSet extract_keywords(std::string_view question,
                            const KeywordOptions& options,
                            const StopwordList& stopwords,
                            EmbeddingBackend& embedder);

/// Terms joined by ", " in rank order.
std::string format_keywords(const KeywordSet& keywords);

}  // namespace capvqa
