// SPDX-License-Identifier: Apache-2.0
#include "capvqa/keywords.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "capvqa/error.hpp"

namespace capvqa {

void NgramRange::validate() const {
  if (lo < 1 || hi < lo || hi > 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "ngram range must satisfy 1 <= lo <= hi <= 3, got (" +
                    std::to_string(lo) + ", " + std::to_string(hi) + ")");
  }
}

void KeywordOptions::validate() const {
  ngrams.validate();
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "keyword k must be >= 1");
  if (mmr_diversity && (*mmr_diversity < 0.0 || *mmr_diversity > 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "mmr_diversity must be in [0, 1]");
  }
}

CandidateSet extract_candidates(std::string_view question, NgramRange range,
                                const StopwordList& stopwords) {
  range.validate();
  const auto tokens = word_tokens(question);
  CandidateSet set;
  set.source_question = std::string(question);
  std::unordered_set<std::string> seen;
  for (std::size_t start = 0; start < tokens.size(); ++start) {
    if (stopwords.contains(tokens[start])) continue;
    for (int n = range.lo; n <= range.hi; ++n) {
      const std::size_t end = start + static_cast<std::size_t>(n);
      if (end > tokens.size()) break;
      if (stopwords.contains(tokens[end - 1])) continue;
      std::string gram = tokens[start];
      for (std::size_t i = start + 1; i < end; ++i) gram += " " + tokens[i];
      if (seen.insert(gram).second) set.candidates.push_back(std::move(gram));
    }
  }
  if (set.candidates.empty()) {
    throw Error(ErrorCode::kEmptyCandidateSet,
                "no keyword candidates in '" + std::string(question) + "'");
  }
  return set;
}

KeywordSet rank_keywords(std::string_view question,
                         const CandidateSet& candidates,
                         EmbeddingBackend& embedder, std::size_t k,
                         std::optional<double> mmr_diversity) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "keyword k must be >= 1");
  if (candidates.candidates.empty()) {
    throw Error(ErrorCode::kEmptyCandidateSet, "rank_keywords() of no candidates");
  }
  std::vector<std::string> texts;
  texts.reserve(candidates.candidates.size() + 1);
  texts.emplace_back(question);
  texts.insert(texts.end(), candidates.candidates.begin(),
               candidates.candidates.end());
  const auto vectors = embedder.embed(texts);
  check_embedding_batch(vectors, texts.size());

  const EmbeddingVector& query = vectors.front();
  if (query.is_zero()) {
    throw Error(ErrorCode::kAllCandidatesDegenerate,
                "question embedded to the zero vector");
  }
  // Indices into `candidates`, restricted to non-degenerate embeddings.
  std::vector<std::size_t> live;
  std::vector<double> scores(candidates.candidates.size(), 0.0);
  for (std::size_t i = 0; i < candidates.candidates.size(); ++i) {
    const auto& v = vectors[i + 1];
    if (v.is_zero()) continue;
    scores[i] = cosine_similarity(query, v);
    live.push_back(i);
  }
  if (live.empty()) {
    throw Error(ErrorCode::kAllCandidatesDegenerate,
                "every keyword candidate embedded to the zero vector");
  }

  std::vector<std::size_t> chosen;
  if (mmr_diversity && live.size() > 1) {
    const double diversity = *mmr_diversity;
    std::vector<std::size_t> pool = live;
    while (!pool.empty() && chosen.size() < k) {
      std::size_t best_pos = 0;
      double best_value = 0.0;
      for (std::size_t p = 0; p < pool.size(); ++p) {
        double redundancy = chosen.empty() ? 0.0 : -1.0;
        for (std::size_t c : chosen) {
          redundancy = std::max(
              redundancy, cosine_similarity(vectors[pool[p] + 1], vectors[c + 1]));
        }
        const double value =
            (1.0 - diversity) * scores[pool[p]] - diversity * redundancy;
        if (p == 0 || value > best_value) {
          best_pos = p;
          best_value = value;
        }
      }
      chosen.push_back(pool[best_pos]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best_pos));
    }
  } else {
    chosen = live;
  }

  std::stable_sort(chosen.begin(), chosen.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (scores[a] != scores[b]) return scores[a] > scores[b];
                     return a < b;
                   });
  if (chosen.size() > k) chosen.resize(k);

  KeywordSet out;
  out.k = k;
  for (std::size_t i : chosen) {
    out.keywords.push_back({candidates.candidates[i], scores[i]});
  }
  return out;
}

KeywordSet extract_keywords(std::string_view question,
                            const KeywordOptions& options,
                            const StopwordList& stopwords,
                            EmbeddingBackend& embedder) {
  options.validate();
  const auto candidates = extract_candidates(question, options.ngrams, stopwords);
  return rank_keywords(question, candidates, embedder, options.k,
                       options.mmr_diversity);
}

std::string format_keywords(const KeywordSet& keywords) {
  std::string out;
  for (std::size_t i = 0; i < keywords.keywords.size(); ++i) {
    if (i > 0) out += ", ";
    out += keywords.keywords[i].term;
  }
  return out;
}

}  // namespace capvqa
