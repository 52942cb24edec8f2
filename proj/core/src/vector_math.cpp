// SPDX-License-Identifier: Apache-2.0
#include "capvqa/vector_math.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "capvqa/error.hpp"

namespace capvqa {

EmbeddingVector::EmbeddingVector(std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "embedding has dimension 0");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, "embedding has a non-finite entry");
    }
  }
}

bool EmbeddingVector::is_zero() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return v == 0.0; });
}

double EmbeddingVector::norm() const {
  double sum = 0.0;
  for (double v : values_) sum += v * v;
  return std::sqrt(sum);
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dim() != v.dim()) {
    throw Error(ErrorCode::kDimMismatch,
                std::to_string(u.dim()) + " vs " + std::to_string(v.dim()));
  }
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  const auto a = u.values();
  const auto b = v.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    uu += a[i] * a[i];
    vv += b[i] * b[i];
  }
  if (uu == 0.0 || vv == 0.0) {
    throw Error(ErrorCode::kZeroVector, "cosine similarity of a zero vector");
  }
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

NearestMatch nearest(const EmbeddingVector& query,
                     std::span<const EmbeddingVector> candidates) {
  if (candidates.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "nearest() over no candidates");
  }
  if (query.is_zero()) {
    throw Error(ErrorCode::kZeroVector, "nearest() query is the zero vector");
  }
  std::optional<NearestMatch> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].dim() != query.dim()) {
      throw Error(ErrorCode::kDimMismatch, "candidate " + std::to_string(i));
    }
    if (candidates[i].is_zero()) continue;
    const double score = cosine_similarity(query, candidates[i]);
    if (!best || score > best->score) best = NearestMatch{i, score};
  }
  if (!best) {
    throw Error(ErrorCode::kAllCandidatesDegenerate,
                "every candidate embedded to the zero vector");
  }
  return *best;
}

}  // namespace capvqa
