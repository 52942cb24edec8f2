// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace capvqa {

/// A dense embedding. Entries are finite and the dimension is non-zero; the
/// all-zero vector is representable and signals "no content".
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool is_zero() const;
  double norm() const;

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

/// dot(u, v) / (|u| |v|), clamped to [-1, 1].
/// Throws kDimMismatch or kZeroVector.
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

struct NearestMatch {
  std::size_t index = 0;
  double score = 0.0;
};

/// Highest-cosine candidate; ties go to the lowest index and zero-vector
/// candidates are skipped. Throws kAllCandidatesDegenerate when every
/// candidate is zero, kZeroVector when the query is.
NearestMatch nearest(const EmbeddingVector& query,
                     std::span<const EmbeddingVector> candidates);

}  // namespace capvqa
