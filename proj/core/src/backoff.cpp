// SPDX-License-Identifier: Apache-2.0
#include "capvqa/backoff.hpp"

#include <algorithm>
#include <cmath>

namespace capvqa {

ExponentialBackoff::ExponentialBackoff(Duration base, Duration cap,
                                       std::uint64_t seed)
    : base_(base), cap_(cap), rng_(seed) {}

ExponentialBackoff::Duration ExponentialBackoff::ceiling(int attempt) const {
  // 2^attempt overflows doubles only far past any cap we would use.
  const double scaled = base_.count() * std::ldexp(1.0, std::min(attempt, 62));
  return Duration(std::min(cap_.count(), scaled));
}

ExponentialBackoff::Duration ExponentialBackoff::delay(int attempt) {
  const double upper = ceiling(attempt).count();
  std::uniform_real_distribution<double> dist(0.0, upper);
  std::lock_guard lock(mutex_);
  return Duration(upper > 0.0 ? dist(rng_) : 0.0);
}

}  // namespace capvqa
