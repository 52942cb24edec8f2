// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <random>

namespace capvqa {

/// Exponential backoff with full jitter: the delay before retry `attempt`
/// (0-based) is uniform in [0, min(cap, base * 2^attempt)].
class ExponentialBackoff {
 public:
  using Duration = std::chrono::duration<double>;

  ExponentialBackoff(Duration base, Duration cap, std::uint64_t seed);

  Duration ceiling(int attempt) const;
  Duration delay(int attempt);

 private:
  Duration base_;
  Duration cap_;
  std::mutex mutex_;
  std::mt19937_64 rng_;
};

}  // namespace capvqa
