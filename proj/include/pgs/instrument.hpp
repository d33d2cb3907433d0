#pragma once

#include <atomic>
#include <cstdint>

namespace pgs::instrument {

/// Process-wide call counters. Tests use them to prove which code paths ran.
struct Counters {
  std::atomic<std::uint64_t> masker_builds{0};
  std::atomic<std::uint64_t> mapper_calls{0};
  std::atomic<std::uint64_t> estimator_forwards{0};
};

Counters& counters() noexcept;

}  // namespace pgs::instrument
