#pragma once

#include <cstdint>

#include "wpc/numerics.hpp"

namespace wpc {

namespace detail {

// splitmix64 finalizer. Bijective on uint64, so distinct (key, counter)
// pairs never collide within a stream.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

// Derives the seed for one replication from the master seed. Keeping this a
// pure function of (master_seed, replication) is what makes the Monte Carlo
// results independent of thread scheduling.
inline std::uint64_t derive_replication_seed(std::uint64_t master_seed,
                                             std::uint64_t replication) {
  return detail::mix64(detail::mix64(master_seed ^ 0x8e5a4c1d3b2f9071ULL) +
                       replication * detail::kGamma);
}

// Counter-based generator: output k of stream s under key K is
// mix64(h(K, s) + k*gamma). No state beyond the counter, so any draw is
// reproducible from (key, stream, index) alone.
class CounterRng {
 public:
  CounterRng(std::uint64_t key, std::uint64_t stream)
      : base_(detail::mix64(detail::mix64(key ^ 0x6a09e667f3bcc909ULL) +
                            stream * detail::kGamma)) {}

  std::uint64_t next_u64() {
    return detail::mix64(base_ + (++counter_) * detail::kGamma);
  }

  // Uniform on the open interval (0,1): 53-bit mantissa, offset half a step
  // so 0 and 1 are unreachable.
  double uniform() {
    const std::uint64_t bits = next_u64() >> 11;
    return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
  }

  // Standard normal through the inverse CDF; deterministic and
  // platform-independent, unlike rejection samplers.
  double normal() { return inverse_normal_cdf(uniform()); }

 private:
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

}  // namespace wpc
