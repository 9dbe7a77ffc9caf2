#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace permsens {

struct SeedSpec {
  std::uint64_t base_seed = 0;
  std::uint64_t stream_id = 0;

  /// Child stream for (replication, purpose); distinct pairs never collide
  /// as long as purpose < 2^8.
  SeedSpec child(std::uint64_t replication, std::uint64_t purpose) const {
    return {base_seed, (stream_id << 40) ^ (replication << 8) ^ purpose};
  }
};

/// Philox4x32-10 counter-based generator. The key is the base seed, the upper
/// half of the counter is the stream id, so every (seed, stream) pair indexes
/// an independent sequence that can be reproduced without shared state.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(SeedSpec seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on (0, 1); never returns 0 or 1.
  double uniform();
  /// Standard normal via Box-Muller (one variate per pair of uniforms).
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
};

}  // namespace permsens
