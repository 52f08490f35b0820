#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace tseqgan {

/// Seeded random source shared by sampling, batching and initialization.
///
/// All distributions are derived here from raw 64-bit draws so that the
/// stream is reproducible across standard-library implementations and the
/// full state can be serialized into checkpoints.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream for shard `stream_id` of a run seeded with `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  /// Standard normal (Box-Muller, no cached second variate).
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  /// Index drawn proportionally to non-negative weights.
  std::size_t categorical(std::span<const double> weights);

  std::string state() const;
  void set_state(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace tseqgan
