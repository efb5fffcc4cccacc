#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace advex {

/// Seedable, splittable random stream. Streams derived from the same
/// (master seed, stream id) pair replay identically; the derivation mixes
/// both through SplitMix64 so neighbouring ids give unrelated sequences.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  static Rng stream(std::uint64_t master_seed, std::uint64_t stream_id);

  /// Child stream keyed by id; does not advance this stream.
  Rng split(std::uint64_t id) const { return stream(seed_, id); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  int below(int n);
  /// Inverse-CDF draw from a probability vector.
  int categorical(const Eigen::Ref<const Eigen::VectorXd>& probs);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace advex
