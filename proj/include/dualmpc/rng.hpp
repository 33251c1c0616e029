#pragma once

#include <array>
#include <cstdint>

#include "dualmpc/common.hpp"

namespace dualmpc {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based random stream. The seed forms the Philox key, the stream id
/// occupies the upper two counter words and the lower two count blocks, so
/// draws never depend on how many other streams exist.
class Rng {
 public:
  Rng() : Rng(0, 0) {}
  Rng(std::uint64_t seed, std::uint64_t stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  Vec normal_vec(Eigen::Index n);

  /// Independent child stream derived from this stream's seed and id.
  Rng split(std::uint64_t tag) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stream for trial `index` of a benchmark with master seed `master`.
Rng trial_rng(std::uint64_t master, std::uint64_t index, std::uint64_t purpose);

}  // namespace dualmpc
