#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace condex {

/// Counter-based generator: output i of stream (seed, stream) is a pure
/// function of (seed, stream, i), so results never depend on call order
/// across independent streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(mix(seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1)))) {}

  std::uint64_t next_u64() noexcept { return mix(key_ + 0xD1B54A32D192ED03ULL * counter_++); }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }
  double normal() noexcept;
  double exponential() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  Eigen::VectorXd normal_vector(Eigen::Index n);

  /// Derives an independent generator; used to give each work item its own stream.
  Rng split(std::uint64_t stream) const noexcept { return Rng(key_, stream); }

 private:
  static std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace condex
