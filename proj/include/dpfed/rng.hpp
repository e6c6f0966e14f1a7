#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>

namespace dpfed {

/// Mixes a list of counters into one 64-bit key (splitmix64 finaliser
/// chained over the inputs).
std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts);

/// Stream tags keep independent consumers of the same seed apart.
enum class StreamTag : std::uint64_t {
  DpNoise = 1,
  Synthetic = 2,
  Shuffle = 3,
  Validation = 4,
};

/// Deterministic random stream keyed by (tag, seed, a, b).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Uniform, Laplace and normal variates are derived here rather
/// than through <random> distributions, whose algorithms are
/// implementation-defined, so streams are portable across toolchains.
class RandomStream {
 public:
  RandomStream(StreamTag tag, std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform();

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  /// Laplace(0, scale) by inverse CDF.
  double laplace(double scale);

  /// Standard normal by Box-Muller; the second value of each pair is cached.
  double normal();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// Stream for the DP noise of one client in one global iteration.
inline RandomStream noise_stream(std::uint64_t seed, std::uint64_t round, std::uint64_t client) {
  return RandomStream(StreamTag::DpNoise, seed, round, client);
}

}  // namespace dpfed
