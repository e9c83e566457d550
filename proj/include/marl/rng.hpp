#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace marl {

/// Seeded, splittable random stream.
///
/// Every stochastic draw in the library goes through an Rng. The engine is
/// std::mt19937_64 (whose output sequence is fixed by the standard); uniform,
/// integer and normal variates are derived here rather than through the
/// implementation-defined std distributions so runs are reproducible across
/// standard libraries.
///
/// Splitting: `split(k)` derives a child stream from the *construction seed*
/// and the stream id k via SplitMix64, independent of how many draws the
/// parent has made. Conventions used by the learners:
///   split(1)       environment dynamics
///   split(2 + i)   exploration / action sampling of agent i
///   split(100)     learner-internal randomness (replay sampling, leniency)
///   split(200)     parameter initialisation
///   split(300)     evaluation rollouts
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of precision.
  double uniform();

  /// Uniform integer on [0, n). Throws if n <= 0.
  int uniformInt(int n);

  /// Standard normal (Box-Muller, no cached second variate).
  double normal();

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Sample an index from a probability vector (must sum to ~1).
  int categorical(std::span<const double> probs);

  Rng split(std::uint64_t stream) const;

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace marl
