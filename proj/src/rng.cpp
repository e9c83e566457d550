#include "marl/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace marl {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

int Rng::uniformInt(int n) {
  if (n <= 0) {
    throw std::invalid_argument("Rng::uniformInt: n must be positive");
  }
  const auto range = static_cast<std::uint64_t>(n);
  // rejection sampling keeps the draw exactly uniform
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % range);
  std::uint64_t x = engine_();
  while (x >= limit) {
    x = engine_();
  }
  return static_cast<int>(x % range);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::categorical(std::span<const double> probs) {
  if (probs.empty()) {
    throw std::invalid_argument("Rng::categorical: empty distribution");
  }
  const double u = uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) {
      return static_cast<int>(i);
    }
  }
  // rounding slack: return the last index with positive mass
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) {
      return static_cast<int>(i);
    }
  }
  return static_cast<int>(probs.size()) - 1;
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632BE59BD9B4E019ULL)));
}

} // namespace marl
