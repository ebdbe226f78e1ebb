#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace ocpg {

/// Seed for worker `worker_id` of a run seeded with `run_seed`.
constexpr std::uint64_t worker_seed(std::uint64_t run_seed, std::uint64_t worker_id) {
  return run_seed * 10007u + worker_id;
}

/// mt19937_64 with sampling helpers whose output depends only on the
/// engine's bit stream, so sequences are reproducible across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  /// Index drawn from a probability vector (need not be exactly normalised).
  std::size_t categorical(std::span<const double> probs) {
    double total = 0.0;
    for (double p : probs) total += p;
    const double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    // Rounding: fall back to the last index with positive mass.
    for (std::size_t i = probs.size(); i-- > 0;) {
      if (probs[i] > 0.0) return i;
    }
    throw std::invalid_argument("categorical: no positive mass");
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ocpg
