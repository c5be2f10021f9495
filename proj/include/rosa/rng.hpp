#pragma once

#include <cstdint>
#include <random>

namespace rosa {

// Seeded pseudo-random source. Every stochastic operation in the library
// takes one of these explicitly so runs are reproducible from a seed.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> dist(mean, stddev);
    return dist(engine_);
  }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(engine_);
  }

  // Independent child stream; the parent advances by one draw.
  SeededRng fork() { return SeededRng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace rosa
