#pragma once

// Small seeded generators for property tests.

#include <cstdint>
#include <random>
#include <vector>

namespace camel::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return real(0.0, 1.0) < p; }

  template <typename T>
  std::vector<T> vector(std::size_t n, auto&& make) {
    std::vector<T> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(make());
    return out;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Runs `body(gen, case_index)` for `cases` independent seeds.
template <typename Body>
void for_all(int cases, std::uint64_t seed, Body&& body) {
  for (int i = 0; i < cases; ++i) {
    Gen gen(seed * 1'000'003ull + static_cast<std::uint64_t>(i));
    body(gen, i);
  }
}

}  // namespace camel::testing
