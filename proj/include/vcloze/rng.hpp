#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace vcloze {

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// FNV-1a, 64 bit.
std::uint64_t hash_string(std::string_view s);

// Seed for an independent substream keyed by an ordered list of labels.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::string_view> keys);

// Seeded generator. The engine is std::mt19937_64 (its output sequence is fixed
// by the standard); bounded and real-valued draws are implemented here rather
// than through <random> distributions, whose algorithms differ between
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  // Uniform on [0, 1) with 53 random bits.
  double uniform01();

  // Standard normal (Box-Muller).
  double normal();

  bool bernoulli(double p) { return uniform01() < p; }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

}  // namespace vcloze
