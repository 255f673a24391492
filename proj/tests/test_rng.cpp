#include <doctest.h>

#include <set>
#include <vector>

#include "vcloze/rng.hpp"

using namespace vcloze;

TEST_CASE("same seed gives the same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform_index stays in range and hits every value") {
  Rng rng(1);
  std::set<std::size_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.uniform_index(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("uniform01 lies in [0, 1) with mean near one half") {
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("normal draws have unit variance") {
  Rng rng(5);
  double s = 0.0, ss = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    ss += x * x;
  }
  CHECK(s / n == doctest::Approx(0.0).epsilon(0.02).scale(1.0));
  CHECK(ss / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("derive_seed separates keys and key boundaries") {
  CHECK(derive_seed(7, {"cloze", "r1"}) == derive_seed(7, {"cloze", "r1"}));
  CHECK(derive_seed(7, {"cloze", "r1"}) != derive_seed(8, {"cloze", "r1"}));
  CHECK(derive_seed(7, {"cloze", "r1"}) != derive_seed(7, {"cloze", "r2"}));
  CHECK(derive_seed(7, {"ab", "c"}) != derive_seed(7, {"a", "bc"}));
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(9);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  rng.shuffle(std::span<int>(v));
  std::multiset<int> got(v.begin(), v.end());
  CHECK(got == std::multiset<int>{0, 1, 2, 3, 4, 5, 6, 7});
}
