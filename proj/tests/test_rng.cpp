#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "mlquant/rng.hpp"

using namespace mlquant;

TEST_CASE("rng streams are deterministic and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    std::uint64_t va = a.next_u64();
    REQUIRE(va == b.next_u64());
  }
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 10; ++i) differs |= a2.next_u64() != c.next_u64();
  REQUIRE(differs);
}

TEST_CASE("substreams with different names do not collide") {
  Rng a = substream(7, "split");
  Rng b = substream(7, "sample");
  bool differs = false;
  for (int i = 0; i < 10; ++i) differs |= a.next_u64() != b.next_u64();
  REQUIRE(differs);
  REQUIRE(derive_seed(7, "x") == derive_seed(7, "x"));
  REQUIRE(derive_seed(7, "x") != derive_seed(8, "x"));
}

TEST_CASE("next_double stays in the unit interval") {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    double v = r.next_double();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("below and uniform_int respect bounds") {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(r.below(7) < 7);
    int v = r.uniform_int(-2, 4);
    REQUIRE(v >= -2);
    REQUIRE(v <= 4);
  }
}

TEST_CASE("shuffle permutes without loss") {
  Rng r(5);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> orig = v;
  r.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(sorted == orig);
}

TEST_CASE("sample_without_replacement yields unique in-range draws") {
  Rng r(9);
  std::vector<int> s = r.sample_without_replacement(50, 20);
  REQUIRE(s.size() == 20);
  std::set<int> uniq(s.begin(), s.end());
  REQUIRE(uniq.size() == 20);
  for (int v : s) {
    REQUIRE(v >= 0);
    REQUIRE(v < 50);
  }
  std::vector<int> all = Rng(11).sample_without_replacement(8, 8);
  std::sort(all.begin(), all.end());
  REQUIRE(all == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("normal draws have roughly standard moments") {
  Rng r(13);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double v = r.next_normal();
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.05);
  REQUIRE(std::abs(var - 1.0) < 0.1);
}
