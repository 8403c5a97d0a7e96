#include <catch2/catch_amalgamated.hpp>

#include "aina/crc32.hpp"
#include "aina/rng.hpp"

using aina::Rng;

TEST_CASE("rng is deterministic per seed") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) differs |= a2.next_u64() != c.next_u64();
  REQUIRE(differs);
}

TEST_CASE("uniform stays in range and fills it") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  REQUIRE(lo < 0.01);
  REQUIRE(hi > 0.99);
}

TEST_CASE("normal moments are sane") {
  Rng rng(11);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  REQUIRE(std::abs(sum / n) < 0.02);
  REQUIRE(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("clipped normal honors the bound") {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.clipped_normal(0.01, 0.02);
    REQUIRE(std::abs(v) <= 0.02);
  }
}

TEST_CASE("below is unbiased enough and in range") {
  Rng rng(5);
  int counts[7] = {};
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
  for (int c : counts) REQUIRE(std::abs(c - 10000) < 500);
}

TEST_CASE("derive gives order-independent streams") {
  const uint64_t a = Rng::derive(9, 1, 2);
  const uint64_t b = Rng::derive(9, 2, 1);
  REQUIRE(a != b);
  REQUIRE(Rng::derive(9, 1, 2) == a);
}

TEST_CASE("crc32 matches the reference vector") {
  const char* s = "123456789";
  REQUIRE(aina::crc32(s, 9) == 0xcbf43926u);
}
