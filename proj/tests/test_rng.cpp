#include <doctest.h>

#include <cmath>
#include <vector>

#include "cgpnas/rng.hpp"

using namespace cgpnas;

TEST_CASE("identical seeds give identical streams") {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c(43);
  bool all_equal = true;
  RngStream a2(42);
  for (int i = 0; i < 16; ++i) all_equal &= (a2.next_u64() == c.next_u64());
  CHECK_FALSE(all_equal);
}

TEST_CASE("uniform_index stays in range and covers it") {
  RngStream r(7);
  std::vector<int> hits(13, 0);
  for (int i = 0; i < 13000; ++i) {
    const std::size_t v = r.uniform_index(13);
    REQUIRE(v < 13);
    ++hits[v];
  }
  // Each bucket expects 1000 draws; 6 sigma is about 190.
  for (int h : hits) CHECK(std::abs(h - 1000) < 200);
  CHECK_THROWS_AS(r.uniform_index(0), std::invalid_argument);
}

TEST_CASE("uniform_real covers [0,1)") {
  RngStream r(11);
  double lo = 1.0, hi = 0.0, mean = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = r.uniform_real();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mean += v;
  }
  mean /= n;
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal draws match the first two moments") {
  RngStream r(3);
  const int n = 100000;
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    mean += v;
    m2 += v * v;
  }
  mean /= n;
  m2 /= n;
  CHECK(mean == doctest::Approx(0.0).epsilon(0.02));
  CHECK(std::abs(mean) < 0.02);
  CHECK(m2 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("derived streams are independent and reproducible") {
  RngStream a = RngStream::derive(99, 3, 1);
  RngStream b = RngStream::derive(99, 3, 1);
  RngStream c = RngStream::derive(99, 3, 2);
  RngStream d = RngStream::derive(99, 4, 1);
  CHECK(a == b);
  CHECK(a.next_u64() == b.next_u64());
  CHECK_FALSE(a == c);
  CHECK_FALSE(c == d);
}

TEST_CASE("serialization round-trips mid-stream state") {
  RngStream r(5);
  for (int i = 0; i < 77; ++i) r.next_u64();
  RngStream copy = RngStream::deserialize(r.serialize());
  CHECK(copy == r);
  for (int i = 0; i < 100; ++i) CHECK(copy.next_u64() == r.next_u64());
  CHECK_THROWS_AS(RngStream::deserialize("not digits"), std::invalid_argument);
}
