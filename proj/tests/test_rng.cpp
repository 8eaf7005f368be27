#include <doctest.h>

#include <cmath>

#include "metavi/rng.hpp"

using namespace metavi;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("named substreams are distinct and reproducible") {
  Rng a = Rng::substream(1, "data");
  Rng b = Rng::substream(1, "data");
  Rng c = Rng::substream(1, "training");
  Rng d = Rng::substream(1, "data", 1);
  CHECK(a.next() == b.next());
  CHECK(Rng::substream(1, "data").next() != c.next());
  CHECK(Rng::substream(1, "data").next() != d.next());
  CHECK(Rng::derive(1, "eval") == Rng::derive(1, "eval"));
  CHECK(Rng::derive(1, "eval") != Rng::derive(2, "eval"));
  CHECK(Rng::derive(1, "eval", 0) != Rng::derive(1, "eval", 1));
}

TEST_CASE("uniform stays in [0,1) and has the right mean") {
  Rng rng(9);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal has standard moments") {
  Rng rng(10);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    s1 += z;
    s2 += z * z;
  }
  double mean = s1 / n;
  double var = s2 / n - mean * mean;
  CHECK(std::fabs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("below(n) covers [0, n)") {
  Rng rng(11);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    std::uint64_t v = rng.below(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) CHECK(c > 8000);  // roughly uniform
}
