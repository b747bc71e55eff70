#include <catch2/catch_amalgamated.hpp>

#include "coreset/rng.hpp"

using namespace coreset;

TEST_CASE("same seed reproduces the stream bit for bit", "[rng]") {
  Rng a(12345), b(12345);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("child streams are independent of consumption order", "[rng]") {
  Rng root(7);
  Rng c1 = root.child(1);
  Rng c2 = root.child(2);
  const double v1 = c1.uniform();
  Rng c1_again = Rng(7).child(1);
  REQUIRE(c1_again.uniform() == v1);
  REQUIRE(c1.seed() != c2.seed());
}

TEST_CASE("uniforms live in their intervals", "[rng]") {
  Rng r(99);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double v = r.uniform_open();
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
    sum += u;
  }
  REQUIRE(std::abs(sum / 100000 - 0.5) < 0.005);
}

TEST_CASE("categorical draws respect the cdf", "[rng]") {
  Rng r(5);
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  const auto cdf = inclusive_prefix_sums(p);
  std::array<int, 4> counts{0, 0, 0, 0};
  const int draws = 200000;
  for (int i = 0; i < draws; ++i)
    counts[r.categorical_from_cdf(cdf)]++;
  for (int k = 0; k < 4; ++k) {
    const double freq = static_cast<double>(counts[static_cast<std::size_t>(k)]) / draws;
    REQUIRE(std::abs(freq - p[static_cast<std::size_t>(k)]) < 0.01);
  }
}

TEST_CASE("normal draws have the right moments", "[rng]") {
  Rng r(31);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  REQUIRE(std::abs(s / n) < 0.01);
  REQUIRE(std::abs(s2 / n - 1.0) < 0.02);
}
