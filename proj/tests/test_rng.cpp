#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "atdn/rng.hpp"

using namespace atdn;

TEST_SUITE("rng") {

TEST_CASE("same seed gives identical streams") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(123), d(124);
  bool differ = false;
  for (int i = 0; i < 10 && !differ; ++i) differ = c.next_u64() != d.next_u64();
  CHECK(differ);
}

TEST_CASE("normal sampler moments") {
  Rng rng(2024);
  const int n = 1'000'000;
  double sum = 0, sum_sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(stddev - 1.0) < 0.01);
}

TEST_CASE("shuffle yields a permutation") {
  Rng rng(5);
  std::vector<int> v(257);
  for (int i = 0; i < 257; ++i) v[i] = i;
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 257; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("below stays in range and covers values") {
  Rng rng(9);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 1000; ++i) {
    const auto x = rng.below(10);
    REQUIRE(x < 10);
    seen[x]++;
  }
  CHECK(*std::min_element(seen.begin(), seen.end()) > 0);
}

}  // TEST_SUITE
