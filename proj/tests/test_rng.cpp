#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "clab/rng.hpp"

using clab::mix_seed;
using clab::Rng;

TEST_CASE("same seed, same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(42), d(43);
  int diff = 0;
  for (int i = 0; i < 10; ++i) diff += c.uniform() != d.uniform();
  CHECK(diff > 0);
}

TEST_CASE("mix_seed separates streams") {
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(1, 3));
  CHECK(mix_seed(1, 2) != mix_seed(2, 2));
  CHECK(mix_seed(7, 1, 2) != mix_seed(7, 2, 1));
  CHECK(mix_seed(7, 1, 2, 3) != mix_seed(7, 1, 2, 4));
}

TEST_CASE("uniform range and coverage") {
  Rng r(123);
  double lo = 1.0, hi = 0.0, acc = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double v = r.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    acc += v;
  }
  CHECK(acc / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);

  for (int i = 0; i < 1000; ++i) {
    double v = r.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
  }
}

TEST_CASE("uniform_index hits every bucket without bias") {
  Rng r(7);
  std::vector<int> counts(5, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[r.uniform_index(5)];
  for (int c : counts) {
    CHECK(c > n / 5 - 600);
    CHECK(c < n / 5 + 600);
  }
  CHECK_THROWS_AS(r.uniform_index(0), std::invalid_argument);
}

TEST_CASE("uniform_int covers inclusive bounds") {
  Rng r(9);
  std::set<int> seen;
  for (int i = 0; i < 200; ++i) seen.insert(r.uniform_int(-1, 2));
  CHECK(seen == std::set<int>{-1, 0, 1, 2});
}

TEST_CASE("normal moments") {
  Rng r(99);
  const int n = 40000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = r.normal();
    acc += v;
    acc2 += v * v;
  }
  double mean = acc / n;
  double var = acc2 / n - mean * mean;
  CHECK(std::fabs(mean) < 0.02);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("bernoulli frequency") {
  Rng r(5);
  int hits = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) hits += r.bernoulli(0.3);
  CHECK(static_cast<double>(hits) / n == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("shuffle permutes deterministically") {
  std::vector<int> v(20);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng a(11), b(11);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> id(20);
  std::iota(id.begin(), id.end(), 0);
  CHECK(sorted == id);
  CHECK(v != id);  // 20!/1 odds say so
}

TEST_CASE("state round-trips through the string form") {
  Rng r(77);
  r.normal();  // leaves a cached spare behind
  std::string s = r.state_str();
  std::vector<double> first;
  for (int i = 0; i < 10; ++i) first.push_back(r.normal());
  r.set_state_str(s);
  for (int i = 0; i < 10; ++i) CHECK(r.normal() == first[i]);

  Rng fresh(1);
  fresh.set_state_str(s);  // state transplants across instances
  for (int i = 0; i < 10; ++i) CHECK(fresh.normal() == first[i]);
  CHECK_THROWS_AS(fresh.set_state_str("not a state"), std::runtime_error);
}
