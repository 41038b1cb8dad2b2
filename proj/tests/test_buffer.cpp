#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "clab/buffer.hpp"
#include "clab/tensor.hpp"

using clab::ReplayBuffer;
using clab::ReplayItem;
using clab::Tensor;

namespace {

Tensor tagged_image(std::size_t tag) { return Tensor::full({1, 1}, double(tag)); }

void offer_stream(ReplayBuffer& buf, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) buf.insert(tagged_image(i), i);
}

}  // namespace

TEST_CASE("buffer keeps everything until capacity") {
  ReplayBuffer buf(10, 1);
  offer_stream(buf, 10);
  REQUIRE(buf.size() == 10);
  CHECK(buf.seen_count() == 10);
  std::set<std::size_t> labels;
  for (const ReplayItem& item : buf.entries()) labels.insert(item.label);
  CHECK(labels.size() == 10);
  CHECK(*labels.begin() == 0);
  CHECK(*labels.rbegin() == 9);
}

TEST_CASE("buffer counts every offer and never exceeds capacity") {
  ReplayBuffer buf(20, 2);
  offer_stream(buf, 1000);
  CHECK(buf.seen_count() == 1000);
  CHECK(buf.size() == 20);
}

TEST_CASE("buffer construction requires positive capacity") {
  CHECK_THROWS_AS(ReplayBuffer(0, 1), std::invalid_argument);
}

TEST_CASE("buffer content is a pure function of offers and seed") {
  ReplayBuffer a(20, 5);
  ReplayBuffer b(20, 5);
  offer_stream(a, 500);
  offer_stream(b, 500);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.entries()[i].label == b.entries()[i].label);
  }

  ReplayBuffer c(20, 6);
  offer_stream(c, 500);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    differs = differs || a.entries()[i].label != c.entries()[i].label;
  }
  CHECK(differs);
}

TEST_CASE("reservoir inclusion frequency approaches capacity over seen") {
  const std::size_t capacity = 20, stream = 1000, trials = 5000;
  std::vector<std::size_t> included(stream, 0);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    ReplayBuffer buf(capacity, 1000 + trial);
    offer_stream(buf, stream);
    for (const ReplayItem& item : buf.entries()) ++included[item.label];
  }
  for (std::size_t i = 0; i < stream; ++i) {
    const double freq = double(included[i]) / double(trials);
    CHECK(freq > 0.01);
    CHECK(freq < 0.03);
  }
}

TEST_CASE("sampling without replacement at full size is a permutation") {
  ReplayBuffer buf(16, 7);
  offer_stream(buf, 16);
  const auto batch = buf.sample_batch(16, 99);
  REQUIRE(batch.size() == 16);
  std::set<std::size_t> labels;
  for (const ReplayItem& item : batch) labels.insert(item.label);
  CHECK(labels.size() == 16);
}

TEST_CASE("sampling is deterministic per seed and leaves the buffer untouched") {
  ReplayBuffer buf(16, 7);
  offer_stream(buf, 200);
  const auto before = buf.entries();
  const auto b1 = buf.sample_batch(8, 42);
  const auto b2 = buf.sample_batch(8, 42);
  const auto b3 = buf.sample_batch(8, 43);
  REQUIRE(b1.size() == 8);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < 8; ++i) {
    same = same && b1[i].label == b2[i].label;
    differs = differs || b1[i].label != b3[i].label;
  }
  CHECK(same);
  CHECK(differs);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(buf.entries()[i].label == before[i].label);
  }
}

TEST_CASE("oversized requests draw with replacement from the entries") {
  ReplayBuffer buf(4, 9);
  offer_stream(buf, 4);
  const auto batch = buf.sample_batch(32, 17);
  REQUIRE(batch.size() == 32);
  std::set<std::size_t> seen;
  for (const ReplayItem& item : batch) {
    CHECK(item.label < 4);
    seen.insert(item.label);
  }
  CHECK(seen.size() > 1);  // 32 draws over 4 slots must repeat and spread
}

TEST_CASE("an empty buffer yields an empty batch") {
  ReplayBuffer buf(8, 11);
  CHECK(buf.sample_batch(4, 1).empty());
  CHECK(buf.empty());
}

TEST_CASE("single-draw frequencies are uniform within three sigma") {
  ReplayBuffer buf(20, 13);
  offer_stream(buf, 20);
  const std::size_t draws = 10000;
  std::vector<std::size_t> counts(20, 0);
  for (std::size_t d = 0; d < draws; ++d) {
    ++counts[buf.sample_batch(1, 3000 + d)[0].label];
  }
  const double p = 1.0 / 20.0;
  const double sigma = std::sqrt(p * (1.0 - p) / double(draws));
  for (std::size_t i = 0; i < 20; ++i) {
    const double freq = double(counts[i]) / double(draws);
    CHECK(std::fabs(freq - p) < 3.0 * sigma);
  }
}

TEST_CASE("restore validates the entry and seen counts") {
  ReplayBuffer buf(4, 15);
  std::vector<ReplayItem> entries = {{tagged_image(0), 0}, {tagged_image(1), 1}};
  CHECK_THROWS_AS(buf.restore(entries, 5), std::invalid_argument);
  buf.restore(entries, 2);
  CHECK(buf.size() == 2);
  CHECK(buf.seen_count() == 2);

  std::vector<ReplayItem> wide(5, ReplayItem{tagged_image(9), 9});
  CHECK_THROWS_AS(buf.restore(wide, 9), std::invalid_argument);

  std::vector<ReplayItem> full(4, ReplayItem{tagged_image(3), 3});
  buf.restore(full, 77);
  CHECK(buf.seen_count() == 77);
  CHECK(buf.size() == 4);
}
