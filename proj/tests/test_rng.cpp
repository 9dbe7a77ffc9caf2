#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "permsens/rng.hpp"

using permsens::CounterRng;
using permsens::SeedSpec;

// Random123 known-answer vector for philox4x32-10 with zero counter and key.
TEST(Philox, KnownAnswer) {
  CounterRng rng(SeedSpec{0, 0});
  EXPECT_EQ(rng(), 0x6627e8d5e169c58dULL);
  EXPECT_EQ(rng(), 0xbc57ac4c9b00dbd8ULL);
}

TEST(CounterRng, SameSeedSameStream) {
  CounterRng a(SeedSpec{42, 7});
  CounterRng b(SeedSpec{42, 7});
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(CounterRng, StreamsDiffer) {
  CounterRng a(SeedSpec{42, 0});
  CounterRng b(SeedSpec{42, 1});
  CounterRng c(SeedSpec{43, 0});
  const auto x = a();
  EXPECT_NE(x, b());
  EXPECT_NE(x, c());
}

TEST(SeedSpec, ChildrenAreDistinct) {
  const SeedSpec base{5, 3};
  std::set<std::uint64_t> seen;
  for (std::uint64_t rep = 0; rep < 500; ++rep) {
    for (std::uint64_t purpose = 0; purpose < 8; ++purpose) seen.insert(base.child(rep, purpose).stream_id);
  }
  EXPECT_EQ(seen.size(), 4000u);
}

TEST(CounterRng, UniformMoments) {
  CounterRng rng(SeedSpec{1, 0});
  const int n = 200000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0 / 12.0, 0.002);
}

TEST(CounterRng, NormalMoments) {
  CounterRng rng(SeedSpec{2, 0});
  const int n = 200000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal(1.0, 2.0);
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 1.0, 0.03);
  EXPECT_NEAR(std::sqrt(sq / n - mean * mean), 2.0, 0.03);
}

TEST(CounterRng, BelowCoversRange) {
  CounterRng rng(SeedSpec{3, 0});
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = rng.below(7);
    ASSERT_LT(k, 7u);
    ++hits[k];
  }
  for (int h : hits) EXPECT_NEAR(h, 10000, 500);
}
