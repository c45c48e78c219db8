#include <set>

#include <gtest/gtest.h>

#include "msissa/rng.hpp"

using namespace msissa;

TEST(Rng, DerivedSeedsDependOnEveryComponent) {
  const auto a = derive_seed(1, "track", 0, 0);
  EXPECT_EQ(a, derive_seed(1, "track", 0, 0));
  std::set<std::uint64_t> seen{a, derive_seed(2, "track", 0, 0), derive_seed(1, "tracks", 0, 0),
                               derive_seed(1, "track", 1, 0), derive_seed(1, "track", 0, 1),
                               derive_seed(1, "track", 1, 1)};
  EXPECT_EQ(seen.size(), 6u);
}

TEST(Rng, IndexAndSubIndexDoNotCommute) {
  EXPECT_NE(derive_seed(5, "x", 1, 2), derive_seed(5, "x", 2, 1));
}

TEST(Rng, StreamsAreReproducible) {
  Rng a(42, "controls", 3), b(42, "controls", 3);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformRanges) {
  Rng r(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = r.uniform_pos();
    ASSERT_GT(v, 0.0);
    ASSERT_LE(v, 1.0);
    ASSERT_LT(r.index(3), 3u);
  }
}
