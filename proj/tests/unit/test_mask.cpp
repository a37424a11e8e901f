#include "headprune/errors.hpp"
#include "headprune/mask.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

using namespace headprune;

namespace {

HeadMask from_bits(std::string_view bits) { return HeadMask::parse(bits); }

// Brute-force bounded neighborhood: every single flip that stays within the bounds.
std::set<std::string> flip_neighborhood(const HeadMask& s, const WeightBounds& b) {
  std::set<std::string> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    HeadMask t = s;
    t.flip(i);
    if (b.admits(t.count())) out.insert(t.to_string());
  }
  return out;
}

// |observed - expected| within three binomial standard deviations.
void expect_within_3sigma(double count, double trials, double p) {
  const double sd = std::sqrt(trials * p * (1.0 - p));
  EXPECT_LE(std::abs(count - trials * p), 3.0 * sd) << "count " << count << " expected " << trials * p;
}

} // namespace

TEST(HammingDistance, SingleDifferingPosition) { EXPECT_EQ(hamming_distance(from_bits("0101"), from_bits("0001")), 1u); }

TEST(HammingDistance, IdentityIsZero) {
  const HeadMask x = from_bits("1101001");
  EXPECT_EQ(hamming_distance(x, x), 0u);
}

TEST(HammingDistance, MatchesPositionLoopOnRandomPairs) {
  Rng rng(17);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 2000; ++trial) {
    HeadMask a(20), b(20);
    for (std::size_t i = 0; i < 20; ++i) {
      a.set(i, coin(rng));
      b.set(i, coin(rng));
    }
    std::size_t loop = 0;
    for (std::size_t i = 0; i < 20; ++i) loop += a.test(i) != b.test(i);
    ASSERT_EQ(hamming_distance(a, b), loop);
  }
}

TEST(HammingDistance, SpansWordBoundaries) {
  HeadMask a(130), b(130);
  a.set(0);
  a.set(64);
  b.set(129);
  EXPECT_EQ(hamming_distance(a, b), 3u);
}

TEST(HammingDistance, LengthMismatchThrows) { EXPECT_THROW(hamming_distance(HeadMask(4), HeadMask(5)), DimensionError); }

TEST(HammingWeight, ZeroAndFull) {
  EXPECT_EQ(hamming_weight(HeadMask(12)), 0u);
  EXPECT_EQ(hamming_weight(HeadMask::ones(12)), 12u);
  EXPECT_EQ(hamming_weight(HeadMask::ones(200)), 200u);
}

TEST(HammingWeight, CommaListWithOnePrunedHead) {
  std::string text = "0,1";
  for (int i = 2; i < 1024; ++i) text += ",0";
  const HeadMask s = HeadMask::parse(text);
  EXPECT_EQ(s.size(), 1024u);
  EXPECT_EQ(hamming_weight(s), 1u);
  EXPECT_TRUE(s.test(1));
}

TEST(MaskText, AcceptedForms) {
  const HeadMask want = from_bits("0101");
  EXPECT_EQ(HeadMask::parse("0,1,0,1"), want);
  EXPECT_EQ(HeadMask::parse("[0, 1, 0, 1]"), want);
  EXPECT_EQ(HeadMask::parse(" 0101 "), want);
  EXPECT_EQ(want.to_string(), "0101");
}

TEST(MaskText, RejectsOtherDigits) {
  EXPECT_THROW(HeadMask::parse("0121"), ValidationError);
  EXPECT_THROW(HeadMask::parse("0,1,x"), ValidationError);
}

TEST(MaskText, RoundTripAcrossWords) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const HeadMask s = random_state(150, WeightBounds{0, 150}, rng);
    EXPECT_EQ(HeadMask::parse(s.to_string()), s);
  }
}

TEST(MaskIndexing, NthSetAndClear) {
  const HeadMask s = from_bits("0110010");
  EXPECT_EQ(s.nth_set(0), 1u);
  EXPECT_EQ(s.nth_set(2), 5u);
  EXPECT_EQ(s.nth_clear(0), 0u);
  EXPECT_EQ(s.nth_clear(3), 6u);
  EXPECT_EQ(s.set_indices(), (std::vector<std::size_t>{1, 2, 5}));
}

TEST(WeightBounds, Validation) {
  EXPECT_NO_THROW((WeightBounds{0, 8}.validate(8)));
  EXPECT_THROW((WeightBounds{3, 2}.validate(8)), ConfigError);
  EXPECT_THROW((WeightBounds{0, 9}.validate(8)), ConfigError);
}

TEST(RandomState, ForcedWeight) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_EQ(random_state(8, WeightBounds{3, 3}, seed).count(), 3u);
  EXPECT_EQ(random_state(8, WeightBounds{0, 0}, 5), HeadMask(8));
}

TEST(RandomState, InfeasibleBoundsThrow) {
  EXPECT_THROW(random_state(8, WeightBounds{5, 4}, 1), ConfigError);
  EXPECT_THROW(random_state(8, WeightBounds{0, 9}, 1), ConfigError);
}

TEST(RandomState, WeightHistogramUniform) {
  Rng rng(2024);
  std::map<std::size_t, int> hist;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    const HeadMask s = random_state(10, WeightBounds{2, 4}, rng);
    ASSERT_GE(s.count(), 2u);
    ASSERT_LE(s.count(), 4u);
    ++hist[s.count()];
  }
  for (std::size_t w = 2; w <= 4; ++w) expect_within_3sigma(hist[w], draws, 1.0 / 3.0);
}

TEST(RandomState, PositionsUniformForFixedWeight) {
  Rng rng(8);
  std::vector<int> hits(10, 0);
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) random_state(10, WeightBounds{3, 3}, rng).for_each_set([&](std::size_t i) { ++hits[i]; });
  for (int h : hits) expect_within_3sigma(h, draws, 0.3);
}

TEST(RandomState, Deterministic) {
  EXPECT_EQ(random_state(64, WeightBounds{2, 20}, 99), random_state(64, WeightBounds{2, 20}, 99));
}

TEST(Neighbor, UniformOverRestrictedNeighborhood) {
  Rng rng(1);
  const HeadMask s(3);
  std::map<std::string, int> freq;
  const int draws = 30000;
  for (int k = 0; k < draws; ++k) ++freq[generate_neighbor(s, WeightBounds{0, 1}, rng).to_string()];
  ASSERT_EQ(freq.size(), 3u);
  for (const char* m : {"100", "010", "001"}) expect_within_3sigma(freq[m], draws, 1.0 / 3.0);
}

TEST(Neighbor, AtUpperBoundOnlyClears) {
  Rng rng(4);
  const HeadMask s = from_bits("1101000");
  for (int k = 0; k < 200; ++k) {
    const HeadMask t = generate_neighbor(s, WeightBounds{0, 3}, rng);
    EXPECT_EQ(t.count(), 2u);
    EXPECT_EQ(hamming_distance(s, t), 1u);
  }
}

TEST(Neighbor, EveryEmittedNeighborIsMemberExhaustiveN6) {
  Rng rng(6);
  const WeightBounds b{1, 4};
  for (std::uint64_t bits = 0; bits < 64; ++bits) {
    HeadMask s(6);
    for (std::size_t i = 0; i < 6; ++i) s.set(i, (bits >> i) & 1u);
    if (!b.admits(s.count())) continue;
    const auto members = flip_neighborhood(s, b);
    EXPECT_EQ(legal_flip_count(s, b), members.size());
    std::set<std::string> seen;
    for (int k = 0; k < 300; ++k) {
      const HeadMask t = generate_neighbor(s, b, rng);
      ASSERT_TRUE(members.count(t.to_string())) << s.to_string() << " -> " << t.to_string();
      ASSERT_EQ(hamming_distance(s, t), 1u);
      seen.insert(t.to_string());
    }
    EXPECT_EQ(seen, members);
  }
}

TEST(Neighbor, EqualBoundsSwapPreservesWeight) {
  Rng rng(12);
  const WeightBounds b{3, 3};
  EXPECT_EQ(neighbor_mode(b), NeighborMode::swap);
  HeadMask s = random_state(10, b, rng);
  for (int k = 0; k < 1000; ++k) {
    const HeadMask t = generate_neighbor(s, b, rng);
    ASSERT_EQ(t.count(), 3u);
    ASSERT_EQ(hamming_distance(s, t), 2u);
    s = t;
  }
}

TEST(Neighbor, SwapCoversAllConstantWeightNeighbors) {
  Rng rng(13);
  const HeadMask s = from_bits("11000");
  std::set<std::string> seen;
  for (int k = 0; k < 2000; ++k) seen.insert(generate_neighbor(s, WeightBounds{2, 2}, rng).to_string());
  EXPECT_EQ(seen.size(), 6u); // 2 set bits x 3 clear bits
}

TEST(Neighbor, EmptyNeighborhoodThrows) {
  Rng rng(0);
  EXPECT_THROW(generate_neighbor(HeadMask(5), WeightBounds{0, 0}, rng), NeighborhoodError);
  EXPECT_THROW(generate_neighbor(HeadMask::ones(5), WeightBounds{5, 5}, rng), NeighborhoodError);
}

TEST(Neighbor, BoundsNeverViolatedAlongWalks) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const WeightBounds b{2, 5};
    HeadMask s = random_state(16, b, rng);
    for (int k = 0; k < 2000; ++k) {
      s = generate_neighbor(s, b, rng);
      ASSERT_TRUE(b.admits(s.count()));
    }
  }
}

TEST(Neighbor, DeterministicForSeed) {
  const HeadMask s = random_state(40, WeightBounds{0, 10}, 5);
  EXPECT_EQ(generate_neighbor(s, WeightBounds{0, 10}, 77), generate_neighbor(s, WeightBounds{0, 10}, 77));
}
