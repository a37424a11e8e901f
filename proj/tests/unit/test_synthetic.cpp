#include "headprune/annealer.hpp"
#include "headprune/errors.hpp"
#include "headprune/synthetic.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

using namespace headprune;

namespace {

SyntheticObjective interacting(std::size_t n, std::uint64_t seed, double noise = 0.0) {
  ObjectiveRecipe r;
  r.n = n;
  r.seed = seed;
  r.noise_sigma = noise;
  return make_objective(r);
}

SyntheticObjective monotone(std::size_t n, std::uint64_t seed) {
  ObjectiveRecipe r;
  r.kind = ObjectiveRecipe::Kind::monotone;
  r.n = n;
  r.seed = seed;
  return make_objective(r);
}

// Term-by-term accumulation written independently of the library.
Measurement accumulate(const SyntheticObjective& obj, const HeadMask& s) {
  double bias = obj.baseline_bias, ppl = obj.baseline_ppl;
  for (std::size_t i = 0; i < obj.n; ++i)
    if (s.test(i)) {
      bias += obj.linear_bias[i];
      ppl += obj.linear_ppl[i];
    }
  for (const auto& t : obj.pairwise_bias) bias += (s.test(t.i) && s.test(t.j)) ? t.coefficient : 0.0;
  for (const auto& t : obj.pairwise_ppl) ppl += (s.test(t.i) && s.test(t.j)) ? t.coefficient : 0.0;
  return {std::min(std::max(bias, 0.0), 1.2), std::max(ppl, 1.0)};
}

HeadMask mask_of(std::size_t n, std::uint64_t bits) {
  HeadMask s(n);
  for (std::size_t i = 0; i < n; ++i) s.set(i, (bits >> i) & 1u);
  return s;
}

const ScalingSpec kScaling{0.6, 60.0, 10.0};

} // namespace

TEST(Evaluate, EmptyMaskGivesBaselines) {
  const auto obj = interacting(12, 1);
  const auto m = evaluate_exact(obj, HeadMask(12));
  EXPECT_EQ(m.bias, 0.45);
  EXPECT_EQ(m.ppl, 35.0);
  EXPECT_EQ(evaluate(obj, HeadMask(12), 7).bias, 0.45);
}

TEST(Evaluate, AdditiveWithoutPairs) {
  const auto obj = monotone(14, 2);
  Rng rng(3);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 500; ++trial) {
    HeadMask a(14), b(14), u(14);
    for (std::size_t i = 0; i < 14; ++i) {
      const bool take = coin(rng);
      (take ? a : b).set(i, coin(rng));
    }
    for (std::size_t i = 0; i < 14; ++i) u.set(i, a.test(i) || b.test(i));
    const auto fa = evaluate_exact(obj, a), fb = evaluate_exact(obj, b), fu = evaluate_exact(obj, u);
    ASSERT_NEAR(fu.bias, fa.bias + fb.bias - obj.baseline_bias, 1e-12);
    ASSERT_NEAR(fu.ppl, fa.ppl + fb.ppl - obj.baseline_ppl, 1e-12);
  }
}

TEST(Evaluate, MatchesTermByTermAccumulation) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto obj = interacting(16, seed);
    obj.pairwise_bias.push_back({0, 15, 0.9}); // drives some masks into the bias ceiling
    obj.linear_ppl[3] = -40.0;                 // and some into the perplexity floor
    for (std::uint64_t bits = 0; bits < (1u << 16); bits += 37) {
      const auto s = mask_of(16, bits);
      const auto got = evaluate_exact(obj, s);
      const auto want = accumulate(obj, s);
      ASSERT_NEAR(got.bias, want.bias, 1e-12);
      ASSERT_NEAR(got.ppl, want.ppl, 1e-12);
    }
  }
}

TEST(Evaluate, NoiseIsSeededAndCentered) {
  const auto obj = interacting(12, 4, 0.05);
  const HeadMask s = mask_of(12, 0b000100100001);
  EXPECT_EQ(evaluate(obj, s, 5).bias, evaluate(obj, s, 5).bias);
  const auto exact = evaluate_exact(obj, s);
  Rng rng(6);
  double sum = 0.0;
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) sum += evaluate(obj, s, rng).ppl;
  EXPECT_NEAR(sum / draws, exact.ppl, 4.0 * 0.05 / std::sqrt(draws));
}

TEST(Evaluate, WidthMismatch) { EXPECT_THROW(evaluate_exact(interacting(12, 1), HeadMask(13)), DimensionError); }

TEST(Objective, RecipeShapes) {
  const auto a = interacting(16, 9);
  EXPECT_EQ(a.pairwise_bias.size(), 16u);
  EXPECT_EQ(a.pairwise_ppl.size(), 16u);
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& t : a.pairwise_bias) {
    EXPECT_LT(t.i, t.j);
    EXPECT_GT(t.coefficient, 0.0);
    pairs.insert({t.i, t.j});
  }
  EXPECT_EQ(pairs.size(), 16u);
  const auto m = monotone(16, 9);
  EXPECT_TRUE(m.pairwise_bias.empty());
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_LT(m.linear_bias[i], 0.0);
    EXPECT_GT(m.linear_ppl[i], 0.0);
  }
  EXPECT_EQ(objective_to_json(interacting(16, 9)), objective_to_json(a));
}

TEST(Objective, ValidationErrors) {
  auto obj = interacting(8, 1);
  obj.pairwise_bias.push_back({3, 3, 0.1});
  EXPECT_THROW(obj.validate(), DimensionError);
  obj = interacting(8, 1);
  obj.linear_ppl.pop_back();
  EXPECT_THROW(obj.validate(), DimensionError);
  obj = interacting(8, 1);
  obj.noise_sigma = -1.0;
  EXPECT_THROW(obj.validate(), ConfigError);
  EXPECT_THROW(make_objective(ObjectiveRecipe{ObjectiveRecipe::Kind::monotone, 1, 0, 0.0, 1.0}), ConfigError);
}

TEST(Objective, JsonRoundTrip) {
  const auto obj = interacting(16, 12, 0.05);
  const auto path = std::filesystem::temp_directory_path() / "headprune_objective.json";
  save_objective(path, obj);
  const auto back = load_objective(path);
  EXPECT_EQ(objective_to_json(back), objective_to_json(obj));
  for (std::uint64_t bits = 0; bits < (1u << 16); bits += 101) {
    const auto s = mask_of(16, bits);
    ASSERT_EQ(evaluate_exact(back, s).bias, evaluate_exact(obj, s).bias);
  }
}

TEST(Objective, MalformedJsonRejected) {
  EXPECT_THROW(objective_from_json("{", "x"), ParseError);
  EXPECT_THROW(objective_from_json("{\"n\":2,\"baseline_bias\":0.4,\"baseline_ppl\":30,\"linear_bias\":[0],"
                                   "\"linear_ppl\":[0,0]}",
                                   "x"),
               ParseError);
  EXPECT_THROW(objective_from_json("{\"n\":2,\"baseline_bias\":0.4,\"baseline_ppl\":30,\"linear_bias\":[0,0],"
                                   "\"linear_ppl\":[0,0],\"pairwise_bias\":[[0,1]]}",
                                   "x"),
               ParseError);
}

TEST(Exhaustive, StateCountN12Bounds04) {
  EXPECT_EQ(legal_state_count(12, WeightBounds{0, 4}), 794.0);
  const auto r = exhaustive_search(interacting(12, 1), WeightBounds{0, 4}, 0.5, kScaling);
  EXPECT_EQ(r.states_enumerated, 794u);
  EXPECT_EQ(exhaustive_search(interacting(12, 1), WeightBounds{2, 3}, 0.5, kScaling).states_enumerated, 66u + 220u);
}

TEST(Exhaustive, OptimumMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto obj = interacting(12, seed);
    for (double eps : {0.0, 0.3, 0.5, 1.0}) {
      const auto r = exhaustive_search(obj, WeightBounds{1, 5}, eps, kScaling);
      double best = std::numeric_limits<double>::infinity();
      double best_bias = best;
      for (std::uint64_t bits = 0; bits < 4096; ++bits) {
        const auto s = mask_of(12, bits);
        if (s.count() < 1 || s.count() > 5) continue;
        best = std::min(best, true_cost(obj, s, eps, kScaling));
        best_bias = std::min(best_bias, evaluate_exact(obj, s).bias);
      }
      ASSERT_EQ(r.optimal_cost, best);
      ASSERT_EQ(true_cost(obj, r.optimum, eps, kScaling), best);
      if (eps == 1.0) ASSERT_EQ(r.optimal_measurement.bias, best_bias);
    }
  }
}

TEST(Exhaustive, FrontierMatchesDominanceFilter) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto obj = interacting(11, 40 + seed);
    const auto r = exhaustive_search(obj, WeightBounds{0, 11}, 0.5, kScaling);
    std::vector<FrontierPoint> all;
    for (std::uint64_t bits = 0; bits < 2048; ++bits) {
      const auto s = mask_of(11, bits);
      const auto m = evaluate_exact(obj, s);
      all.push_back({s, m.bias, m.ppl});
    }
    std::set<std::string> want;
    for (const auto& p : all) {
      bool dominated = false;
      for (const auto& q : all)
        if (q.bias <= p.bias && q.ppl <= p.ppl && (q.bias < p.bias || q.ppl < p.ppl)) {
          dominated = true;
          break;
        }
      if (!dominated) want.insert(p.mask.to_string());
    }
    std::set<std::string> got;
    for (const auto& p : r.frontier) got.insert(p.mask.to_string());
    EXPECT_EQ(got, want);
    EXPECT_EQ(r.frontier.size(), want.size());
    for (std::size_t k = 1; k < r.frontier.size(); ++k) EXPECT_LE(r.frontier[k - 1].bias, r.frontier[k].bias);
  }
}

TEST(Exhaustive, OptimumBoundsEveryAnnealerState) {
  const auto obj = interacting(12, 3);
  const auto best = exhaustive_search(obj, WeightBounds{0, 4}, 0.5, kScaling);
  const ObjectiveScorer b(obj, Target::bias, kScaling), p(obj, Target::ppl, kScaling);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    AnnealConfig cfg;
    cfg.bounds = WeightBounds{0, 4};
    cfg.limit = TimeLimit::of_iterations(5000);
    cfg.seed = seed;
    const auto run = anneal(cfg, b, p);
    for (const auto& e : run.trace) ASSERT_GE(e.proposed_cost, best.optimal_cost);
    EXPECT_GE(run.best_cost, best.optimal_cost);
  }
}

TEST(Exhaustive, RefusesOversizedSpaces) {
  try {
    exhaustive_search(interacting(40, 1), WeightBounds{0, 40}, 0.5, kScaling);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("1099511627776"), std::string::npos) << e.what();
  }
}

TEST(Corpus, CountsBoundsAndDeterminism) {
  const auto obj = interacting(20, 5, 0.05);
  EXPECT_EQ(generate_corpus(obj, WeightBounds{0, 4}, 1, 1).size(), 1u);
  const auto a = generate_corpus(obj, WeightBounds{2, 4}, 500, 9);
  const auto b = generate_corpus(obj, WeightBounds{2, 4}, 500, 9);
  ASSERT_EQ(a.size(), 500u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    ASSERT_GE(a[k].mask.count(), 2u);
    ASSERT_LE(a[k].mask.count(), 4u);
    ASSERT_EQ(a[k].mask, b[k].mask);
    ASSERT_EQ(a[k].bias, b[k].bias);
    ASSERT_GE(a[k].bias, 0.0);
    ASSERT_LE(a[k].bias, 1.2);
    ASSERT_GE(a[k].ppl, 1.0);
  }
  EXPECT_NO_THROW(preprocess(a, 10.0));
}

TEST(Corpus, ZeroNoiseTargetsAreExact) {
  const auto obj = interacting(20, 6);
  for (const auto& r : generate_corpus(obj, WeightBounds{0, 6}, 200, 2)) {
    const auto m = evaluate_exact(obj, r.mask);
    ASSERT_EQ(r.bias, m.bias);
    ASSERT_EQ(r.ppl, m.ppl);
  }
}

TEST(HeadEffects, SingleAblationDifferences) {
  const auto obj = monotone(10, 8);
  const auto t = head_effects(obj);
  ASSERT_EQ(t.size(), 10u);
  for (std::size_t h = 0; h < 10; ++h) {
    EXPECT_EQ(t.rows[h].head, h);
    EXPECT_NEAR(t.rows[h].z_bias, -obj.linear_bias[h], 1e-15);
    EXPECT_NEAR(t.rows[h].z_ppl, -obj.linear_ppl[h], 1e-12);
    EXPECT_GT(t.rows[h].z_bias, 0.0);
    EXPECT_LT(t.rows[h].z_ppl, 0.0);
  }
}

TEST(Scorer, ExposesScaledOutputs) {
  const auto obj = interacting(12, 2);
  const ObjectiveScorer b(obj, Target::bias, kScaling), p(obj, Target::ppl, kScaling);
  const auto s = mask_of(12, 0b101000001100);
  const auto m = evaluate_exact(obj, s);
  EXPECT_EQ(b.score(s), m.bias / 0.6);
  EXPECT_EQ(p.score(s), std::min(m.ppl, 60.0) / 60.0);
  EXPECT_EQ(cost(s, b, p, 0.5), true_cost(obj, s, 0.5, kScaling));
}
