#include "headprune/corpus.hpp"
#include "headprune/errors.hpp"
#include "headprune/io.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

using namespace headprune;
namespace fs = std::filesystem;

namespace {

double two_pass_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

// Descending scan over the distinct values, recomputing the clamped spread each time.
double scan_clamp(const std::vector<double>& ppl, double sigma) {
  std::set<double> distinct(ppl.begin(), ppl.end());
  for (auto it = distinct.rbegin(); it != distinct.rend(); ++it) {
    std::vector<double> c = ppl;
    for (auto& x : c) x = std::min(x, *it);
    if (two_pass_std(c) <= sigma) return *it;
  }
  return *distinct.begin();
}

std::vector<SampleRecord> records_with(const std::vector<double>& bias, const std::vector<double>& ppl, std::size_t n = 4) {
  std::vector<SampleRecord> out;
  Rng rng(1);
  for (std::size_t i = 0; i < bias.size(); ++i) out.push_back({random_state(n, WeightBounds{0, n}, rng), bias[i], ppl[i]});
  return out;
}

// Perplexities shaped like one row of the test-set statistics: the stated minimum and
// maximum, a log-normal bulk around the median, and a thin tail of extreme values.
std::vector<double> heavy_tailed(double min, double max, double median, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::lognormal_distribution<double> bulk(std::log(median), 0.35);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v;
  v.reserve(count);
  v.push_back(min);
  v.push_back(max);
  while (v.size() < count) {
    double x = bulk(rng);
    if (u(rng) < 0.01) x = std::exp(std::log(median) + u(rng) * (std::log(max) - std::log(median)));
    v.push_back(std::clamp(x, min, max));
  }
  return v;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("headprune_corpus_" + name); }

} // namespace

TEST(PopulationStd, Basics) {
  EXPECT_EQ(population_std(std::vector<double>{}), 0.0);
  EXPECT_EQ(population_std(std::vector<double>{5.0, 5.0}), 0.0);
  EXPECT_NEAR(population_std(std::vector<double>{2, 4, 4, 4, 5, 5, 7, 9}), 2.0, 1e-15);
}

TEST(PplClamp, FourValueExampleMatchesDescendingScan) {
  const std::vector<double> p{10, 20, 30, 10000};
  const double cap = choose_ppl_clamp(p, 10.0);
  EXPECT_EQ(cap, scan_clamp(p, 10.0));
  std::vector<double> c = p;
  for (auto& x : c) x = std::min(x, cap);
  EXPECT_LE(two_pass_std(c), 10.0);
}

TEST(PplClamp, MatchesDescendingScanOnRandomSets) {
  Rng rng(4);
  std::uniform_int_distribution<int> len(1, 60);
  std::lognormal_distribution<double> val(3.5, 1.2);
  std::uniform_int_distribution<int> dup(0, 3);
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<double> p;
    const int k = len(rng);
    for (int i = 0; i < k; ++i) {
      const double x = std::round(val(rng) * 10.0) / 10.0;
      for (int r = 0, d = dup(rng) == 0 ? 2 : 1; r < d; ++r) p.push_back(x);
    }
    for (double sigma : {0.5, 5.0, 10.0, 100.0}) ASSERT_EQ(choose_ppl_clamp(p, sigma), scan_clamp(p, sigma));
  }
}

TEST(PplClamp, NoClampWhenSpreadAlreadySmall) {
  const std::vector<double> p{30, 31, 32, 35};
  EXPECT_EQ(choose_ppl_clamp(p, 10.0), 35.0);
}

TEST(PplClamp, Errors) {
  EXPECT_THROW(choose_ppl_clamp(std::vector<double>{}, 10.0), DataError);
  EXPECT_THROW(choose_ppl_clamp(std::vector<double>{1.0, -2.0}, 10.0), DataError);
  EXPECT_THROW(choose_ppl_clamp(std::vector<double>{1.0, std::numeric_limits<double>::infinity()}, 10.0), DataError);
  EXPECT_THROW(choose_ppl_clamp(std::vector<double>{1.0}, 0.0), ConfigError);
}

struct TableRow {
  const char* model;
  double min, max, median, stated_std;
};

class HeavyTail : public ::testing::TestWithParam<TableRow> {};

TEST_P(HeavyTail, ClampedStdAtMostTen) {
  const auto row = GetParam();
  const auto p = heavy_tailed(row.min, row.max, row.median, 20000, 77);
  EXPECT_GT(two_pass_std(p), 10.0) << row.model;
  const double cap = choose_ppl_clamp(p, 10.0);
  std::vector<double> c = p;
  for (auto& x : c) x = std::min(x, cap);
  EXPECT_LE(two_pass_std(c), 10.0) << row.model;
  EXPECT_GE(cap, row.min);

  const auto corpus = preprocess(records_with(std::vector<double>(p.size(), 0.5), p), 10.0);
  for (double y : corpus.ppl_targets) {
    ASSERT_GE(y, 0.0);
    ASSERT_LE(y, 1.0);
  }
}

// min, max, median and standard deviation from the published perplexity statistics;
// medians missing from the table are replaced by a value between min and max.
INSTANTIATE_TEST_SUITE_P(PerplexityStatistics, HeavyTail,
                         ::testing::Values(TableRow{"distilgpt2", 66.77, 10174.765, 83.582, 412.105},
                                           TableRow{"gpt_neo_125m", 37.107, 1.2775815e12, 338.868, 7.585664e9},
                                           TableRow{"gpt_neo_1_3b", 18.02, 20240428.0, 60.0, 334278.03},
                                           TableRow{"llama_2_7b", 6.719, 2544.0, 12.0, 32.167}),
                         [](const auto& info) { return std::string(info.param.model); });

TEST(Preprocess, BiasMaxScalesToExactlyOne) {
  const auto corpus = preprocess(records_with({0.3, 1.05, 0.7}, {30, 31, 32}), 10.0);
  EXPECT_EQ(*std::max_element(corpus.bias_targets.begin(), corpus.bias_targets.end()), 1.0);
  EXPECT_EQ(corpus.scaling.bias_max, 1.05);
  EXPECT_NEAR(corpus.bias_targets[0], 0.3 / 1.05, 1e-15);
}

TEST(Preprocess, TargetsInUnitIntervalAndInvertible) {
  const auto raw = records_with({0.1, 0.2, 0.9, 0.4}, {10, 20, 30, 10000});
  const auto corpus = preprocess(raw, 10.0);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    EXPECT_GE(corpus.bias_targets[i], 0.0);
    EXPECT_LE(corpus.bias_targets[i], 1.0);
    EXPECT_GE(corpus.ppl_targets[i], 0.0);
    EXPECT_LE(corpus.ppl_targets[i], 1.0);
    EXPECT_NEAR(corpus.scaling.unscale_bias(corpus.bias_targets[i]), raw[i].bias, 1e-15);
    EXPECT_NEAR(corpus.scaling.unscale_ppl(corpus.ppl_targets[i]), std::min(raw[i].ppl, corpus.scaling.ppl_max), 1e-12);
  }
}

TEST(Preprocess, Idempotent) {
  const auto raw = records_with({0.1, 0.2, 0.9, 0.4, 0.3}, {10, 20, 30, 10000, 25});
  const auto once = preprocess(raw, 10.0);
  std::vector<SampleRecord> again;
  for (std::size_t i = 0; i < once.size(); ++i) again.push_back({once.masks[i], once.bias_targets[i], once.ppl_targets[i]});
  const auto twice = preprocess(again, 10.0);
  EXPECT_EQ(twice.bias_targets, once.bias_targets);
  EXPECT_EQ(twice.ppl_targets, once.ppl_targets);
}

TEST(Preprocess, OrderPreservedBelowClamp) {
  const auto p = heavy_tailed(37.0, 1e9, 300.0, 2000, 5);
  const auto corpus = preprocess(records_with(std::vector<double>(p.size(), 0.2), p), 10.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < std::min(p.size(), i + 50); ++j) {
      if (p[i] < p[j]) ASSERT_LE(corpus.ppl_targets[i], corpus.ppl_targets[j]);
      if (p[i] < p[j] && p[j] < corpus.scaling.ppl_max) ASSERT_LT(corpus.ppl_targets[i], corpus.ppl_targets[j]);
    }
}

TEST(Preprocess, Errors) {
  EXPECT_THROW(preprocess(std::vector<SampleRecord>{}, 10.0), DataError);
  EXPECT_THROW(preprocess(records_with({0.0, 0.0}, {10, 20}), 10.0), DataError);
  EXPECT_THROW(preprocess(records_with({0.1, 0.2}, {10, -1}), 10.0), DataError);
  auto mixed = records_with({0.1, 0.2}, {10, 20});
  mixed[1].mask = HeadMask(5);
  EXPECT_THROW(preprocess(mixed, 10.0), DimensionError);
  EXPECT_THROW(preprocess(records_with({0.1}, {10}), -1.0), ConfigError);
}

TEST(CorpusFile, RoundTripIsExact) {
  Rng rng(2);
  std::vector<SampleRecord> recs;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) recs.push_back({random_state(70, WeightBounds{0, 14}, rng), u(rng), 20.0 + 100.0 * u(rng)});
  const auto path = temp_path("roundtrip.jsonl");
  write_corpus(path, recs);
  const auto back = read_corpus(path);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].mask, recs[i].mask);
    EXPECT_EQ(back[i].bias, recs[i].bias);
    EXPECT_EQ(back[i].ppl, recs[i].ppl);
  }
}

TEST(CorpusFile, AcceptsListMasksAndComments) {
  const auto recs = parse_corpus("# manifest: x.json\n{\"mask\":\"0,1,1\",\"bias\":0.2,\"ppl\":31}\n\n"
                                 "{\"mask\":[1,0,0],\"bias\":0.4,\"ppl\":33.5}\n",
                                 "inline");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].mask.to_string(), "011");
  EXPECT_EQ(recs[1].mask.to_string(), "100");
  EXPECT_EQ(recs[1].ppl, 33.5);
}

TEST(CorpusFile, ErrorsCarryLineNumbers) {
  auto line_of = [](std::string_view text) -> std::size_t {
    try {
      parse_corpus(text, "inline");
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("{\"mask\":\"01\",\"bias\":0.1,\"ppl\":3}\n{\"mask\":\"012\",\"bias\":0.1,\"ppl\":3}\n"), 2u);
  EXPECT_EQ(line_of("{\"mask\":\"01\",\"bias\":0.1,\"ppl\":3}\n{\"mask\":\"011\",\"bias\":0.1,\"ppl\":3}\n"), 2u);
  EXPECT_EQ(line_of("{\"mask\":\"01\",\"bias\":0.1}\n"), 1u);
  EXPECT_EQ(line_of("{\"mask\":\"01\",\"bias\":\"high\",\"ppl\":3}\n"), 1u);
}

TEST(AtomicWrite, LeavesNoTemporaryBehind) {
  const auto dir = temp_path("atomic");
  fs::remove_all(dir);
  fs::create_directories(dir);
  io::write_file_atomic(dir / "a.txt", "first");
  io::write_file_atomic(dir / "a.txt", "second");
  EXPECT_EQ(io::read_file(dir / "a.txt"), "second");
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator()), 1);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(1e-300), "1e-300");
  Rng rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    ASSERT_EQ(std::stod(io::format_double(x)), x);
  }
}
