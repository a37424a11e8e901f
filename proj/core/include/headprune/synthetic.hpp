#pragma once

#include "headprune/baselines.hpp"
#include "headprune/corpus.hpp"
#include "headprune/mask.hpp"
#include "headprune/scorer.hpp"
#include "headprune/surrogate.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace headprune {

struct PairTerm {
  std::size_t i = 0;
  std::size_t j = 0;
  double coefficient = 0.0;
};

/// Ground-truth stand-in for a language model: bias and perplexity as a baseline plus
/// per-head and pairwise contributions of the pruned heads, plus optional Gaussian noise.
/// Bias is clamped to [0, 1.2]; perplexity to at least 1.
struct SyntheticObjective {
  static constexpr double kBiasCeiling = 1.2;
  static constexpr double kPplFloor = 1.0;

  std::size_t n = 0;
  double baseline_bias = 0.0;
  double baseline_ppl = 1.0;
  std::vector<double> linear_bias;
  std::vector<double> linear_ppl;
  std::vector<PairTerm> pairwise_bias;
  std::vector<PairTerm> pairwise_ppl;
  double noise_sigma = 0.0;

  void validate() const;
};

struct Measurement {
  double bias = 0.0;
  double ppl = 0.0;
};

/// Noise-free evaluation. Throws DimensionError on width mismatch.
Measurement evaluate_exact(const SyntheticObjective& obj, const HeadMask& s);
/// Adds N(0, noise_sigma) to both outputs before clamping.
Measurement evaluate(const SyntheticObjective& obj, const HeadMask& s, Rng& rng);
Measurement evaluate(const SyntheticObjective& obj, const HeadMask& s, std::uint64_t seed);

/// Scaled cost under the given scaling, the quantity the annealer minimizes.
double true_cost(const SyntheticObjective& obj, const HeadMask& s, double epsilon, const ScalingSpec& scaling);

/// Exposes one output of an objective, in scaled units, as an annealer cost term.
class ObjectiveScorer final : public MaskScorer {
public:
  ObjectiveScorer(const SyntheticObjective& obj, Target target, ScalingSpec scaling)
      : obj_(&obj), target_(target), scaling_(scaling) {}

  std::size_t input_width() const noexcept override { return obj_->n; }
  double score(const HeadMask& s) const override;

private:
  const SyntheticObjective* obj_;
  Target target_;
  ScalingSpec scaling_;
};

/// Random objective families used for desk-scale verification.
struct ObjectiveRecipe {
  enum class Kind {
    interacting, // linear effects plus antagonistic pairs that defeat single-head ranking
    monotone,    // every head lowers bias and raises perplexity; no pairs
  };
  Kind kind = Kind::interacting;
  std::size_t n = 12;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  double pairs_per_head = 1.0;
};

SyntheticObjective make_objective(const ObjectiveRecipe& recipe);

struct FrontierPoint {
  HeadMask mask;
  double bias = 0.0;
  double ppl = 0.0;
};

/// Points not dominated in (bias, ppl), both minimized. Identical points are all kept.
/// Sorted by bias, then ppl.
std::vector<FrontierPoint> pareto_frontier(std::vector<FrontierPoint> points);

struct ExhaustiveResult {
  HeadMask optimum;
  double optimal_cost = 0.0;
  Measurement optimal_measurement;
  std::uint64_t states_enumerated = 0;
  std::vector<FrontierPoint> frontier;
};

/// Number of masks with weight in [lower, upper], as a double to avoid overflow.
double legal_state_count(std::size_t n, const WeightBounds& bounds);

/// Enumerates every mask within the bounds (weight-major, lexicographic within a weight)
/// and returns the first minimum of true_cost plus the noise-free frontier. Refuses with
/// ConfigError when more than `limit` states would be enumerated.
ExhaustiveResult exhaustive_search(const SyntheticObjective& obj, const WeightBounds& bounds, double epsilon,
                                   const ScalingSpec& scaling, double limit = 1e7);

/// `count` records with masks from random_state and noisy targets from evaluate.
std::vector<SampleRecord> generate_corpus(const SyntheticObjective& obj, const WeightBounds& bounds,
                                          std::size_t count, std::uint64_t seed);

/// Single-head ablations against the unpruned baseline, noise-free.
HeadEffectTable head_effects(const SyntheticObjective& obj);

/// Objective spec file (JSON): n, baseline_bias, baseline_ppl, noise_sigma, linear_bias,
/// linear_ppl, pairwise_bias / pairwise_ppl as [i, j, coefficient] triples.
std::string objective_to_json(const SyntheticObjective& obj);
SyntheticObjective objective_from_json(std::string_view text, std::string_view source);
void save_objective(const std::filesystem::path& path, const SyntheticObjective& obj);
SyntheticObjective load_objective(const std::filesystem::path& path);

} // namespace headprune
