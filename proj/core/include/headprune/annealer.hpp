#pragma once

#include "headprune/mask.hpp"
#include "headprune/scorer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace headprune {

/// Stop condition for one chain: an iteration budget (deterministic) or wall-clock seconds.
struct TimeLimit {
  enum class Kind { iterations, seconds };
  Kind kind = Kind::iterations;
  std::uint64_t iterations = 10000;
  double seconds = 0.0;

  static TimeLimit of_iterations(std::uint64_t n) { return {Kind::iterations, n, 0.0}; }
  static TimeLimit of_seconds(double s) { return {Kind::seconds, 0, s}; }
};

/// Initial temperature: a fixed value, or the acceptance-ratio fixed point estimated
/// from uphill moves sampled around the start state.
struct TemperaturePolicy {
  enum class Kind { fixed, acceptance_ratio };
  Kind kind = Kind::acceptance_ratio;
  double fixed_t0 = 1.0;
  double target_ratio = 0.8;
  std::size_t sample_size = 100;
};

struct AnnealConfig {
  double epsilon = 0.5;
  WeightBounds bounds;
  TimeLimit limit;
  TemperaturePolicy t0;
  std::uint64_t seed = 0;
  /// Keep one trace entry per iteration. Off for long wall-clock runs.
  bool record_trace = true;
  /// Start the incumbent at the all-zero mask (the unpruned model), as the reference
  /// procedure does, even when the bounds exclude weight 0.
  bool zero_incumbent = true;

  void validate(std::size_t n) const;
};

struct TraceEntry {
  std::uint64_t iteration = 0;
  double temperature = 0.0;
  HeadMask proposed;
  double proposed_cost = 0.0;
  double delta_e = 0.0;
  bool accepted = false;
  double current_cost = 0.0; // after the accept/reject decision
};

/// Point at which the incumbent improved; cost of the best state is non-increasing.
struct BestUpdate {
  std::uint64_t iteration = 0;
  double elapsed_seconds = 0.0;
  double cost = 0.0;
};

struct AnnealRun {
  AnnealConfig config;
  NeighborMode mode = NeighborMode::single_flip;
  HeadMask initial_state;
  double initial_cost = 0.0;
  HeadMask best_state;
  double best_cost = 0.0;
  double t0 = 0.0;
  bool t0_fallback = false; // no uphill move was found while estimating T0
  std::uint64_t iterations = 0;
  double elapsed_seconds = 0.0;
  double states_per_second = 0.0;
  std::vector<TraceEntry> trace;
  std::vector<BestUpdate> best_history;
};

/// epsilon * bias(s) + (1 - epsilon) * ppl(s). A scorer whose weight is exactly zero is
/// not consulted. Throws DimensionError when the scorers' widths differ from s.
double cost(const HeadMask& s, const MaskScorer& bias, const MaskScorer& ppl, double epsilon);

/// Logarithmic cooling, natural log: t0 / ln(2 + i).
double temperature(double t0, double i);

/// Metropolis rule: downhill always, uphill iff draw < exp(-delta_e / t).
bool accept(double delta_e, double t, double draw);

/// One sampled uphill transition between two neighboring states.
struct Transition {
  double lower = 0.0;  // cost of the state left
  double higher = 0.0; // cost of the uphill neighbor
};

struct T0Estimate {
  double t0 = 1.0;
  double achieved_ratio = 0.0;
  std::size_t rounds = 0;
  std::size_t transitions = 0;
  bool converged = false;
  bool fallback = false;
};

/// sum exp(-higher/T) / sum exp(-lower/T) over the transitions.
double acceptance_ratio(std::span<const Transition> transitions, double t);

/// Fixed-point iteration T <- T * (ln ratio(T) / ln target)^(1/p), p = 1, stopping when
/// |ratio(T) - target| <= 1e-3 or after 100 rounds. Starts from -mean(dE) / ln(target).
T0Estimate estimate_t0_from_transitions(std::span<const Transition> transitions, double target_ratio);

/// Random walk from s0 collecting `sample_size` uphill transitions, then the fixed point
/// above. Falls back to T0 = 1 (fallback flag set) on a flat landscape.
T0Estimate estimate_t0(const MaskScorer& bias, const MaskScorer& ppl, double epsilon, const HeadMask& s0,
                       const WeightBounds& bounds, double target_ratio, std::size_t sample_size, Rng& rng);

/// One annealing chain. Every proposal whose cost is <= the incumbent's replaces it.
/// Throws DimensionError/ConfigError when scorers and bounds disagree on head count.
AnnealRun anneal(const AnnealConfig& config, const MaskScorer& bias, const MaskScorer& ppl);

struct MultiChainResult {
  std::vector<AnnealRun> runs; // sorted by seed
  std::size_t best = 0;        // index of the min-cost run; ties go to the lower seed
};

/// Independent chains, one per seed, sharing the read-only scorers. `threads` == 0 uses
/// the hardware concurrency.
MultiChainResult anneal_chains(const AnnealConfig& config, std::span<const std::uint64_t> seeds,
                               const MaskScorer& bias, const MaskScorer& ppl, std::size_t threads = 1);

/// JSON-lines export: one record per trace entry followed by a summary record. Without
/// timing, the output depends only on the configuration and the scorers.
std::string trace_to_jsonl(const AnnealRun& run, bool with_timing = true);
std::string summary_json(const AnnealRun& run, bool with_timing = true);

} // namespace headprune
