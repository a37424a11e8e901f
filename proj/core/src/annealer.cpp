#include "headprune/annealer.hpp"

#include "headprune/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

namespace headprune {

void AnnealConfig::validate(std::size_t n) const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0,1]");
  bounds.validate(n);
  if (limit.kind == TimeLimit::Kind::iterations ? limit.iterations == 0 : !(limit.seconds > 0.0))
    throw ConfigError("time limit must be positive");
  if (t0.kind == TemperaturePolicy::Kind::fixed && !(t0.fixed_t0 > 0.0))
    throw ConfigError("fixed initial temperature must be positive");
  if (t0.kind == TemperaturePolicy::Kind::acceptance_ratio &&
      (!(t0.target_ratio > 0.0 && t0.target_ratio < 1.0) || t0.sample_size == 0))
    throw ConfigError("acceptance-ratio target must lie in (0,1) with a positive sample size");
}

double cost(const HeadMask& s, const MaskScorer& bias, const MaskScorer& ppl, double epsilon) {
  if (bias.input_width() != s.size() || ppl.input_width() != s.size())
    throw DimensionError("cost: scorers expect " + std::to_string(bias.input_width()) + "/" +
                         std::to_string(ppl.input_width()) + " heads, mask has " + std::to_string(s.size()));
  if (epsilon == 1.0) return bias.score(s);
  if (epsilon == 0.0) return ppl.score(s);
  return epsilon * bias.score(s) + (1.0 - epsilon) * ppl.score(s);
}

double temperature(double t0, double i) { return t0 / std::log(2.0 + i); }

bool accept(double delta_e, double t, double draw) {
  if (delta_e <= 0.0) return true;
  return draw < std::exp(-delta_e / t);
}

double acceptance_ratio(std::span<const Transition> transitions, double t) {
  if (transitions.empty()) return 0.0;
  double ref = transitions.front().lower;
  for (const auto& tr : transitions) ref = std::min(ref, tr.lower);
  double num = 0.0, den = 0.0;
  for (const auto& tr : transitions) {
    num += std::exp(-(tr.higher - ref) / t);
    den += std::exp(-(tr.lower - ref) / t);
  }
  return num / den;
}

T0Estimate estimate_t0_from_transitions(std::span<const Transition> transitions, double target_ratio) {
  if (!(target_ratio > 0.0 && target_ratio < 1.0)) throw ConfigError("target acceptance ratio must lie in (0,1)");
  T0Estimate est;
  est.transitions = transitions.size();
  if (transitions.empty()) {
    est.fallback = true;
    return est;
  }
  double mean_delta = 0.0;
  for (const auto& tr : transitions) mean_delta += tr.higher - tr.lower;
  mean_delta /= static_cast<double>(transitions.size());

  const double log_target = std::log(target_ratio);
  double t = -mean_delta / log_target;
  constexpr double kTolerance = 1e-3;
  constexpr std::size_t kMaxRounds = 100;
  for (std::size_t round = 0; round < kMaxRounds; ++round) {
    const double ratio = acceptance_ratio(transitions, t);
    est.achieved_ratio = ratio;
    est.rounds = round + 1;
    if (std::abs(ratio - target_ratio) <= kTolerance) {
      est.converged = true;
      break;
    }
    const double r = std::clamp(ratio, 1e-300, 1.0 - 1e-15);
    t *= std::log(r) / log_target;
  }
  est.t0 = t;
  if (!est.converged) est.achieved_ratio = acceptance_ratio(transitions, t);
  return est;
}

T0Estimate estimate_t0(const MaskScorer& bias, const MaskScorer& ppl, double epsilon, const HeadMask& s0,
                       const WeightBounds& bounds, double target_ratio, std::size_t sample_size, Rng& rng) {
  std::vector<Transition> uphill;
  uphill.reserve(sample_size);
  HeadMask s = s0;
  double current = cost(s, bias, ppl, epsilon);
  const std::size_t max_steps = 50 * sample_size;
  for (std::size_t step = 0; step < max_steps && uphill.size() < sample_size; ++step) {
    apply_move(s, sample_move(s, bounds, rng));
    const double next = cost(s, bias, ppl, epsilon);
    if (next > current) uphill.push_back({current, next});
    current = next;
  }
  return estimate_t0_from_transitions(uphill, target_ratio);
}

AnnealRun anneal(const AnnealConfig& config, const MaskScorer& bias, const MaskScorer& ppl) {
  const std::size_t n = bias.input_width();
  if (ppl.input_width() != n)
    throw ConfigError("surrogates disagree on head count: " + std::to_string(n) + " vs " +
                      std::to_string(ppl.input_width()));
  config.validate(n);

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  AnnealRun run;
  run.config = config;
  run.mode = neighbor_mode(config.bounds);
  Rng rng(config.seed);

  HeadMask s = random_state(n, config.bounds, rng);
  double current = cost(s, bias, ppl, config.epsilon);
  run.initial_state = s;
  run.initial_cost = current;

  if (config.zero_incumbent) {
    run.best_state = HeadMask(n);
    run.best_cost = cost(run.best_state, bias, ppl, config.epsilon);
    // The start state competes like any other candidate.
    if (current <= run.best_cost) {
      run.best_state = s;
      run.best_cost = current;
    }
  } else {
    run.best_state = s;
    run.best_cost = current;
  }
  run.best_history.push_back({0, 0.0, run.best_cost});

  if (config.t0.kind == TemperaturePolicy::Kind::fixed) {
    run.t0 = config.t0.fixed_t0;
  } else {
    const auto est =
        estimate_t0(bias, ppl, config.epsilon, s, config.bounds, config.t0.target_ratio, config.t0.sample_size, rng);
    run.t0 = est.t0;
    run.t0_fallback = est.fallback;
  }

  const bool by_iterations = config.limit.kind == TimeLimit::Kind::iterations;
  if (config.record_trace && by_iterations) run.trace.reserve(static_cast<std::size_t>(config.limit.iterations));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::uint64_t i = 0;
  for (;; ++i) {
    if (by_iterations ? i >= config.limit.iterations : elapsed() > config.limit.seconds) break;
    const double t = temperature(run.t0, i);
    const Move move = sample_move(s, config.bounds, rng);
    apply_move(s, move); // s now holds the candidate
    const double candidate = cost(s, bias, ppl, config.epsilon);
    const double delta = candidate - current;
    const bool take = delta <= 0.0 || accept(delta, t, uniform(rng));

    if (config.record_trace) run.trace.push_back({i, t, s, candidate, delta, take, take ? candidate : current});
    if (candidate <= run.best_cost) {
      if (candidate < run.best_cost) run.best_history.push_back({i, elapsed(), candidate});
      run.best_cost = candidate;
      run.best_state = s;
    }
    if (take)
      current = candidate;
    else
      apply_move(s, move); // flips are their own inverse
  }

  run.iterations = i;
  run.elapsed_seconds = elapsed();
  run.states_per_second = run.elapsed_seconds > 0.0 ? static_cast<double>(i) / run.elapsed_seconds : 0.0;
  return run;
}

MultiChainResult anneal_chains(const AnnealConfig& config, std::span<const std::uint64_t> seeds,
                               const MaskScorer& bias, const MaskScorer& ppl, std::size_t threads) {
  if (seeds.empty()) throw ConfigError("anneal_chains: no seeds");
  std::vector<std::uint64_t> sorted(seeds.begin(), seeds.end());
  std::sort(sorted.begin(), sorted.end());

  MultiChainResult result;
  result.runs.resize(sorted.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, sorted.size());

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(sorted.size());
  auto worker = [&] {
    for (std::size_t k = next++; k < sorted.size(); k = next++) {
      try {
        AnnealConfig c = config;
        c.seed = sorted[k];
        result.runs[k] = anneal(c, bias, ppl);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t k = 1; k < result.runs.size(); ++k)
    if (result.runs[k].best_cost < result.runs[result.best].best_cost) result.best = k;
  return result;
}

namespace {

nlohmann::ordered_json summary_object(const AnnealRun& run, bool with_timing) {
  nlohmann::ordered_json j;
  j["type"] = "summary";
  j["best_state"] = run.best_state.to_string();
  j["best_cost"] = run.best_cost;
  j["best_weight"] = run.best_state.count();
  j["initial_state"] = run.initial_state.to_string();
  j["initial_cost"] = run.initial_cost;
  j["epsilon"] = run.config.epsilon;
  j["n_lower"] = run.config.bounds.lower;
  j["n_upper"] = run.config.bounds.upper;
  j["neighbor_mode"] = run.mode == NeighborMode::swap ? "swap" : "single_flip";
  j["seed"] = run.config.seed;
  j["t0"] = run.t0;
  j["t0_fallback"] = run.t0_fallback;
  j["iterations"] = run.iterations;
  if (with_timing) {
    j["elapsed_seconds"] = run.elapsed_seconds;
    j["states_per_second"] = run.states_per_second;
  }
  return j;
}

} // namespace

std::string summary_json(const AnnealRun& run, bool with_timing) { return summary_object(run, with_timing).dump(); }

std::string trace_to_jsonl(const AnnealRun& run, bool with_timing) {
  std::string out;
  for (const auto& e : run.trace) {
    nlohmann::ordered_json j;
    j["iteration"] = e.iteration;
    j["temperature"] = e.temperature;
    j["proposed"] = e.proposed.to_string();
    j["proposed_cost"] = e.proposed_cost;
    j["delta_e"] = e.delta_e;
    j["accepted"] = e.accepted;
    j["current_cost"] = e.current_cost;
    out += j.dump();
    out += '\n';
  }
  out += summary_object(run, with_timing).dump();
  out += '\n';
  return out;
}

} // namespace headprune
