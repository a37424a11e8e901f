#include "headprune/synthetic.hpp"

#include "headprune/errors.hpp"
#include "headprune/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace headprune {

void SyntheticObjective::validate() const {
  if (n == 0) throw ConfigError("objective needs at least one head");
  if (linear_bias.size() != n || linear_ppl.size() != n)
    throw DimensionError("objective linear terms must have one coefficient per head");
  for (const auto* terms : {&pairwise_bias, &pairwise_ppl})
    for (const auto& t : *terms)
      if (t.i >= n || t.j >= n || t.i == t.j) throw DimensionError("pairwise term indices must be distinct heads < n");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(baseline_ppl > 0.0)) throw ConfigError("baseline perplexity must be positive");
}

namespace {

Measurement raw_sum(const SyntheticObjective& obj, const HeadMask& s) {
  if (s.size() != obj.n)
    throw DimensionError("objective has " + std::to_string(obj.n) + " heads, mask has " + std::to_string(s.size()));
  Measurement m{obj.baseline_bias, obj.baseline_ppl};
  s.for_each_set([&](std::size_t i) {
    m.bias += obj.linear_bias[i];
    m.ppl += obj.linear_ppl[i];
  });
  for (const auto& t : obj.pairwise_bias)
    if (s.test(t.i) && s.test(t.j)) m.bias += t.coefficient;
  for (const auto& t : obj.pairwise_ppl)
    if (s.test(t.i) && s.test(t.j)) m.ppl += t.coefficient;
  return m;
}

Measurement clamp(Measurement m) {
  m.bias = std::clamp(m.bias, 0.0, SyntheticObjective::kBiasCeiling);
  m.ppl = std::max(m.ppl, SyntheticObjective::kPplFloor);
  return m;
}

} // namespace

Measurement evaluate_exact(const SyntheticObjective& obj, const HeadMask& s) { return clamp(raw_sum(obj, s)); }

Measurement evaluate(const SyntheticObjective& obj, const HeadMask& s, Rng& rng) {
  Measurement m = raw_sum(obj, s);
  if (obj.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, obj.noise_sigma);
    m.bias += noise(rng);
    m.ppl += noise(rng);
  }
  return clamp(m);
}

Measurement evaluate(const SyntheticObjective& obj, const HeadMask& s, std::uint64_t seed) {
  Rng rng(seed);
  return evaluate(obj, s, rng);
}

double true_cost(const SyntheticObjective& obj, const HeadMask& s, double epsilon, const ScalingSpec& scaling) {
  const Measurement m = evaluate_exact(obj, s);
  return epsilon * scaling.scale_bias(m.bias) + (1.0 - epsilon) * scaling.scale_ppl(m.ppl);
}

double ObjectiveScorer::score(const HeadMask& s) const {
  const Measurement m = evaluate_exact(*obj_, s);
  return target_ == Target::bias ? scaling_.scale_bias(m.bias) : scaling_.scale_ppl(m.ppl);
}

SyntheticObjective make_objective(const ObjectiveRecipe& recipe) {
  if (recipe.n < 2) throw ConfigError("objective recipe needs at least two heads");
  Rng rng(recipe.seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  SyntheticObjective obj;
  obj.n = recipe.n;
  obj.noise_sigma = recipe.noise_sigma;
  obj.baseline_bias = 0.45;
  obj.baseline_ppl = 35.0;
  obj.linear_bias.resize(recipe.n);
  obj.linear_ppl.resize(recipe.n);

  if (recipe.kind == ObjectiveRecipe::Kind::monotone) {
    for (std::size_t i = 0; i < recipe.n; ++i) {
      obj.linear_bias[i] = uniform(-0.05, -0.005);
      obj.linear_ppl[i] = uniform(0.2, 3.0);
    }
    return obj;
  }

  for (std::size_t i = 0; i < recipe.n; ++i) {
    obj.linear_bias[i] = uniform(-0.06, 0.01);
    obj.linear_ppl[i] = uniform(0.2, 3.0);
  }
  // Antagonistic pairs: each head of the pair looks good alone, both together give
  // back much of the bias reduction and cost extra perplexity.
  const auto pairs = static_cast<std::size_t>(std::llround(recipe.pairs_per_head * static_cast<double>(recipe.n)));
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::uniform_int_distribution<std::size_t> head(0, recipe.n - 1);
  for (std::size_t attempts = 0; used.size() < pairs && attempts < 100 * pairs; ++attempts) {
    std::size_t i = head(rng), j = head(rng);
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    if (!used.insert({i, j}).second) continue;
    obj.pairwise_bias.push_back({i, j, uniform(0.02, 0.08)});
    obj.pairwise_ppl.push_back({i, j, uniform(0.0, 2.0)});
  }
  return obj;
}

std::vector<FrontierPoint> pareto_frontier(std::vector<FrontierPoint> points) {
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return a.bias < b.bias || (a.bias == b.bias && a.ppl < b.ppl);
  });
  std::vector<FrontierPoint> front;
  double best_ppl = std::numeric_limits<double>::infinity();
  for (auto& p : points) {
    if (p.ppl < best_ppl) {
      best_ppl = p.ppl;
      front.push_back(std::move(p));
    } else if (!front.empty() && p.ppl == front.back().ppl && p.bias == front.back().bias) {
      front.push_back(std::move(p)); // duplicate of a frontier point
    }
  }
  return front;
}

double legal_state_count(std::size_t n, const WeightBounds& bounds) {
  double total = 0.0;
  for (std::size_t k = bounds.lower; k <= bounds.upper && k <= n; ++k)
    total += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(static_cast<double>(n - k) + 1.0));
  return std::round(total);
}

ExhaustiveResult exhaustive_search(const SyntheticObjective& obj, const WeightBounds& bounds, double epsilon,
                                   const ScalingSpec& scaling, double limit) {
  obj.validate();
  bounds.validate(obj.n);
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0,1]");
  const double states = legal_state_count(obj.n, bounds);
  if (states > limit)
    throw ConfigError("exhaustive search would enumerate " + io::format_double(states) + " states (limit " +
                      io::format_double(limit) + ")");

  ExhaustiveResult result;
  result.optimal_cost = std::numeric_limits<double>::infinity();
  std::vector<FrontierPoint> points;
  points.reserve(static_cast<std::size_t>(states));

  const std::size_t n = obj.n;
  for (std::size_t k = bounds.lower; k <= bounds.upper; ++k) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    for (;;) {
      const HeadMask s = HeadMask::from_indices(n, idx);
      const Measurement m = evaluate_exact(obj, s);
      const double c = epsilon * scaling.scale_bias(m.bias) + (1.0 - epsilon) * scaling.scale_ppl(m.ppl);
      ++result.states_enumerated;
      if (c < result.optimal_cost) {
        result.optimal_cost = c;
        result.optimum = s;
        result.optimal_measurement = m;
      }
      points.push_back({s, m.bias, m.ppl});

      // Next k-combination in lexicographic order.
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  result.frontier = pareto_frontier(std::move(points));
  return result;
}

std::vector<SampleRecord> generate_corpus(const SyntheticObjective& obj, const WeightBounds& bounds,
                                          std::size_t count, std::uint64_t seed) {
  obj.validate();
  Rng rng(seed);
  std::vector<SampleRecord> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    HeadMask s = random_state(obj.n, bounds, rng);
    const Measurement m = evaluate(obj, s, rng);
    out.push_back({std::move(s), m.bias, m.ppl});
  }
  return out;
}

HeadEffectTable head_effects(const SyntheticObjective& obj) {
  obj.validate();
  const Measurement base = evaluate_exact(obj, HeadMask(obj.n));
  HeadEffectTable table;
  for (std::size_t h = 0; h < obj.n; ++h) {
    HeadMask s(obj.n);
    s.set(h);
    const Measurement m = evaluate_exact(obj, s);
    table.rows.push_back({h, base.bias - m.bias, base.ppl - m.ppl});
  }
  return table;
}

namespace {

nlohmann::json pairs_to_json(const std::vector<PairTerm>& terms) {
  auto arr = nlohmann::json::array();
  for (const auto& t : terms) arr.push_back({t.i, t.j, t.coefficient});
  return arr;
}

std::vector<PairTerm> pairs_from_json(const nlohmann::json& arr) {
  std::vector<PairTerm> out;
  for (const auto& t : arr) {
    if (!t.is_array() || t.size() != 3) throw nlohmann::json::other_error::create(501, "pair term must be [i, j, c]", &t);
    out.push_back({t[0].get<std::size_t>(), t[1].get<std::size_t>(), t[2].get<double>()});
  }
  return out;
}

} // namespace

std::string objective_to_json(const SyntheticObjective& obj) {
  nlohmann::ordered_json j;
  j["n"] = obj.n;
  j["baseline_bias"] = obj.baseline_bias;
  j["baseline_ppl"] = obj.baseline_ppl;
  j["noise_sigma"] = obj.noise_sigma;
  j["linear_bias"] = obj.linear_bias;
  j["linear_ppl"] = obj.linear_ppl;
  j["pairwise_bias"] = pairs_to_json(obj.pairwise_bias);
  j["pairwise_ppl"] = pairs_to_json(obj.pairwise_ppl);
  return j.dump(2) + "\n";
}

SyntheticObjective objective_from_json(std::string_view text, std::string_view source) {
  const std::string src(source);
  SyntheticObjective obj;
  try {
    const auto j = nlohmann::json::parse(text);
    obj.n = j.at("n").get<std::size_t>();
    obj.baseline_bias = j.at("baseline_bias").get<double>();
    obj.baseline_ppl = j.at("baseline_ppl").get<double>();
    obj.noise_sigma = j.value("noise_sigma", 0.0);
    obj.linear_bias = j.at("linear_bias").get<std::vector<double>>();
    obj.linear_ppl = j.at("linear_ppl").get<std::vector<double>>();
    if (j.contains("pairwise_bias")) obj.pairwise_bias = pairs_from_json(j["pairwise_bias"]);
    if (j.contains("pairwise_ppl")) obj.pairwise_ppl = pairs_from_json(j["pairwise_ppl"]);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(src, 0, std::string("malformed objective: ") + e.what());
  }
  try {
    obj.validate();
  } catch (const Error& e) {
    throw ParseError(src, 0, e.what());
  }
  return obj;
}

void save_objective(const std::filesystem::path& path, const SyntheticObjective& obj) {
  io::write_file_atomic(path, objective_to_json(obj));
}

SyntheticObjective load_objective(const std::filesystem::path& path) {
  return objective_from_json(io::read_file(path), path.string());
}

} // namespace headprune
