#pragma once

#include "common.hpp"

#include "headprune/baselines.hpp"

namespace headprune::cli {

struct TrainSurrogateOptions {
  fs::path corpus;
  std::string arch; // alias or layer list; empty means [N, 64, 32, 1]
  double sigma = 10.0;
  double split = 0.05;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t patience = 5;
  std::size_t max_epochs = 300;
  fs::path out_dir = "surrogates";
};

struct SearchOptions {
  fs::path bias_model;
  fs::path ppl_model;
  BoundsOptions bounds;
  std::uint64_t iterations = 100000;
  std::optional<double> seconds; // wall-clock limit instead of iterations
  std::string seeds = "0,1,2";
  std::string t0 = "auto";
  double target_ratio = 0.8;
  std::size_t threads = 1;
  std::optional<fs::path> objective; // reports oracle values next to predictions
  fs::path out_dir = "anneal";
};

struct AnnealOptions {
  SearchOptions search;
  double epsilon = 0.5;
  bool trace = false;
};

struct SweepOptions {
  SearchOptions search;
  std::string epsilons = "0.3,0.4,0.5,0.6,0.7";
};

struct FaspOptions {
  fs::path effects;
  double alpha = 0.1;
  double gamma = 0.3;
  std::string protect = "highest";
  bool sweep_alpha = false;
  std::optional<fs::path> objective;
  std::optional<fs::path> bias_model;
  std::optional<fs::path> ppl_model;
  fs::path out = "fasp.json";
};

struct SelectOptions {
  std::string method = "score";
  std::optional<fs::path> scores;
  double alpha = 0.1;
  std::string direction = "lowest";
  std::optional<std::size_t> n;
  double alpha_max = 0.2;
  std::uint64_t seed = 0;
  std::size_t draws = 1;
  std::optional<fs::path> objective;
  std::optional<fs::path> bias_model;
  std::optional<fs::path> ppl_model;
  fs::path out = "select.json";
};

struct CompareOptions {
  std::vector<std::string> runs; // path or label=path
  std::string baseline;          // label; first run when empty
  std::optional<fs::path> out;
};

struct EvaluateOptions {
  std::optional<fs::path> toxicity;
  std::string group;
  std::optional<fs::path> losses;
  std::optional<double> fraction;
  std::uint64_t seed = 0;
  std::string method = "model";
  std::optional<fs::path> out;
};

struct OracleMakeOptions {
  std::size_t n = 12;
  std::string kind = "interacting";
  std::uint64_t seed = 0;
  double noise = 0.0;
  double pairs_per_head = 1.0;
  fs::path out = "objective.json";
};

struct OracleGenerateOptions {
  fs::path objective;
  std::size_t count = 25000;
  BoundsOptions bounds;
  std::uint64_t seed = 0;
  fs::path out = "corpus.jsonl";
};

struct OracleExhaustiveOptions {
  fs::path objective;
  double epsilon = 0.5;
  BoundsOptions bounds;
  std::optional<fs::path> corpus;
  std::optional<fs::path> model;
  double sigma = 10.0;
  double limit = 1e7;
  fs::path out_dir = "exhaustive";
};

struct OracleEffectsOptions {
  fs::path objective;
  fs::path out = "effects.csv";
};

struct OracleEvaluateOptions {
  fs::path objective;
  std::string mask;
  std::string method = "mask";
  std::optional<fs::path> out;
};

int cmd_train_surrogate(const TrainSurrogateOptions& opt, const Context& ctx);
int cmd_anneal(const AnnealOptions& opt, const Context& ctx);
int cmd_sweep_epsilon(const SweepOptions& opt, const Context& ctx);
int cmd_fasp(const FaspOptions& opt, const Context& ctx);
int cmd_select(const SelectOptions& opt, const Context& ctx);
int cmd_compare(const CompareOptions& opt, const Context& ctx);
int cmd_evaluate(const EvaluateOptions& opt, const Context& ctx);
int cmd_oracle_make(const OracleMakeOptions& opt, const Context& ctx);
int cmd_oracle_generate(const OracleGenerateOptions& opt, const Context& ctx);
int cmd_oracle_exhaustive(const OracleExhaustiveOptions& opt, const Context& ctx);
int cmd_oracle_effects(const OracleEffectsOptions& opt, const Context& ctx);
int cmd_oracle_evaluate(const OracleEvaluateOptions& opt, const Context& ctx);

/// One row of a comparison: a method's bias and perplexity.
struct MethodResult {
  std::string label;
  double bias = 0.0;
  double ppl = 0.0;
};

struct ComparisonRow {
  MethodResult result;
  double bias_improvement = 0.0; // (baseline - bias) / baseline
  double ppl_change = 0.0;       // (ppl - baseline) / baseline
  bool wins_bias = false;
  bool wins_ppl = false;
  std::vector<std::string> dominated_by;
};

/// a dominates b: no worse on both metrics and strictly better on one.
bool dominates(const MethodResult& a, const MethodResult& b) noexcept;
std::vector<ComparisonRow> compare_results(const std::vector<MethodResult>& results, std::size_t baseline);

} // namespace headprune::cli
