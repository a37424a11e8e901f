#include "commands.hpp"

#include "headprune/annealer.hpp"
#include "headprune/corpus.hpp"
#include "headprune/errors.hpp"
#include "headprune/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace headprune::cli {

namespace {

// Errors are small; two significant figures as in the usual MSE tables.
std::string mse_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Re-serializes a JSON document with a reference to the manifest that produced it.
std::string tag_json(const std::string& text, const std::string& ref) {
  auto j = ojson::parse(text);
  j["manifest"] = ref;
  return j.dump(2) + "\n";
}

} // namespace

int cmd_train_surrogate(const TrainSurrogateOptions& opt, const Context& ctx) {
  RunManifest man("train-surrogate", ctx);
  const auto records = read_corpus(opt.corpus);
  man.input(opt.corpus);
  if (records.empty()) throw DataError(opt.corpus.string() + ": corpus is empty");
  const TrainingCorpus corpus = preprocess(records, opt.sigma);
  const Architecture arch = opt.arch.empty() ? Architecture::small(corpus.width()) : Architecture::parse(opt.arch);
  if (arch.layer_sizes.front() != corpus.width())
    throw DimensionError("architecture " + arch.to_string() + " expects " + std::to_string(arch.layer_sizes.front()) +
                         " heads, corpus masks have " + std::to_string(corpus.width()));

  TrainOptions t;
  t.learning_rate = opt.learning_rate;
  t.batch_size = opt.batch_size;
  t.patience = opt.patience;
  t.max_epochs = opt.max_epochs;
  t.validation_fraction = opt.split;
  t.seed = opt.seed;

  const fs::path manifest = manifest_in(opt.out_dir);
  std::string metrics = manifest_comment(manifest, opt.out_dir / "metrics.csv") +
                        "target,train_mse,validation_mse,best_epoch,epochs_run,train_count,validation_count\n";
  std::string history = manifest_comment(manifest, opt.out_dir / "history.csv") + "target,epoch,train_mse,validation_mse\n";

  *ctx.out << "corpus " << opt.corpus.string() << ": " << corpus.size() << " samples, " << corpus.width()
           << " heads, bias_max " << fixed3(corpus.scaling.bias_max) << ", ppl clamp " << fixed3(corpus.scaling.ppl_max)
           << "\n";
  *ctx.out << "target  train_mse  validation_mse  best_epoch\n";
  for (Target target : {Target::bias, Target::ppl}) {
    const auto start = std::chrono::steady_clock::now();
    const TrainResult res = train(corpus, target, arch, t);
    const std::string name(to_string(target));
    man.metrics()[name + "_train_seconds"] = seconds_since(start);

    const fs::path path = opt.out_dir / (name + ".surrogate.json");
    io::write_file_atomic(path, tag_json(regressor_to_json(res.model), manifest_ref(manifest, path)));
    man.output(path);

    const double train_mse = res.train_history[res.best_epoch];
    metrics += name + "," + io::format_double(train_mse) + "," + io::format_double(res.best_validation_mse) + "," +
               std::to_string(res.best_epoch + 1) + "," + std::to_string(res.train_history.size()) + "," +
               std::to_string(res.train_count) + "," + std::to_string(res.validation_count) + "\n";
    for (std::size_t e = 0; e < res.train_history.size(); ++e)
      history += name + "," + std::to_string(e + 1) + "," + io::format_double(res.train_history[e]) + "," +
                 io::format_double(res.validation_history[e]) + "\n";
    *ctx.out << name << (target == Target::bias ? "    " : "     ") << mse_text(train_mse) << "  "
             << mse_text(res.best_validation_mse) << "  " << res.best_epoch + 1 << "\n";
  }
  io::write_file_atomic(opt.out_dir / "metrics.csv", metrics);
  io::write_file_atomic(opt.out_dir / "history.csv", history);
  man.output(opt.out_dir / "metrics.csv");
  man.output(opt.out_dir / "history.csv");
  man.write(manifest);
  return kOk;
}

namespace {

struct SearchSetup {
  ModelPair models;
  std::optional<SyntheticObjective> objective;
  AnnealConfig config;
  std::vector<std::uint64_t> seeds;
};

SearchSetup prepare(const SearchOptions& opt, RunManifest& man) {
  SearchSetup s{load_models(opt.bias_model, opt.ppl_model), std::nullopt, {}, parse_seed_list(opt.seeds)};
  man.input(opt.bias_model);
  man.input(opt.ppl_model);
  const std::size_t n = s.models.bias.input_width();
  if (opt.objective) {
    s.objective = load_objective(*opt.objective);
    man.input(*opt.objective);
    if (s.objective->n != n)
      throw DimensionError("objective has " + std::to_string(s.objective->n) + " heads, surrogates have " +
                           std::to_string(n));
  }
  s.config.bounds = resolve_bounds(n, opt.bounds);
  s.config.limit = opt.seconds ? TimeLimit::of_seconds(*opt.seconds) : TimeLimit::of_iterations(opt.iterations);
  if (opt.t0 == "auto") {
    s.config.t0.kind = TemperaturePolicy::Kind::acceptance_ratio;
    s.config.t0.target_ratio = opt.target_ratio;
  } else {
    s.config.t0.kind = TemperaturePolicy::Kind::fixed;
    try {
      s.config.t0.fixed_t0 = std::stod(opt.t0);
    } catch (const std::logic_error&) {
      throw ConfigError("--t0 must be 'auto' or a positive number");
    }
  }
  s.config.record_trace = false;
  return s;
}

struct RunReport {
  std::uint64_t seed = 0;
  HeadMask state;
  double cost = 0.0;
  Measurement predicted;
  std::optional<Measurement> oracle;

  const Measurement& reported() const { return oracle ? *oracle : predicted; }
};

RunReport report(const AnnealRun& run, const SearchSetup& s) {
  RunReport r{run.config.seed, run.best_state, run.best_cost, {}, std::nullopt};
  r.predicted = {s.models.bias.scaling.unscale_bias(s.models.bias.predict(run.best_state)),
                 s.models.ppl.scaling.unscale_ppl(s.models.ppl.predict(run.best_state))};
  if (s.objective) r.oracle = evaluate_exact(*s.objective, run.best_state);
  return r;
}

ojson run_json(const AnnealRun& run, const RunReport& r) {
  ojson j;
  j["seed"] = r.seed;
  j["best_state"] = r.state.to_string();
  j["weight"] = r.state.count();
  j["best_cost"] = r.cost;
  j["predicted_bias"] = r.predicted.bias;
  j["predicted_ppl"] = r.predicted.ppl;
  if (r.oracle) {
    j["oracle_bias"] = r.oracle->bias;
    j["oracle_ppl"] = r.oracle->ppl;
  }
  j["initial_state"] = run.initial_state.to_string();
  j["initial_cost"] = run.initial_cost;
  j["t0"] = run.t0;
  j["t0_fallback"] = run.t0_fallback;
  j["iterations"] = run.iterations;
  return j;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation; zero for a single value.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace

int cmd_anneal(const AnnealOptions& opt, const Context& ctx) {
  RunManifest man("anneal", ctx);
  SearchSetup s = prepare(opt.search, man);
  s.config.epsilon = opt.epsilon;
  s.config.record_trace = opt.trace;

  const auto start = std::chrono::steady_clock::now();
  const MultiChainResult chains = anneal_chains(s.config, s.seeds, s.models.bias, s.models.ppl, opt.search.threads);
  man.metrics()["search_seconds"] = seconds_since(start);

  const fs::path dir = opt.search.out_dir;
  const fs::path manifest = manifest_in(dir);
  ojson runs = ojson::array();
  std::vector<double> biases;
  ojson rates = ojson::array();
  *ctx.out << "seed      cost    bias     ppl  weight\n";
  for (const auto& run : chains.runs) {
    const RunReport r = report(run, s);
    runs.push_back(run_json(run, r));
    biases.push_back(r.reported().bias);
    rates.push_back(run.states_per_second);
    *ctx.out << r.seed << "  " << fixed3(r.cost) << "  " << fixed3(r.reported().bias) << "  "
             << fixed3(r.reported().ppl) << "  " << r.state.count() << "\n";
    if (opt.trace) {
      const fs::path trace = dir / ("trace_" + std::to_string(r.seed) + ".jsonl");
      io::write_file_atomic(trace, manifest_comment(manifest, trace) + trace_to_jsonl(run, false));
      man.output(trace);
    }
  }
  man.metrics()["states_per_second"] = rates;

  const AnnealRun& best_run = chains.runs[chains.best];
  const RunReport best = report(best_run, s);
  ojson j;
  j["manifest"] = manifest_ref(manifest, dir / "summary.json");
  j["method"] = "AP";
  j["epsilon"] = opt.epsilon;
  j["n_lower"] = s.config.bounds.lower;
  j["n_upper"] = s.config.bounds.upper;
  j["neighbor_mode"] = best_run.mode == NeighborMode::swap ? "swap" : "single_flip";
  j["values_from"] = s.objective ? "objective" : "surrogate";
  j["best_seed"] = best.seed;
  j["mask"] = best.state.to_string();
  j["weight"] = best.state.count();
  j["cost"] = best.cost;
  j["bias"] = best.reported().bias;
  j["ppl"] = best.reported().ppl;
  j["bias_mean"] = mean_of(biases);
  j["bias_std"] = std_of(biases);
  j["runs"] = runs;
  write_json(dir / "summary.json", j);
  io::write_file_atomic(dir / "best_mask.txt", best.state.to_string() + "\n");
  man.output(dir / "summary.json");
  man.output(dir / "best_mask.txt");
  man.write(manifest);

  *ctx.out << "best mask (seed " << best.seed << "): " << best.state.to_string() << "\n";
  *ctx.out << (s.objective ? "oracle" : "predicted") << " bias " << fixed3(best.reported().bias) << "  ppl "
           << fixed3(best.reported().ppl) << "\n";
  *ctx.out << "bias over " << biases.size() << " seeds: " << fixed3(mean_of(biases)) << " +/- "
           << fixed3(std_of(biases)) << "\n";
  return kOk;
}

int cmd_sweep_epsilon(const SweepOptions& opt, const Context& ctx) {
  RunManifest man("sweep-epsilon", ctx);
  SearchSetup s = prepare(opt.search, man);
  const auto epsilons = parse_real_list(opt.epsilons);
  for (double e : epsilons)
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("epsilon values must lie in [0,1]");

  std::vector<RunReport> rows;
  const auto start = std::chrono::steady_clock::now();
  for (double e : epsilons) {
    s.config.epsilon = e;
    const auto chains = anneal_chains(s.config, s.seeds, s.models.bias, s.models.ppl, opt.search.threads);
    rows.push_back(report(chains.runs[chains.best], s));
  }
  man.metrics()["search_seconds"] = seconds_since(start);

  std::vector<FrontierPoint> points;
  for (const auto& r : rows) points.push_back({r.state, r.reported().bias, r.reported().ppl});
  const auto front = pareto_frontier(points);
  auto on_front = [&](const RunReport& r) {
    for (const auto& p : front)
      if (p.bias == r.reported().bias && p.ppl == r.reported().ppl) return true;
    return false;
  };

  const fs::path dir = opt.search.out_dir;
  const fs::path manifest = manifest_in(dir);
  const fs::path csv_path = dir / "sweep.csv";
  std::string csv = manifest_comment(manifest, csv_path) +
                    "epsilon,seed,cost,weight,bias,ppl,predicted_bias,predicted_ppl,pareto,state\n";
  ojson arr = ojson::array();
  *ctx.out << "epsilon  bias     ppl  weight  pareto\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const bool pareto = on_front(r);
    csv += io::format_double(epsilons[k]) + "," + std::to_string(r.seed) + "," + io::format_double(r.cost) + "," +
           std::to_string(r.state.count()) + "," + io::format_double(r.reported().bias) + "," +
           io::format_double(r.reported().ppl) + "," + io::format_double(r.predicted.bias) + "," +
           io::format_double(r.predicted.ppl) + "," + (pareto ? "1" : "0") + "," + r.state.to_string() + "\n";
    arr.push_back({{"epsilon", epsilons[k]},
                   {"seed", r.seed},
                   {"mask", r.state.to_string()},
                   {"cost", r.cost},
                   {"bias", r.reported().bias},
                   {"ppl", r.reported().ppl},
                   {"pareto", pareto}});
    *ctx.out << fixed3(epsilons[k]) << "  " << fixed3(r.reported().bias) << "  " << fixed3(r.reported().ppl) << "  "
             << r.state.count() << "  " << (pareto ? "*" : "") << "\n";
  }
  io::write_file_atomic(csv_path, csv);
  ojson j;
  j["manifest"] = manifest_ref(manifest, dir / "sweep.json");
  j["values_from"] = s.objective ? "objective" : "surrogate";
  j["n_lower"] = s.config.bounds.lower;
  j["n_upper"] = s.config.bounds.upper;
  j["points"] = arr;
  write_json(dir / "sweep.json", j);
  man.output(csv_path);
  man.output(dir / "sweep.json");
  man.write(manifest);
  return kOk;
}

} // namespace headprune::cli
