#include "cli.hpp"

#include "commands.hpp"

#include "headprune/errors.hpp"

#include <CLI11.hpp>

#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

namespace headprune::cli {

namespace {

// Config files are flat "key = value" lists; keys without a section belong to the
// subcommand being run. Sectioned files ([anneal], [oracle.generate]) also work.
class FlatConfig : public CLI::ConfigINI {
public:
  std::vector<std::string> target;

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigINI::from_config(input);
    for (auto& item : items)
      if (item.parents.empty() && item.name != "++" && item.name != "--") item.parents = target;
    return items;
  }
};

void add_bounds(CLI::App* sub, BoundsOptions& b) {
  sub->add_option("--n-lower", b.n_lower, "Fewest heads pruned (default 0)");
  sub->add_option("--n-upper", b.n_upper, "Most heads pruned (default N)");
  sub->add_option("--eta", b.eta, "Set --n-upper to ceil(eta * N)");
}

void add_search(CLI::App* sub, SearchOptions& s) {
  sub->add_option("--bias-model", s.bias_model, "Bias surrogate file")->required();
  sub->add_option("--ppl-model", s.ppl_model, "Perplexity surrogate file")->required();
  add_bounds(sub, s.bounds);
  sub->add_option("--iterations", s.iterations, "Iterations per chain");
  sub->add_option("--seconds", s.seconds, "Wall-clock limit per chain; replaces --iterations");
  sub->add_option("--seeds", s.seeds, "Chain seeds: list '1,2,3' or range '0:10'")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::Join);
  sub->add_option("--t0", s.t0, "Initial temperature, or 'auto' for the acceptance-ratio estimate");
  sub->add_option("--target-ratio", s.target_ratio, "Acceptance ratio targeted by --t0 auto");
  sub->add_option("--threads", s.threads, "Worker threads across seeds (0 = all cores)");
  sub->add_option("--objective", s.objective, "Synthetic objective; report oracle bias/ppl of the results");
  sub->add_option("--out-dir", s.out_dir, "Output directory");
}

void add_evaluators(CLI::App* sub, std::optional<fs::path>& objective, std::optional<fs::path>& bias,
                    std::optional<fs::path>& ppl) {
  sub->add_option("--objective", objective, "Evaluate masks with a synthetic objective");
  sub->add_option("--bias-model", bias, "Evaluate masks with this bias surrogate");
  sub->add_option("--ppl-model", ppl, "Evaluate masks with this perplexity surrogate");
}

// Subcommand path named by the leading words of the command line.
std::vector<std::string> command_path(const CLI::App& app, const std::vector<std::string>& args) {
  std::vector<std::string> path;
  const CLI::App* cur = &app;
  for (const auto& a : args) {
    if (a.empty() || a.front() == '-') continue;
    const CLI::App* next = nullptr;
    for (const CLI::App* sub : cur->get_subcommands({}))
      if (sub->get_name() == a) next = sub;
    if (!next) continue;
    path.push_back(a);
    cur = next;
  }
  return path;
}

int guarded(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ParseError& e) {
    err << "headprune: parse error: " << e.what() << "\n";
    return kParseFailure;
  } catch (const ConfigError& e) {
    err << "headprune: configuration error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const DimensionError& e) {
    err << "headprune: dimension error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const NeighborhoodError& e) {
    err << "headprune: configuration error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const std::exception& e) {
    err << "headprune: error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention-head pruning search for fairer language models"};
  app.footer(
      "Every option can also come from a --config file of flat 'key = value' lines, keys spelled\n"
      "like the long option without dashes. Command-line flags override the file, which\n"
      "overrides the defaults shown.");
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", tool_version());
  auto formatter = std::make_shared<FlatConfig>();
  app.config_formatter(formatter);
  app.set_config("--config", "", "Read options from a flat key = value file");
  app.allow_config_extras(CLI::config_extras_mode::error);

  std::function<int()> action;
  Context ctx{&out, &err, args, {}};

  TrainSurrogateOptions train_opt;
  auto* train = app.add_subcommand("train-surrogate", "Fit the bias and perplexity surrogates to a sample corpus");
  train->add_option("--corpus", train_opt.corpus, "Sample corpus (JSON lines: mask, bias, ppl)")->required();
  train->add_option("--arch", train_opt.arch, "Model alias (gpt2, llama-2-7b, ...) or layer sizes '72,64,32,1'");
  train->add_option("--sigma", train_opt.sigma, "Std ceiling for the perplexity clamp");
  train->add_option("--split", train_opt.split, "Validation fraction");
  train->add_option("--seed", train_opt.seed, "Split, initialization and shuffling seed");
  train->add_option("--lr", train_opt.learning_rate, "Adam learning rate");
  train->add_option("--batch-size", train_opt.batch_size, "Minibatch size");
  train->add_option("--patience", train_opt.patience, "Epochs without validation improvement before stopping");
  train->add_option("--max-epochs", train_opt.max_epochs, "Epoch cap");
  train->add_option("--out-dir", train_opt.out_dir, "Output directory");
  train->callback([&] { action = [&] { return cmd_train_surrogate(train_opt, ctx); }; });

  AnnealOptions anneal_opt;
  auto* anneal = app.add_subcommand("anneal", "Search for the lowest-cost pruning mask with simulated annealing");
  anneal->add_option("--epsilon", anneal_opt.epsilon, "Weight of bias against perplexity in the cost");
  add_search(anneal, anneal_opt.search);
  anneal->add_flag("--trace", anneal_opt.trace, "Write one JSON-lines trace per seed");
  anneal->callback([&] { action = [&] { return cmd_anneal(anneal_opt, ctx); }; });

  SweepOptions sweep_opt;
  sweep_opt.search.out_dir = "sweep";
  auto* sweep = app.add_subcommand("sweep-epsilon", "Anneal across several epsilon values and tabulate the trade-off");
  sweep->add_option("--epsilons", sweep_opt.epsilons, "Epsilon values")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::Join);
  add_search(sweep, sweep_opt.search);
  sweep->callback([&] { action = [&] { return cmd_sweep_epsilon(sweep_opt, ctx); }; });

  FaspOptions fasp_opt;
  auto* fasp = app.add_subcommand("fasp", "Protect perplexity-critical heads, prune the most bias-inducing rest");
  fasp->add_option("--effects", fasp_opt.effects, "Head effect table (head_index, z_bias, z_ppl)")->required();
  fasp->add_option("--alpha", fasp_opt.alpha, "Fraction of all heads to prune");
  fasp->add_option("--gamma", fasp_opt.gamma, "Fraction of all heads to protect");
  fasp->add_option("--protect", fasp_opt.protect, "Protect the 'highest' or 'lowest' z_ppl heads");
  fasp->add_flag("--sweep-alpha", fasp_opt.sweep_alpha, "Try alpha = 0.02..0.20 and keep the lowest bias");
  add_evaluators(fasp, fasp_opt.objective, fasp_opt.bias_model, fasp_opt.ppl_model);
  fasp->add_option("--out", fasp_opt.out, "Result file");
  fasp->callback([&] { action = [&] { return cmd_fasp(fasp_opt, ctx); }; });

  SelectOptions select_opt;
  auto* select = app.add_subcommand("select", "Score-ranked or random head selection");
  select->add_option("--method", select_opt.method, "'score' or 'random'");
  select->add_option("--scores", select_opt.scores, "Head scores (head_index, score)");
  select->add_option("--alpha", select_opt.alpha, "Fraction of heads to prune by score");
  select->add_option("--direction", select_opt.direction, "Prune the 'lowest' or 'highest' scores");
  select->add_option("--n", select_opt.n, "Head count for random selection");
  select->add_option("--alpha-max", select_opt.alpha_max, "Random selection prunes up to floor(alpha-max * N) heads");
  select->add_option("--seed", select_opt.seed, "Random selection seed");
  select->add_option("--draws", select_opt.draws, "Random draws; the lowest-bias one is kept");
  add_evaluators(select, select_opt.objective, select_opt.bias_model, select_opt.ppl_model);
  select->add_option("--out", select_opt.out, "Result file");
  select->callback([&] { action = [&] { return cmd_select(select_opt, ctx); }; });

  CompareOptions compare_opt;
  auto* compare = app.add_subcommand("compare", "Tabulate bias and perplexity of several results");
  compare->add_option("runs", compare_opt.runs, "Result files, optionally 'label=path'")->required();
  compare->add_option("--baseline", compare_opt.baseline, "Label of the reference result (default: first)");
  compare->add_option("--out", compare_opt.out, "Write the comparison as CSV");
  compare->callback([&] { action = [&] { return cmd_compare(compare_opt, ctx); }; });

  EvaluateOptions eval_opt;
  auto* evaluate = app.add_subcommand("evaluate", "Bias and perplexity from scored continuation and loss tables");
  evaluate->add_option("--toxicity", eval_opt.toxicity, "Scored prompts (prompt_id, subgroup, toxicity)");
  evaluate->add_option("--group", eval_opt.group, "Bias group name");
  evaluate->add_option("--losses", eval_opt.losses, "Per-sequence losses (sequence_id, mean_nll, token_count)");
  evaluate->add_option("--fraction", eval_opt.fraction, "Score a stratified subsample of the prompts");
  evaluate->add_option("--seed", eval_opt.seed, "Subsample seed");
  evaluate->add_option("--method", eval_opt.method, "Label written to the result");
  evaluate->add_option("--out", eval_opt.out, "Result file");
  evaluate->callback([&] { action = [&] { return cmd_evaluate(eval_opt, ctx); }; });

  auto* oracle = app.add_subcommand("oracle", "Synthetic objectives for desk-scale experiments");
  oracle->require_subcommand(1);

  OracleMakeOptions make_opt;
  auto* make = oracle->add_subcommand("make", "Draw a random synthetic objective");
  make->add_option("--n", make_opt.n, "Head count");
  make->add_option("--kind", make_opt.kind, "'interacting' (pairwise terms) or 'monotone'");
  make->add_option("--seed", make_opt.seed, "Coefficient seed");
  make->add_option("--noise", make_opt.noise, "Observation noise std");
  make->add_option("--pairs-per-head", make_opt.pairs_per_head, "Pairwise terms per head");
  make->add_option("--out", make_opt.out, "Objective file");
  make->callback([&] { action = [&] { return cmd_oracle_make(make_opt, ctx); }; });

  OracleGenerateOptions gen_opt;
  auto* gen = oracle->add_subcommand("generate", "Sample a training corpus from an objective");
  gen->add_option("--objective", gen_opt.objective, "Objective file")->required();
  gen->add_option("--count", gen_opt.count, "Number of samples");
  add_bounds(gen, gen_opt.bounds);
  gen->add_option("--seed", gen_opt.seed, "Sampling seed");
  gen->add_option("--out", gen_opt.out, "Corpus file");
  gen->callback([&] { action = [&] { return cmd_oracle_generate(gen_opt, ctx); }; });

  OracleExhaustiveOptions ex_opt;
  auto* ex = oracle->add_subcommand("exhaustive", "Enumerate every legal mask of a small objective");
  ex->add_option("--objective", ex_opt.objective, "Objective file")->required();
  ex->add_option("--epsilon", ex_opt.epsilon, "Cost weight");
  add_bounds(ex, ex_opt.bounds);
  ex->add_option("--corpus", ex_opt.corpus, "Take the cost scaling from this corpus");
  ex->add_option("--model", ex_opt.model, "Take the cost scaling from this surrogate");
  ex->add_option("--sigma", ex_opt.sigma, "Std ceiling for the perplexity clamp (with --corpus)");
  ex->add_option("--limit", ex_opt.limit, "Refuse above this many states");
  ex->add_option("--out-dir", ex_opt.out_dir, "Output directory");
  ex->callback([&] { action = [&] { return cmd_oracle_exhaustive(ex_opt, ctx); }; });

  OracleEffectsOptions eff_opt;
  auto* eff = oracle->add_subcommand("effects", "Single-head ablation table of an objective");
  eff->add_option("--objective", eff_opt.objective, "Objective file")->required();
  eff->add_option("--out", eff_opt.out, "Effect table");
  eff->callback([&] { action = [&] { return cmd_oracle_effects(eff_opt, ctx); }; });

  OracleEvaluateOptions oev_opt;
  auto* oev = oracle->add_subcommand("evaluate", "Noise-free bias and perplexity of one mask");
  oev->add_option("--objective", oev_opt.objective, "Objective file")->required();
  oev->add_option("--mask", oev_opt.mask, "Mask as 0/1 digits")->required();
  oev->add_option("--method", oev_opt.method, "Label written to the result");
  oev->add_option("--out", oev_opt.out, "Result file");
  oev->callback([&] { action = [&] { return cmd_oracle_evaluate(oev_opt, ctx); }; });

  fs::path replay_manifest;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", replay_manifest, "Manifest file")->required();
  replay->callback([&] {
    action = [&] {
      const ojson m = read_json(replay_manifest);
      if (!m.contains("argv") || !m["argv"].is_array()) throw ParseError(replay_manifest.string(), 0, "no argv");
      const auto argv = m["argv"].get<std::vector<std::string>>();
      if (!argv.empty() && argv.front() == "replay") throw ConfigError("refusing to replay a replay");
      return run(argv, out, err);
    };
  });

  formatter->target = command_path(app, args);
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ConfigError& e) {
    err << "headprune: configuration error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  for (const CLI::App* leaf = &app;;) {
    const auto subs = leaf->get_subcommands();
    if (subs.empty()) {
      // Unset optional values would read back as empty strings; leave them out.
      std::istringstream lines(leaf->config_to_str(true, false));
      for (std::string line; std::getline(lines, line);)
        if (!line.ends_with("=\"\"")) ctx.config_snapshot += line + "\n";
      break;
    }
    leaf = subs.front();
  }
  return guarded(action, err);
}

} // namespace headprune::cli
