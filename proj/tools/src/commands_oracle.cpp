#include "commands.hpp"

#include "headprune/corpus.hpp"
#include "headprune/errors.hpp"
#include "headprune/io.hpp"

#include <ostream>

namespace headprune::cli {

int cmd_oracle_make(const OracleMakeOptions& opt, const Context& ctx) {
  RunManifest man("oracle make", ctx);
  ObjectiveRecipe r;
  if (opt.kind == "interacting") r.kind = ObjectiveRecipe::Kind::interacting;
  else if (opt.kind == "monotone") r.kind = ObjectiveRecipe::Kind::monotone;
  else throw ConfigError("--kind must be 'interacting' or 'monotone'");
  r.n = opt.n;
  r.seed = opt.seed;
  r.noise_sigma = opt.noise;
  r.pairs_per_head = opt.pairs_per_head;
  const SyntheticObjective obj = make_objective(r);
  obj.validate();

  const fs::path manifest = manifest_beside(opt.out);
  auto j = ojson::parse(objective_to_json(obj));
  j["manifest"] = manifest_ref(manifest, opt.out);
  write_json(opt.out, j);
  man.output(opt.out);
  man.write(manifest);
  *ctx.out << opt.kind << " objective over " << obj.n << " heads, " << obj.pairwise_bias.size()
           << " pairwise terms -> " << opt.out.string() << "\n";
  return kOk;
}

int cmd_oracle_generate(const OracleGenerateOptions& opt, const Context& ctx) {
  RunManifest man("oracle generate", ctx);
  const SyntheticObjective obj = load_objective(opt.objective);
  man.input(opt.objective);
  if (opt.count == 0) throw ConfigError("--count must be at least 1");
  const WeightBounds bounds = resolve_bounds(obj.n, opt.bounds);
  const auto records = generate_corpus(obj, bounds, opt.count, opt.seed);

  const fs::path manifest = manifest_beside(opt.out);
  io::write_file_atomic(opt.out, manifest_comment(manifest, opt.out) + corpus_to_jsonl(records));
  man.output(opt.out);
  man.write(manifest);
  *ctx.out << records.size() << " samples, weights in [" << bounds.lower << ", " << bounds.upper << "] -> "
           << opt.out.string() << "\n";
  return kOk;
}

int cmd_oracle_exhaustive(const OracleExhaustiveOptions& opt, const Context& ctx) {
  RunManifest man("oracle exhaustive", ctx);
  const SyntheticObjective obj = load_objective(opt.objective);
  man.input(opt.objective);
  if (opt.corpus.has_value() == opt.model.has_value())
    throw ConfigError("give exactly one of --corpus or --model to fix the cost scaling");
  ScalingSpec scaling;
  if (opt.corpus) {
    scaling = preprocess(read_corpus(*opt.corpus), opt.sigma).scaling;
    man.input(*opt.corpus);
  } else {
    scaling = load_regressor(*opt.model).scaling;
    man.input(*opt.model);
  }
  const WeightBounds bounds = resolve_bounds(obj.n, opt.bounds);
  const ExhaustiveResult res = exhaustive_search(obj, bounds, opt.epsilon, scaling, opt.limit);

  const fs::path dir = opt.out_dir;
  const fs::path manifest = manifest_in(dir);
  const fs::path frontier_path = dir / "frontier.csv";
  std::string csv = manifest_comment(manifest, frontier_path) + "bias,ppl,weight,mask\n";
  for (const auto& p : res.frontier)
    csv += io::format_double(p.bias) + "," + io::format_double(p.ppl) + "," + std::to_string(p.mask.count()) + "," +
           p.mask.to_string() + "\n";
  io::write_file_atomic(frontier_path, csv);

  ojson j;
  j["manifest"] = manifest_ref(manifest, dir / "exhaustive.json");
  j["method"] = "exhaustive";
  j["epsilon"] = opt.epsilon;
  j["n_lower"] = bounds.lower;
  j["n_upper"] = bounds.upper;
  j["states_enumerated"] = res.states_enumerated;
  j["mask"] = res.optimum.to_string();
  j["weight"] = res.optimum.count();
  j["cost"] = res.optimal_cost;
  j["bias"] = res.optimal_measurement.bias;
  j["ppl"] = res.optimal_measurement.ppl;
  j["frontier_size"] = res.frontier.size();
  write_json(dir / "exhaustive.json", j);
  man.output(dir / "exhaustive.json");
  man.output(frontier_path);
  man.write(manifest);

  *ctx.out << res.states_enumerated << " states; optimum " << res.optimum.to_string() << " cost "
           << fixed3(res.optimal_cost) << " (bias " << fixed3(res.optimal_measurement.bias) << ", ppl "
           << fixed3(res.optimal_measurement.ppl) << "); " << res.frontier.size() << " frontier points\n";
  return kOk;
}

int cmd_oracle_effects(const OracleEffectsOptions& opt, const Context& ctx) {
  RunManifest man("oracle effects", ctx);
  const SyntheticObjective obj = load_objective(opt.objective);
  man.input(opt.objective);
  const HeadEffectTable table = head_effects(obj);
  const fs::path manifest = manifest_beside(opt.out);
  io::write_file_atomic(opt.out, manifest_comment(manifest, opt.out) + head_effects_to_csv(table));
  man.output(opt.out);
  man.write(manifest);
  *ctx.out << table.size() << " single-head effects -> " << opt.out.string() << "\n";
  return kOk;
}

int cmd_oracle_evaluate(const OracleEvaluateOptions& opt, const Context& ctx) {
  const SyntheticObjective obj = load_objective(opt.objective);
  HeadMask mask;
  try {
    mask = HeadMask::parse(opt.mask);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("--mask: ") + e.what());
  }
  const Measurement m = evaluate_exact(obj, mask);
  *ctx.out << "bias " << fixed3(m.bias) << "  ppl " << fixed3(m.ppl) << "\n";
  if (opt.out) {
    RunManifest man("oracle evaluate", ctx);
    man.input(opt.objective);
    const fs::path manifest = manifest_beside(*opt.out);
    ojson j;
    j["manifest"] = manifest_ref(manifest, *opt.out);
    j["method"] = opt.method;
    j["mask"] = mask.to_string();
    j["weight"] = mask.count();
    j["bias"] = m.bias;
    j["ppl"] = m.ppl;
    write_json(*opt.out, j);
    man.output(*opt.out);
    man.write(manifest);
  }
  return kOk;
}

} // namespace headprune::cli
