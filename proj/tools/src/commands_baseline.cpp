#include "commands.hpp"

#include "headprune/errors.hpp"
#include "headprune/fairness.hpp"
#include "headprune/io.hpp"

#include <algorithm>
#include <ostream>

namespace headprune::cli {

namespace {

struct Evaluators {
  std::optional<SyntheticObjective> objective;
  std::optional<ModelPair> models;
};

void load_evaluators(Evaluators& ev, const std::optional<fs::path>& objective, const std::optional<fs::path>& bias,
                     const std::optional<fs::path>& ppl, RunManifest& man) {
  if (objective) {
    ev.objective = load_objective(*objective);
    man.input(*objective);
  }
  if (bias.has_value() != ppl.has_value()) throw ConfigError("--bias-model and --ppl-model go together");
  if (bias && !objective) {
    ev.models = load_models(*bias, *ppl);
    man.input(*bias);
    man.input(*ppl);
  }
}

void check_width(const std::optional<MaskEvaluator>& ev, std::size_t n) {
  if (ev && ev->width() != n)
    throw DimensionError("evaluator covers " + std::to_string(ev->width()) + " heads, selection has " +
                         std::to_string(n));
}

void add_measurement(ojson& j, const std::optional<MaskEvaluator>& ev, const HeadMask& mask) {
  if (!ev) return;
  const Measurement m = ev->measure(mask);
  j["values_from"] = ev->source();
  j["bias"] = m.bias;
  j["ppl"] = m.ppl;
}

ProtectOrder parse_protect(const std::string& s) {
  if (s == "highest") return ProtectOrder::highest_z_ppl;
  if (s == "lowest") return ProtectOrder::lowest_z_ppl;
  throw ConfigError("--protect must be 'highest' or 'lowest'");
}

} // namespace

int cmd_fasp(const FaspOptions& opt, const Context& ctx) {
  RunManifest man("fasp", ctx);
  const HeadEffectTable effects = read_head_effects(opt.effects);
  man.input(opt.effects);
  Evaluators store;
  load_evaluators(store, opt.objective, opt.bias_model, opt.ppl_model, man);
  const auto ev = MaskEvaluator::from(store.objective, store.models);
  check_width(ev, effects.size());
  if (opt.sweep_alpha && !ev)
    throw ConfigError("--sweep-alpha ranks masks by bias and needs --objective or --bias-model/--ppl-model");

  FaspConfig cfg{opt.alpha, opt.gamma, parse_protect(opt.protect)};
  const fs::path manifest = manifest_beside(opt.out);
  HeadMask mask;
  if (opt.sweep_alpha) {
    fs::path csv_path = opt.out;
    csv_path.replace_extension(".alpha.csv");
    std::string csv = manifest_comment(manifest, csv_path) + "alpha,weight,bias,ppl,mask\n";
    double best_bias = 0.0;
    bool have = false;
    *ctx.out << "alpha  weight  bias     ppl\n";
    for (double a : fasp_alpha_grid()) {
      FaspConfig c = cfg;
      c.alpha = a;
      const HeadMask m = fasp_select(effects, c);
      const Measurement v = ev->measure(m);
      csv += io::format_double(a) + "," + std::to_string(m.count()) + "," + io::format_double(v.bias) + "," +
             io::format_double(v.ppl) + "," + m.to_string() + "\n";
      *ctx.out << fixed3(a) << "  " << m.count() << "  " << fixed3(v.bias) << "  " << fixed3(v.ppl) << "\n";
      if (!have || v.bias < best_bias) {
        have = true;
        best_bias = v.bias;
        cfg.alpha = a;
        mask = m;
      }
    }
    io::write_file_atomic(csv_path, csv);
    man.output(csv_path);
  } else {
    mask = fasp_select(effects, cfg);
  }

  ojson j;
  j["manifest"] = manifest_ref(manifest, opt.out);
  j["method"] = "FASP";
  j["alpha"] = cfg.alpha;
  j["gamma"] = cfg.gamma;
  j["protect"] = opt.protect;
  j["mask"] = mask.to_string();
  j["weight"] = mask.count();
  j["protected"] = fasp_protected(effects, cfg).to_string();
  add_measurement(j, ev, mask);
  write_json(opt.out, j);
  man.output(opt.out);
  man.write(manifest);

  *ctx.out << "FASP alpha " << fixed3(cfg.alpha) << " gamma " << fixed3(cfg.gamma) << ": " << mask.to_string() << " ("
           << mask.count() << " heads)\n";
  if (j.contains("bias")) *ctx.out << "bias " << fixed3(j["bias"].get<double>()) << "  ppl " << fixed3(j["ppl"].get<double>()) << "\n";
  return kOk;
}

int cmd_select(const SelectOptions& opt, const Context& ctx) {
  RunManifest man("select", ctx);
  Evaluators store;
  load_evaluators(store, opt.objective, opt.bias_model, opt.ppl_model, man);
  const auto ev = MaskEvaluator::from(store.objective, store.models);

  ojson j;
  HeadMask mask;
  if (opt.method == "score") {
    if (!opt.scores) throw ConfigError("score-ranked selection needs --scores");
    PruneDirection dir;
    if (opt.direction == "lowest") dir = PruneDirection::lowest;
    else if (opt.direction == "highest") dir = PruneDirection::highest;
    else throw ConfigError("--direction must be 'lowest' or 'highest'");
    const auto scores = read_head_scores(*opt.scores);
    man.input(*opt.scores);
    check_width(ev, scores.size());
    mask = score_ranked_select(scores, opt.alpha, dir);
    j["method"] = "score-" + opt.direction;
    j["alpha"] = opt.alpha;
  } else if (opt.method == "random") {
    const std::size_t n = opt.n ? *opt.n : ev ? ev->width() : 0;
    if (n == 0) throw ConfigError("random selection needs --n or an evaluator to fix the head count");
    check_width(ev, n);
    if (opt.draws == 0) throw ConfigError("--draws must be at least 1");
    if (opt.draws > 1 && !ev) throw ConfigError("--draws > 1 keeps the lowest-bias draw and needs an evaluator");
    Rng rng(opt.seed);
    double best_bias = 0.0;
    for (std::size_t d = 0; d < opt.draws; ++d) {
      HeadMask m = random_select(n, opt.alpha_max, rng);
      const double b = ev ? ev->measure(m).bias : 0.0;
      if (d == 0 || b < best_bias) {
        best_bias = b;
        mask = std::move(m);
      }
    }
    j["method"] = "random";
    j["alpha_max"] = opt.alpha_max;
    j["seed"] = opt.seed;
    j["draws"] = opt.draws;
  } else {
    throw ConfigError("--method must be 'score' or 'random'");
  }

  const fs::path manifest = manifest_beside(opt.out);
  ojson out;
  out["manifest"] = manifest_ref(manifest, opt.out);
  for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.value();
  out["mask"] = mask.to_string();
  out["weight"] = mask.count();
  add_measurement(out, ev, mask);
  write_json(opt.out, out);
  man.output(opt.out);
  man.write(manifest);
  *ctx.out << out["method"].get<std::string>() << ": " << mask.to_string() << " (" << mask.count() << " heads)\n";
  if (out.contains("bias"))
    *ctx.out << "bias " << fixed3(out["bias"].get<double>()) << "  ppl " << fixed3(out["ppl"].get<double>()) << "\n";
  return kOk;
}

bool dominates(const MethodResult& a, const MethodResult& b) noexcept {
  return a.bias <= b.bias && a.ppl <= b.ppl && (a.bias < b.bias || a.ppl < b.ppl);
}

std::vector<ComparisonRow> compare_results(const std::vector<MethodResult>& results, std::size_t baseline) {
  if (results.size() < 2) throw ConfigError("compare needs at least two results");
  if (baseline >= results.size()) throw ConfigError("baseline index out of range");
  const MethodResult& base = results[baseline];
  std::vector<ComparisonRow> rows;
  for (const auto& r : results) {
    ComparisonRow row;
    row.result = r;
    row.bias_improvement = base.bias != 0.0 ? (base.bias - r.bias) / base.bias : 0.0;
    row.ppl_change = base.ppl != 0.0 ? (r.ppl - base.ppl) / base.ppl : 0.0;
    row.wins_bias = r.bias < base.bias;
    row.wins_ppl = r.ppl < base.ppl;
    for (const auto& other : results)
      if (dominates(other, r)) row.dominated_by.push_back(other.label);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::vector<MethodResult> read_results(const std::string& spec, RunManifest& man) {
  std::string label;
  fs::path path = spec;
  if (const auto eq = spec.find('='); eq != std::string::npos && !fs::exists(spec)) {
    label = spec.substr(0, eq);
    path = spec.substr(eq + 1);
  }
  man.input(path);
  std::vector<MethodResult> out;
  if (path.extension() == ".json") {
    const ojson j = read_json(path);
    if (!j.contains("bias") || !j.contains("ppl") || !j["bias"].is_number() || !j["ppl"].is_number())
      throw ParseError(path.string(), 0, "result file needs numeric 'bias' and 'ppl'");
    if (label.empty()) label = j.contains("method") ? j["method"].get<std::string>() : path.stem().string();
    out.push_back({label, j["bias"].get<double>(), j["ppl"].get<double>()});
    return out;
  }
  for (const auto& rec : io::read_records(path)) {
    const std::string method = rec.at("method", path.string());
    out.push_back({label.empty() ? method : label + ":" + method, rec.number("bias", path.string()),
                   rec.number("ppl", path.string())});
  }
  return out;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", 100.0 * v);
  return buf;
}

} // namespace

int cmd_compare(const CompareOptions& opt, const Context& ctx) {
  RunManifest man("compare", ctx);
  std::vector<MethodResult> results;
  for (const auto& spec : opt.runs)
    for (auto& r : read_results(spec, man)) results.push_back(std::move(r));
  if (results.size() < 2) throw ConfigError("compare needs at least two results");

  std::size_t baseline = 0;
  if (!opt.baseline.empty()) {
    const auto it = std::find_if(results.begin(), results.end(), [&](const auto& r) { return r.label == opt.baseline; });
    if (it == results.end()) throw ConfigError("no result labelled '" + opt.baseline + "'");
    baseline = static_cast<std::size_t>(it - results.begin());
  }
  const auto rows = compare_results(results, baseline);

  std::string csv = "method,bias,ppl,bias_improvement,ppl_change,wins_bias,wins_ppl,dominated_by\n";
  *ctx.out << "baseline: " << results[baseline].label << "\n";
  *ctx.out << "method  bias  ppl  bias_improvement  ppl_change  dominated_by\n";
  for (const auto& row : rows) {
    std::string dom;
    for (const auto& d : row.dominated_by) dom += (dom.empty() ? "" : ";") + d;
    csv += row.result.label + "," + io::format_double(row.result.bias) + "," + io::format_double(row.result.ppl) + "," +
           io::format_double(row.bias_improvement) + "," + io::format_double(row.ppl_change) + "," +
           (row.wins_bias ? "1" : "0") + "," + (row.wins_ppl ? "1" : "0") + "," + dom + "\n";
    *ctx.out << row.result.label << "  " << fixed3(row.result.bias) << "  " << fixed3(row.result.ppl) << "  "
             << percent(row.bias_improvement) << "  " << percent(row.ppl_change) << "  " << (dom.empty() ? "-" : dom)
             << "\n";
  }
  if (opt.out) {
    const fs::path manifest = manifest_beside(*opt.out);
    io::write_file_atomic(*opt.out, manifest_comment(manifest, *opt.out) + csv);
    man.output(*opt.out);
    man.write(manifest);
  }
  return kOk;
}

int cmd_evaluate(const EvaluateOptions& opt, const Context& ctx) {
  if (!opt.toxicity && !opt.losses) throw ConfigError("evaluate needs --toxicity and/or --losses");
  RunManifest man("evaluate", ctx);
  ojson j;
  j["method"] = opt.method;
  if (opt.toxicity) {
    PromptToxicityTable table = read_toxicity_table(*opt.toxicity, opt.group);
    man.input(*opt.toxicity);
    if (opt.fraction) {
      table = stratified_subsample(table, *opt.fraction, opt.seed);
      j["fraction"] = *opt.fraction;
      j["seed"] = opt.seed;
    }
    const BiasReport rep = compute_bias(table);
    j["group"] = table.group_name;
    j["bias"] = rep.bias;
    j["group_mean"] = rep.group_mean;
    j["mean_toxicity"] = rep.mean_toxicity;
    ojson sub = ojson::object();
    for (const auto& [name, t] : rep.per_subgroup_toxicity)
      sub[name] = {{"toxicity", t}, {"count", rep.per_subgroup_count.at(name)}};
    j["subgroups"] = sub;
    *ctx.out << "bias " << fixed3(rep.bias) << " over " << rep.per_subgroup_toxicity.size()
             << " subgroups (mean toxicity " << fixed3(rep.mean_toxicity) << ")\n";
  }
  if (opt.losses) {
    const double ppl = compute_perplexity(read_loss_table(*opt.losses));
    man.input(*opt.losses);
    j["ppl"] = ppl;
    *ctx.out << "ppl " << fixed3(ppl) << "\n";
  }
  if (opt.out) {
    const fs::path manifest = manifest_beside(*opt.out);
    ojson tagged;
    tagged["manifest"] = manifest_ref(manifest, *opt.out);
    for (auto it = j.begin(); it != j.end(); ++it) tagged[it.key()] = it.value();
    write_json(*opt.out, tagged);
    man.output(*opt.out);
    man.write(manifest);
  }
  return kOk;
}

} // namespace headprune::cli
