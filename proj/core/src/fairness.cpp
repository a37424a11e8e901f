#include "headprune/fairness.hpp"

#include "headprune/errors.hpp"
#include "headprune/io.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace headprune {

BiasReport compute_bias(const PromptToxicityTable& table) {
  if (table.rows.empty()) throw DataError("compute_bias: empty toxicity table");

  std::map<std::string, double> sums;
  std::map<std::string, std::size_t> counts;
  for (const auto& g : table.declared_subgroups) {
    sums.emplace(g, 0.0);
    counts.emplace(g, 0);
  }
  double total = 0.0;
  for (const auto& row : table.rows) {
    if (!(row.toxicity >= 0.0 && row.toxicity <= 1.0))
      throw ValidationError("toxicity " + std::to_string(row.toxicity) + " of prompt '" + row.prompt_id +
                            "' outside [0,1]");
    sums[row.subgroup] += row.toxicity;
    ++counts[row.subgroup];
    total += row.toxicity;
  }

  BiasReport report;
  double sum_of_means = 0.0;
  for (const auto& [g, s] : sums) {
    const std::size_t c = counts[g];
    if (c == 0) throw DataError("subgroup '" + g + "' has no prompts");
    const double t = s / static_cast<double>(c);
    report.per_subgroup_toxicity[g] = t;
    report.per_subgroup_count[g] = c;
    sum_of_means += t;
  }
  report.group_mean = sum_of_means / static_cast<double>(report.per_subgroup_toxicity.size());
  for (const auto& [g, t] : report.per_subgroup_toxicity) report.bias += std::abs(report.group_mean - t);
  report.mean_toxicity = total / static_cast<double>(table.rows.size());
  return report;
}

double compute_perplexity(const SequenceLossTable& table) {
  if (table.rows.empty()) throw DataError("compute_perplexity: empty loss table");
  double weighted = 0.0;
  double tokens = 0.0;
  for (const auto& row : table.rows) {
    if (!std::isfinite(row.mean_nll) || row.mean_nll < 0.0)
      throw ValidationError("sequence '" + row.sequence_id + "' has invalid mean_nll " + std::to_string(row.mean_nll));
    weighted += row.mean_nll * static_cast<double>(row.token_count);
    tokens += static_cast<double>(row.token_count);
  }
  if (tokens == 0.0) throw DataError("compute_perplexity: zero total tokens");
  return std::exp(weighted / tokens);
}

PromptToxicityTable stratified_subsample(const PromptToxicityTable& table, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("subsample fraction " + std::to_string(fraction) + " outside (0,1]");

  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < table.rows.size(); ++i) strata[table.rows[i].subgroup].push_back(i);
  for (const auto& g : table.declared_subgroups)
    if (!strata.contains(g)) throw DataError("subgroup '" + g + "' has no prompts");

  PromptToxicityTable out;
  out.group_name = table.group_name;
  out.declared_subgroups = table.declared_subgroups;
  for (auto& [g, idx] : strata) {
    const double want = fraction * static_cast<double>(idx.size());
    if (want < 1.0)
      throw ConfigError("fraction " + std::to_string(fraction) + " selects no prompt from subgroup '" + g + "' (" +
                        std::to_string(idx.size()) + " rows)");
    const auto k = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::llround(want)));
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.rows.push_back(table.rows[idx[i]]);
    }
  }
  std::shuffle(out.rows.begin(), out.rows.end(), rng);
  return out;
}

PromptToxicityTable stratified_subsample(const PromptToxicityTable& table, double fraction, std::uint64_t seed) {
  Rng rng(seed);
  return stratified_subsample(table, fraction, rng);
}

PromptToxicityTable read_toxicity_table(const std::filesystem::path& path, std::string group_name) {
  const std::string src = path.string();
  PromptToxicityTable table;
  table.group_name = std::move(group_name);
  for (const auto& rec : io::read_records(path)) {
    ToxicityRow row;
    row.prompt_id = rec.at("prompt_id", src);
    row.subgroup = rec.at("subgroup", src);
    row.toxicity = rec.number("toxicity", src);
    if (!(row.toxicity >= 0.0 && row.toxicity <= 1.0))
      throw ParseError(src, rec.line, "toxicity outside [0,1]");
    table.rows.push_back(std::move(row));
  }
  return table;
}

SequenceLossTable read_loss_table(const std::filesystem::path& path) {
  const std::string src = path.string();
  SequenceLossTable table;
  for (const auto& rec : io::read_records(path)) {
    SequenceLossRow row;
    row.sequence_id = rec.at("sequence_id", src);
    row.mean_nll = rec.number("mean_nll", src);
    const long long tokens = rec.integer("token_count", src);
    if (!std::isfinite(row.mean_nll) || row.mean_nll < 0.0) throw ParseError(src, rec.line, "mean_nll must be finite and >= 0");
    if (tokens <= 0) throw ParseError(src, rec.line, "token_count must be positive");
    row.token_count = static_cast<std::uint64_t>(tokens);
    table.rows.push_back(std::move(row));
  }
  return table;
}

} // namespace headprune
