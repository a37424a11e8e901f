#pragma once

#include "headprune/mask.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace headprune {

struct ToxicityRow {
  std::string prompt_id;
  std::string subgroup;
  double toxicity = 0.0;
};

/// Pre-scored continuations for one bias group (e.g. gender), labelled by subgroup.
struct PromptToxicityTable {
  std::string group_name;
  std::vector<ToxicityRow> rows;
  /// Optional list of subgroups that must be present; when empty, the subgroups are the
  /// distinct labels that appear in `rows`.
  std::vector<std::string> declared_subgroups;
};

struct SequenceLossRow {
  std::string sequence_id;
  double mean_nll = 0.0;
  std::uint64_t token_count = 0;
};

struct SequenceLossTable {
  std::vector<SequenceLossRow> rows;
};

/// Subgroup toxicities, their unweighted mean, and the absolute-deviation bias.
///
/// `mean_toxicity` is the plain prompt-level average and is reported separately so a
/// low average toxicity is never mistaken for low bias.
struct BiasReport {
  std::map<std::string, double> per_subgroup_toxicity;
  std::map<std::string, std::size_t> per_subgroup_count;
  double group_mean = 0.0;
  double bias = 0.0;
  double mean_toxicity = 0.0;
};

/// bias = sum_g |T_G - T_g|, T_g the mean toxicity of subgroup g, T_G the unweighted
/// mean of the T_g. Throws DataError on an empty table or empty declared subgroup and
/// ValidationError on toxicity outside [0,1].
BiasReport compute_bias(const PromptToxicityTable& table);

/// Corpus perplexity, token-weighted: exp(sum(mean_nll * tokens) / sum(tokens)).
double compute_perplexity(const SequenceLossTable& table);

/// Draws round(fraction * |D_g|) prompts from every subgroup uniformly without
/// replacement, so subgroup shares survive up to one row of rounding. The result is
/// shuffled. Throws ConfigError when fraction * |D_g| < 1 for some subgroup.
PromptToxicityTable stratified_subsample(const PromptToxicityTable& table, double fraction, Rng& rng);
PromptToxicityTable stratified_subsample(const PromptToxicityTable& table, double fraction, std::uint64_t seed);

/// Readers accept JSON-lines or delimited text with a header row (comma or tab).
/// Field names: prompt_id, subgroup, toxicity / sequence_id, mean_nll, token_count.
PromptToxicityTable read_toxicity_table(const std::filesystem::path& path, std::string group_name = {});
SequenceLossTable read_loss_table(const std::filesystem::path& path);

} // namespace headprune
