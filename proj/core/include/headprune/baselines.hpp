#pragma once

#include "headprune/mask.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace headprune {

/// Single-head ablation effects: z_bias = bias(full) - bias(without h), and likewise
/// z_ppl = ppl(full) - ppl(without h).
struct HeadEffect {
  std::size_t head = 0;
  double z_bias = 0.0;
  double z_ppl = 0.0;
};

/// One row per head, indexed densely by head.
struct HeadEffectTable {
  std::vector<HeadEffect> rows;

  std::size_t size() const noexcept { return rows.size(); }
  /// Throws DataError unless the head indices are exactly 0..N-1.
  void validate() const;
};

/// Which end of the z_ppl ordering is protected from pruning.
enum class ProtectOrder {
  highest_z_ppl, // non-increasing z_ppl, the published ordering
  lowest_z_ppl,  // heads whose removal raises perplexity the most
};

struct FaspConfig {
  double alpha = 0.1; // fraction of all heads to prune
  double gamma = 0.3; // fraction of all heads protected as utility-critical
  ProtectOrder protect = ProtectOrder::highest_z_ppl;
};

/// floor(ratio * n), tolerant of representation error (0.3 * 10 counts as 3).
std::size_t ratio_count(double ratio, std::size_t n) noexcept;

/// The protected set: the top floor(gamma * N) heads under the configured z_ppl ordering.
HeadMask fasp_protected(const HeadEffectTable& effects, const FaspConfig& cfg);

/// Protects floor(gamma*N) heads by z_ppl, then prunes the floor(alpha*N) unprotected
/// heads with the largest z_bias. Ties go to the lower head index.
/// Throws ConfigError when floor(alpha*N) exceeds the unprotected pool.
HeadMask fasp_select(const HeadEffectTable& effects, const FaspConfig& cfg);

/// The alpha grid 0.02, 0.04, ..., 0.20.
std::vector<double> fasp_alpha_grid();

enum class PruneDirection { lowest, highest };

/// Prunes floor(alpha*N) heads ranked by score in the given direction; ties go to the
/// lower head index.
HeadMask score_ranked_select(std::span<const double> scores, double alpha, PruneDirection direction);

/// Uniform random mask whose weight is uniform on [1, max(1, floor(alpha_max*N))].
HeadMask random_select(std::size_t n, double alpha_max, Rng& rng);
HeadMask random_select(std::size_t n, double alpha_max, std::uint64_t seed);

/// Delimited text with header head_index,z_bias,z_ppl.
HeadEffectTable read_head_effects(const std::filesystem::path& path);
std::string head_effects_to_csv(const HeadEffectTable& table);

/// Delimited text with header head_index,score; returns scores indexed by head.
std::vector<double> read_head_scores(const std::filesystem::path& path);

} // namespace headprune
