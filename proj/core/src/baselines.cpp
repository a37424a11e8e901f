#include "headprune/baselines.hpp"

#include "headprune/errors.hpp"
#include "headprune/io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace headprune {

void HeadEffectTable::validate() const {
  std::vector<bool> seen(rows.size(), false);
  for (const auto& r : rows) {
    if (r.head >= rows.size() || seen[r.head])
      throw DataError("head effect table must hold exactly one row per head index 0.." +
                      std::to_string(rows.size() ? rows.size() - 1 : 0));
    seen[r.head] = true;
  }
}

std::size_t ratio_count(double ratio, std::size_t n) noexcept {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

namespace {

// Head indices ordered by key, descending, ties to the lower index.
std::vector<std::size_t> rank_descending(std::span<const double> key) {
  std::vector<std::size_t> order(key.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  return order;
}

void check_ratio(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0,1]");
}

} // namespace

HeadMask fasp_protected(const HeadEffectTable& effects, const FaspConfig& cfg) {
  effects.validate();
  check_ratio(cfg.gamma, "gamma");
  const std::size_t n = effects.size();
  std::vector<double> key(n);
  for (const auto& r : effects.rows) key[r.head] = cfg.protect == ProtectOrder::highest_z_ppl ? r.z_ppl : -r.z_ppl;
  const auto order = rank_descending(key);
  HeadMask prot(n);
  for (std::size_t k = 0; k < ratio_count(cfg.gamma, n); ++k) prot.set(order[k]);
  return prot;
}

HeadMask fasp_select(const HeadEffectTable& effects, const FaspConfig& cfg) {
  check_ratio(cfg.alpha, "alpha");
  const HeadMask prot = fasp_protected(effects, cfg);
  const std::size_t n = effects.size();
  const std::size_t prune = ratio_count(cfg.alpha, n);
  const std::size_t pool = n - prot.count();
  if (prune > pool)
    throw ConfigError("FASP cannot prune " + std::to_string(prune) + " heads from " + std::to_string(pool) +
                      " unprotected heads");

  std::vector<double> z_bias(n);
  for (const auto& r : effects.rows) z_bias[r.head] = r.z_bias;
  HeadMask mask(n);
  std::size_t taken = 0;
  for (std::size_t h : rank_descending(z_bias)) {
    if (taken == prune) break;
    if (prot.test(h)) continue;
    mask.set(h);
    ++taken;
  }
  return mask;
}

std::vector<double> fasp_alpha_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 10; ++k) grid.push_back(0.02 * k);
  return grid;
}

HeadMask score_ranked_select(std::span<const double> scores, double alpha, PruneDirection direction) {
  check_ratio(alpha, "alpha");
  const std::size_t n = scores.size();
  std::vector<double> key(scores.begin(), scores.end());
  if (direction == PruneDirection::lowest)
    for (auto& k : key) k = -k;
  const auto order = rank_descending(key);
  HeadMask mask(n);
  for (std::size_t k = 0; k < ratio_count(alpha, n); ++k) mask.set(order[k]);
  return mask;
}

HeadMask random_select(std::size_t n, double alpha_max, Rng& rng) {
  if (!(alpha_max > 0.0 && alpha_max <= 1.0)) throw ConfigError("alpha_max must lie in (0,1]");
  if (n == 0) throw ConfigError("random_select: no heads");
  const std::size_t upper = std::max<std::size_t>(1, ratio_count(alpha_max, n));
  return random_state(n, WeightBounds{1, upper}, rng);
}

HeadMask random_select(std::size_t n, double alpha_max, std::uint64_t seed) {
  Rng rng(seed);
  return random_select(n, alpha_max, rng);
}

HeadEffectTable read_head_effects(const std::filesystem::path& path) {
  const std::string src = path.string();
  HeadEffectTable table;
  for (const auto& rec : io::read_records(path)) {
    const long long h = rec.integer("head_index", src);
    if (h < 0) throw ParseError(src, rec.line, "negative head_index");
    table.rows.push_back({static_cast<std::size_t>(h), rec.number("z_bias", src), rec.number("z_ppl", src)});
  }
  try {
    table.validate();
  } catch (const DataError& e) {
    throw ParseError(src, 0, e.what());
  }
  std::sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) { return a.head < b.head; });
  return table;
}

std::string head_effects_to_csv(const HeadEffectTable& table) {
  std::string out = "head_index,z_bias,z_ppl\n";
  for (const auto& r : table.rows)
    out += std::to_string(r.head) + "," + io::format_double(r.z_bias) + "," + io::format_double(r.z_ppl) + "\n";
  return out;
}

std::vector<double> read_head_scores(const std::filesystem::path& path) {
  const std::string src = path.string();
  const auto records = io::read_records(path);
  std::vector<double> scores(records.size(), 0.0);
  std::vector<bool> seen(records.size(), false);
  for (const auto& rec : records) {
    const long long h = rec.integer("head_index", src);
    if (h < 0 || static_cast<std::size_t>(h) >= records.size() || seen[static_cast<std::size_t>(h)])
      throw ParseError(src, rec.line, "head_index must be dense in [0, N) without repeats");
    seen[static_cast<std::size_t>(h)] = true;
    scores[static_cast<std::size_t>(h)] = rec.number("score", src);
  }
  return scores;
}

} // namespace headprune
