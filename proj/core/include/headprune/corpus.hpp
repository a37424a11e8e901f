#pragma once

#include "headprune/mask.hpp"

#include <algorithm>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace headprune {

/// One measured configuration: which heads were pruned and the resulting bias and perplexity.
struct SampleRecord {
  HeadMask mask;
  double bias = 0.0;
  double ppl = 0.0;
};

/// Maps raw bias/perplexity into the [0,1] regression range and back.
///
/// Bias is divided by its observed maximum. Perplexity is clamped at `ppl_max` and then
/// divided by it; `sigma` is the standard-deviation ceiling used to pick `ppl_max`.
struct ScalingSpec {
  double bias_max = 1.0;
  double ppl_max = 1.0;
  double sigma = 10.0;

  double scale_bias(double b) const noexcept { return b / bias_max; }
  double scale_ppl(double p) const noexcept { return std::min(p, ppl_max) / ppl_max; }
  double unscale_bias(double y) const noexcept { return y * bias_max; }
  double unscale_ppl(double y) const noexcept { return y * ppl_max; }
};

/// Scaled regression targets for the two surrogates, sharing one set of masks.
struct TrainingCorpus {
  std::vector<HeadMask> masks;
  std::vector<double> bias_targets;
  std::vector<double> ppl_targets;
  ScalingSpec scaling;

  std::size_t size() const noexcept { return masks.size(); }
  std::size_t width() const noexcept { return masks.empty() ? 0 : masks.front().size(); }
};

/// Population standard deviation (divides by n).
double population_std(std::span<const double> values);

/// Largest distinct perplexity value p such that clamping every value at p leaves a
/// standard deviation <= sigma. Throws DataError on empty or non-positive input.
double choose_ppl_clamp(std::span<const double> ppl, double sigma);

/// Validates the raw samples and produces scaled targets plus the ScalingSpec that
/// inverts them. Throws DimensionError when masks disagree on width, DataError on
/// degenerate targets (non-positive maximum bias, non-positive perplexity).
TrainingCorpus preprocess(std::span<const SampleRecord> raw, double sigma);

/// Corpus interchange: JSON-lines with fields mask, bias, ppl. The mask may be a
/// '0'/'1' string or a comma-separated 0/1 list.
std::vector<SampleRecord> read_corpus(const std::filesystem::path& path);
std::vector<SampleRecord> parse_corpus(std::string_view content, std::string_view source);
std::string corpus_to_jsonl(std::span<const SampleRecord> records);
void write_corpus(const std::filesystem::path& path, std::span<const SampleRecord> records);

} // namespace headprune
