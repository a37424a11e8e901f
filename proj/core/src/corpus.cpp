#include "headprune/corpus.hpp"

#include "headprune/errors.hpp"
#include "headprune/io.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>

namespace headprune {

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

namespace {

double clamped_std(std::span<const double> values, double cap) {
  std::vector<double> c(values.begin(), values.end());
  for (auto& v : c) v = std::min(v, cap);
  return population_std(c);
}

} // namespace

double choose_ppl_clamp(std::span<const double> ppl, double sigma) {
  if (ppl.empty()) throw DataError("choose_ppl_clamp: no perplexities");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  for (double p : ppl)
    if (!std::isfinite(p) || p <= 0.0) throw DataError("perplexity values must be finite and positive");

  std::vector<double> sorted(ppl.begin(), ppl.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  // Prefix sums over the ascending values: clamping at sorted[j] keeps sorted[0..j) and
  // replaces the rest by sorted[j].
  std::vector<long double> sum(n + 1, 0.0L), sumsq(n + 1, 0.0L);
  for (std::size_t i = 0; i < n; ++i) {
    sum[i + 1] = sum[i] + sorted[i];
    sumsq[i + 1] = sumsq[i] + static_cast<long double>(sorted[i]) * sorted[i];
  }

  std::size_t j = n;
  while (j > 0) {
    // First index of the next distinct value going downward.
    std::size_t first = j - 1;
    while (first > 0 && sorted[first - 1] == sorted[j - 1]) --first;
    const long double cap = sorted[first];
    const long double k = static_cast<long double>(n - first);
    const long double s = sum[first] + k * cap;
    const long double sq = sumsq[first] + k * cap * cap;
    const long double nn = static_cast<long double>(n);
    const long double var = std::max(0.0L, sq / nn - (s / nn) * (s / nn));
    // The prefix-sum variance is only a filter; the exact two-pass value decides.
    if (std::sqrt(static_cast<double>(var)) <= sigma * (1.0 + 1e-9) &&
        clamped_std(ppl, static_cast<double>(cap)) <= sigma)
      return static_cast<double>(cap);
    j = first;
  }
  return sorted.front(); // unreachable: clamping at the minimum gives zero spread
}

TrainingCorpus preprocess(std::span<const SampleRecord> raw, double sigma) {
  if (raw.empty()) throw DataError("preprocess: empty corpus");
  const std::size_t width = raw.front().mask.size();
  double bias_max = 0.0;
  std::vector<double> ppl;
  ppl.reserve(raw.size());
  for (const auto& r : raw) {
    if (r.mask.size() != width)
      throw DimensionError("corpus masks disagree on width: " + std::to_string(width) + " vs " +
                           std::to_string(r.mask.size()));
    if (!std::isfinite(r.bias) || r.bias < 0.0) throw DataError("bias values must be finite and non-negative");
    bias_max = std::max(bias_max, r.bias);
    ppl.push_back(r.ppl);
  }
  if (!(bias_max > 0.0)) throw DataError("preprocess: every bias is zero, cannot scale");

  TrainingCorpus corpus;
  corpus.scaling.bias_max = bias_max;
  corpus.scaling.ppl_max = choose_ppl_clamp(ppl, sigma);
  corpus.scaling.sigma = sigma;
  corpus.masks.reserve(raw.size());
  corpus.bias_targets.reserve(raw.size());
  corpus.ppl_targets.reserve(raw.size());
  for (const auto& r : raw) {
    corpus.masks.push_back(r.mask);
    corpus.bias_targets.push_back(corpus.scaling.scale_bias(r.bias));
    corpus.ppl_targets.push_back(corpus.scaling.scale_ppl(r.ppl));
  }
  return corpus;
}

std::vector<SampleRecord> parse_corpus(std::string_view content, std::string_view source) {
  const std::string src(source);
  std::vector<SampleRecord> out;
  for (const auto& rec : io::parse_records(content, source)) {
    SampleRecord s;
    try {
      s.mask = HeadMask::parse(rec.at("mask", src));
    } catch (const ValidationError& e) {
      throw ParseError(src, rec.line, e.what());
    }
    s.bias = rec.number("bias", src);
    s.ppl = rec.number("ppl", src);
    if (!std::isfinite(s.bias) || !std::isfinite(s.ppl)) throw ParseError(src, rec.line, "bias and ppl must be finite");
    if (!out.empty() && out.front().mask.size() != s.mask.size())
      throw ParseError(src, rec.line,
                       "mask width " + std::to_string(s.mask.size()) + " differs from " +
                           std::to_string(out.front().mask.size()));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SampleRecord> read_corpus(const std::filesystem::path& path) {
  return parse_corpus(io::read_file(path), path.string());
}

std::string corpus_to_jsonl(std::span<const SampleRecord> records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["mask"] = r.mask.to_string();
    j["bias"] = r.bias;
    j["ppl"] = r.ppl;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const SampleRecord> records) {
  io::write_file_atomic(path, corpus_to_jsonl(records));
}

} // namespace headprune
