#include "common.hpp"

#include "headprune/errors.hpp"
#include "headprune/io.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>

#ifndef HEADPRUNE_VERSION
#define HEADPRUNE_VERSION "0.0.0"
#endif

namespace headprune::cli {

std::string sha256_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 unavailable");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string tool_version() { return HEADPRUNE_VERSION; }

RunManifest::RunManifest(std::string command, const Context& ctx)
    : command_(std::move(command)), argv_(ctx.argv), config_(ctx.config_snapshot), started_(utc_now()) {}

void RunManifest::input(const fs::path& path) {
  inputs_.push_back({{"path", path.string()}, {"sha256", sha256_hex(path)}});
}

void RunManifest::output(const fs::path& path) { outputs_.push_back(path.string()); }

void RunManifest::write(const fs::path& path) {
  ojson j;
  j["format"] = "headprune.manifest";
  j["command"] = command_;
  j["tool_version"] = tool_version();
  j["argv"] = argv_;
  j["config"] = config_;
  j["inputs"] = inputs_;
  j["outputs"] = outputs_;
  j["started_at"] = started_;
  j["finished_at"] = utc_now();
  j["metrics"] = metrics_;
  write_json(path, j);
}

fs::path manifest_in(const fs::path& dir) { return dir / "manifest.json"; }

fs::path manifest_beside(const fs::path& file) {
  fs::path p = file;
  p += ".manifest.json";
  return p;
}

std::string manifest_ref(const fs::path& manifest, const fs::path& artifact) {
  const fs::path base = artifact.has_parent_path() ? artifact.parent_path() : fs::path(".");
  return manifest.lexically_relative(base).string();
}

std::string manifest_comment(const fs::path& manifest, const fs::path& artifact) {
  return "# manifest: " + manifest_ref(manifest, artifact) + "\n";
}

void write_json(const fs::path& path, const ojson& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

ojson read_json(const fs::path& path) {
  try {
    return ojson::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, std::string("invalid JSON: ") + e.what());
  }
}

WeightBounds resolve_bounds(std::size_t n, const BoundsOptions& opt) {
  if (opt.eta && opt.n_upper) throw ConfigError("give either --eta or --n-upper, not both");
  WeightBounds b{opt.n_lower.value_or(0), opt.n_upper.value_or(n)};
  if (opt.eta) {
    if (!(*opt.eta > 0.0 && *opt.eta <= 1.0)) throw ConfigError("--eta must lie in (0,1]");
    b.upper = static_cast<std::size_t>(std::ceil(*opt.eta * static_cast<double>(n) - 1e-9));
  }
  b.validate(n);
  return b;
}

ModelPair load_models(const fs::path& bias_path, const fs::path& ppl_path) {
  ModelPair m{load_regressor(bias_path), load_regressor(ppl_path)};
  if (m.bias.input_width() != m.ppl.input_width())
    throw ConfigError("surrogates disagree on head count: " + bias_path.string() + " has " +
                      std::to_string(m.bias.input_width()) + ", " + ppl_path.string() + " has " +
                      std::to_string(m.ppl.input_width()));
  return m;
}

std::optional<MaskEvaluator> MaskEvaluator::from(const std::optional<SyntheticObjective>& objective,
                                                 const std::optional<ModelPair>& models) {
  if (!objective && !models) return std::nullopt;
  MaskEvaluator e;
  if (objective) e.objective_ = &*objective;
  else e.models_ = &*models;
  return e;
}

Measurement MaskEvaluator::measure(const HeadMask& s) const {
  if (objective_) return evaluate_exact(*objective_, s);
  return {models_->bias.scaling.unscale_bias(models_->bias.predict(s)),
          models_->ppl.scaling.unscale_ppl(models_->ppl.predict(s))};
}

std::size_t MaskEvaluator::width() const noexcept {
  return objective_ ? objective_->n : models_->bias.input_width();
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '[' || c == ']') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

} // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& tok : split_list(text)) {
    // "a:b" expands to the half-open range [a, b).
    const auto colon = tok.find(':');
    try {
      if (colon == std::string::npos) {
        seeds.push_back(std::stoull(tok));
      } else {
        const auto lo = std::stoull(tok.substr(0, colon)), hi = std::stoull(tok.substr(colon + 1));
        for (auto s = lo; s < hi; ++s) seeds.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed '" + tok + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw ConfigError("bad number '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

} // namespace headprune::cli
