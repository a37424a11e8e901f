#pragma once

#include "headprune/mask.hpp"
#include "headprune/surrogate.hpp"
#include "headprune/synthetic.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace headprune::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kParseFailure = 2,
  kConfigFailure = 3,
  kRuntimeFailure = 4,
};

/// What every command receives besides its own options.
struct Context {
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
  std::vector<std::string> argv; // without the program name
  std::string config_snapshot;   // resolved options of the subcommand, INI text
};

std::string sha256_hex(const fs::path& path);
std::string utc_now();
std::string tool_version();

/// Provenance for one command invocation. Timing and other run-dependent numbers go in
/// `metrics` so the artifacts themselves stay reproducible.
class RunManifest {
public:
  RunManifest(std::string command, const Context& ctx);

  void input(const fs::path& path);
  void output(const fs::path& path);
  ojson& metrics() { return metrics_; }
  /// Stamps the finish time and writes the manifest atomically.
  void write(const fs::path& path);

private:
  std::string command_;
  std::vector<std::string> argv_;
  std::string config_;
  std::string started_;
  ojson inputs_ = ojson::array();
  ojson outputs_ = ojson::array();
  ojson metrics_ = ojson::object();
};

/// Manifest location for a directory of outputs or a single output file.
fs::path manifest_in(const fs::path& dir);
fs::path manifest_beside(const fs::path& file);

/// Reference line for delimited and JSON-lines artifacts; readers skip '#' lines.
std::string manifest_comment(const fs::path& manifest, const fs::path& artifact);
std::string manifest_ref(const fs::path& manifest, const fs::path& artifact);

void write_json(const fs::path& path, const ojson& j);
ojson read_json(const fs::path& path);

struct BoundsOptions {
  std::optional<std::size_t> n_lower;
  std::optional<std::size_t> n_upper;
  std::optional<double> eta; // n_upper = ceil(eta * N)
};

WeightBounds resolve_bounds(std::size_t n, const BoundsOptions& opt);

struct ModelPair {
  SurrogateRegressor bias;
  SurrogateRegressor ppl;
};

/// Throws ConfigError when the two regressors disagree on head count.
ModelPair load_models(const fs::path& bias_path, const fs::path& ppl_path);

/// Reports raw bias and perplexity for masks, from a synthetic objective when one is
/// given and from the surrogates otherwise.
class MaskEvaluator {
public:
  static std::optional<MaskEvaluator> from(const std::optional<SyntheticObjective>& objective,
                                           const std::optional<ModelPair>& models);

  Measurement measure(const HeadMask& s) const;
  std::string_view source() const noexcept { return objective_ ? "objective" : "surrogate"; }
  std::size_t width() const noexcept;

private:
  const SyntheticObjective* objective_ = nullptr;
  const ModelPair* models_ = nullptr;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<double> parse_real_list(const std::string& text);

/// Fixed three-decimal rendering used in printed reports.
std::string fixed3(double v);

} // namespace headprune::cli
