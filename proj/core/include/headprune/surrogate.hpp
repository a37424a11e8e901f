#pragma once

#include "headprune/corpus.hpp"
#include "headprune/mask.hpp"
#include "headprune/scorer.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace headprune {

/// Layer widths [input, hidden..., 1]; at most two hidden layers.
struct Architecture {
  std::vector<std::size_t> layer_sizes;

  /// Reference architectures keyed by model alias ("distilgpt2", "gpt2", "gpt-neo-125m",
  /// "gpt-neo-1.3b", "gpt-j-6b", "llama-2-7b"). Throws ConfigError for unknown names.
  static Architecture for_model(std::string_view alias);
  /// Parses "72,64,32,1" or "[72,64,32,1]", or a model alias.
  static Architecture parse(std::string_view text);
  /// Small-model default: [n, 64, 32, 1].
  static Architecture small(std::size_t n) { return Architecture{{n, 64, 32, 1}}; }

  void validate() const;
  std::string to_string() const;
};

/// Records how a regressor was trained; persisted alongside its parameters.
struct TrainingInfo {
  std::string target;
  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double train_mse = 0.0;
  double validation_mse = 0.0;
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  std::size_t patience = 0;
  double validation_fraction = 0.0;
};

/// Fully connected regressor with rectifier hidden units and a single linear output.
///
/// Parameters live in one flat buffer, layer by layer: an input-major weight block
/// (weight of input i into unit j at i * out + j) followed by the unit biases. The
/// first layer only ever sees 0/1 masks, so it is evaluated by summing the weight rows
/// of the set heads.
class SurrogateRegressor final : public MaskScorer {
public:
  static constexpr double kOutputFloor = 0.0;
  static constexpr double kOutputCeiling = 1.5;

  SurrogateRegressor() = default;
  explicit SurrogateRegressor(Architecture arch);

  const Architecture& architecture() const noexcept { return arch_; }
  std::size_t input_width() const noexcept override { return arch_.layer_sizes.front(); }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  /// He-uniform weights, zero biases.
  void initialize(Rng& rng);

  /// Unclamped network output. Throws DimensionError on width mismatch.
  double forward(const HeadMask& s) const;
  /// Output clamped to [kOutputFloor, kOutputCeiling]; what the annealer consumes.
  double predict(const HeadMask& s) const;
  double score(const HeadMask& s) const override { return predict(s); }

  /// Mean squared error over the given samples; the gradient of that mean is written to
  /// `grad` (size parameter_count()). Returns the loss.
  double loss_and_gradient(std::span<const HeadMask> masks, std::span<const double> targets,
                           std::span<double> grad) const;
  double mse(std::span<const HeadMask> masks, std::span<const double> targets) const;

  /// Signs of every hidden pre-activation over the samples; used to spot rectifier kinks.
  std::vector<bool> activation_pattern(std::span<const HeadMask> masks) const;

  ScalingSpec scaling;
  TrainingInfo info;

  std::size_t weight_offset(std::size_t layer) const noexcept { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const noexcept {
    return offsets_[layer] + arch_.layer_sizes[layer] * arch_.layer_sizes[layer + 1];
  }

private:
  Architecture arch_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

enum class Target { bias, ppl };

std::string_view to_string(Target t) noexcept;

struct TrainOptions {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t patience = 5;
  std::size_t max_epochs = 300;
  double validation_fraction = 0.05;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

struct TrainResult {
  SurrogateRegressor model;
  std::vector<double> train_history;      // per-epoch training MSE
  std::vector<double> validation_history; // per-epoch validation MSE
  std::size_t best_epoch = 0;             // 0-based index into the histories
  double best_validation_mse = 0.0;
  std::size_t train_count = 0;
  std::size_t validation_count = 0;
};

/// Adam on mean squared error with early stopping: training halts once validation MSE
/// has not improved for `patience` epochs, and the best-validation parameters are
/// returned. The train/validation split depends only on the seed and corpus size, so
/// both targets trained with one seed share the same split.
/// Throws DimensionError when the architecture does not match the corpus width and
/// DivergenceError on a non-finite loss.
TrainResult train(const TrainingCorpus& corpus, Target target, const Architecture& arch, const TrainOptions& options);

struct FiniteDiffReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kink = 0;
};

/// Compares loss_and_gradient against central differences on up to `max_parameters`
/// randomly chosen parameters (all of them when 0). A parameter is skipped when the
/// +/- perturbation changes any rectifier's active set. The error of one parameter is
/// |analytic - numeric| / (|numeric| + 1e-12).
FiniteDiffReport finite_diff_check(const SurrogateRegressor& model, std::span<const HeadMask> masks,
                                   std::span<const double> targets, double step, std::size_t max_parameters,
                                   std::uint64_t seed);

/// Persistence: a versioned JSON document holding architecture, parameters, scaling and
/// training metadata. Doubles are written in shortest round-trip form.
void save_regressor(const std::filesystem::path& path, const SurrogateRegressor& model);
SurrogateRegressor load_regressor(const std::filesystem::path& path);
std::string regressor_to_json(const SurrogateRegressor& model);
SurrogateRegressor regressor_from_json(std::string_view text, std::string_view source);

} // namespace headprune
