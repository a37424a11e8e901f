#include "headprune/surrogate.hpp"

#include "headprune/errors.hpp"
#include "headprune/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace headprune {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "headprune.surrogate";

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Per-sample activations, reused across calls on one thread.
struct Workspace {
  std::vector<std::vector<double>> z; // pre-activations per weight layer
  std::vector<std::vector<double>> a; // post-activations per weight layer (last is identity)
  std::vector<std::vector<double>> delta;
  std::vector<std::size_t> shaped_for;

  void shape(const std::vector<std::size_t>& sizes) {
    if (sizes == shaped_for) return;
    shaped_for = sizes;
    const std::size_t layers = sizes.size() - 1;
    z.assign(layers, {});
    a.assign(layers, {});
    delta.assign(layers, {});
    for (std::size_t l = 0; l < layers; ++l) {
      z[l].assign(sizes[l + 1], 0.0);
      a[l].assign(sizes[l + 1], 0.0);
      delta[l].assign(sizes[l + 1], 0.0);
    }
  }
};

Workspace& thread_workspace() {
  thread_local Workspace ws;
  return ws;
}

} // namespace

Architecture Architecture::for_model(std::string_view alias) {
  const std::string key = lower(alias);
  if (key == "distilgpt2" || key == "distilgpt-2") return {{72, 64, 32, 1}};
  if (key == "gpt2" || key == "gpt-2") return {{144, 64, 32, 1}};
  if (key == "gpt-neo-125m") return {{144, 64, 32, 1}};
  if (key == "gpt-neo-1.3b") return {{384, 256, 128, 1}};
  if (key == "gpt-j-6b") return {{448, 256, 128, 1}};
  if (key == "llama-2-7b") return {{1024, 256, 128, 1}};
  throw ConfigError("unknown model alias '" + std::string(alias) + "'");
}

Architecture Architecture::parse(std::string_view text) {
  std::string cleaned;
  for (char c : text)
    if (c != '[' && c != ']' && !std::isspace(static_cast<unsigned char>(c))) cleaned += c;
  if (cleaned.empty()) throw ConfigError("empty architecture");
  if (!std::isdigit(static_cast<unsigned char>(cleaned.front()))) return for_model(cleaned);

  Architecture arch;
  std::stringstream ss(cleaned);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v == 0) throw ConfigError("invalid layer size '" + item + "' in architecture");
    arch.layer_sizes.push_back(v);
  }
  arch.validate();
  return arch;
}

void Architecture::validate() const {
  if (layer_sizes.size() < 2 || layer_sizes.size() > 4)
    throw ConfigError("architecture needs an input, at most two hidden layers, and one output");
  if (layer_sizes.back() != 1) throw ConfigError("architecture output width must be 1");
  for (auto s : layer_sizes)
    if (s == 0) throw ConfigError("architecture layer sizes must be positive");
}

std::string Architecture::to_string() const {
  std::string out = "[";
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(layer_sizes[i]);
  }
  return out + "]";
}

SurrogateRegressor::SurrogateRegressor(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < arch_.layer_sizes.size(); ++l) {
    offsets_.push_back(total);
    total += arch_.layer_sizes[l] * arch_.layer_sizes[l + 1] + arch_.layer_sizes[l + 1];
  }
  params_.assign(total, 0.0);
}

void SurrogateRegressor::initialize(Rng& rng) {
  const auto& sz = arch_.layer_sizes;
  for (std::size_t l = 0; l + 1 < sz.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(sz[l]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t w = weight_offset(l);
    for (std::size_t k = 0; k < sz[l] * sz[l + 1]; ++k) params_[w + k] = dist(rng);
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(bias_offset(l)), sz[l + 1], 0.0);
  }
}

namespace {

// Forward pass filling ws.z / ws.a. Returns the output.
double run_forward(const SurrogateRegressor& m, const HeadMask& s, Workspace& ws) {
  const auto& sz = m.architecture().layer_sizes;
  const auto p = m.parameters();
  const std::size_t layers = sz.size() - 1;
  ws.shape(sz);

  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sz[l];
    const std::size_t out = sz[l + 1];
    const double* w = p.data() + m.weight_offset(l);
    const double* b = p.data() + m.bias_offset(l);
    double* z = ws.z[l].data();
    std::copy(b, b + out, z);
    if (l == 0) {
      s.for_each_set([&](std::size_t i) {
        const double* row = w + i * out;
        for (std::size_t j = 0; j < out; ++j) z[j] += row[j];
      });
    } else {
      const double* x = ws.a[l - 1].data();
      for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = w + i * out;
        for (std::size_t j = 0; j < out; ++j) z[j] += xi * row[j];
      }
    }
    double* a = ws.a[l].data();
    if (l + 1 < layers) {
      for (std::size_t j = 0; j < out; ++j) a[j] = z[j] > 0.0 ? z[j] : 0.0;
    } else {
      std::copy(z, z + out, a);
    }
  }
  return ws.a.back()[0];
}

// Adds d(scale * (f(s) - y)^2)/dtheta into grad. Returns (f(s) - y)^2.
double accumulate_gradient(const SurrogateRegressor& m, const HeadMask& s, double y, double scale,
                           std::span<double> grad, Workspace& ws) {
  const auto& sz = m.architecture().layer_sizes;
  const auto p = m.parameters();
  const std::size_t layers = sz.size() - 1;
  const double err = run_forward(m, s, ws) - y;

  ws.delta.back()[0] = 2.0 * err * scale;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = sz[l];
    const std::size_t out = sz[l + 1];
    const double* w = p.data() + m.weight_offset(l);
    double* gw = grad.data() + m.weight_offset(l);
    double* gb = grad.data() + m.bias_offset(l);
    const double* d = ws.delta[l].data();
    for (std::size_t j = 0; j < out; ++j) gb[j] += d[j];

    if (l == 0) {
      s.for_each_set([&](std::size_t i) {
        double* row = gw + i * out;
        for (std::size_t j = 0; j < out; ++j) row[j] += d[j];
      });
      break;
    }

    const double* x = ws.a[l - 1].data();
    const double* zprev = ws.z[l - 1].data();
    double* dprev = ws.delta[l - 1].data();
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = x[i];
      const double* row = w + i * out;
      if (xi != 0.0) {
        double* grow = gw + i * out;
        for (std::size_t j = 0; j < out; ++j) grow[j] += xi * d[j];
      }
      double acc = 0.0;
      if (zprev[i] > 0.0)
        for (std::size_t j = 0; j < out; ++j) acc += row[j] * d[j];
      dprev[i] = acc;
    }
  }
  return err * err;
}

} // namespace

double SurrogateRegressor::forward(const HeadMask& s) const {
  if (s.size() != input_width())
    throw DimensionError("surrogate expects " + std::to_string(input_width()) + " heads, mask has " +
                         std::to_string(s.size()));
  return run_forward(*this, s, thread_workspace());
}

double SurrogateRegressor::predict(const HeadMask& s) const {
  return std::clamp(forward(s), kOutputFloor, kOutputCeiling);
}

double SurrogateRegressor::loss_and_gradient(std::span<const HeadMask> masks, std::span<const double> targets,
                                             std::span<double> grad) const {
  if (masks.size() != targets.size() || masks.empty()) throw DataError("loss_and_gradient: bad sample set");
  if (grad.size() != params_.size()) throw DimensionError("gradient buffer has the wrong size");
  std::fill(grad.begin(), grad.end(), 0.0);
  const double scale = 1.0 / static_cast<double>(masks.size());
  double loss = 0.0;
  auto& ws = thread_workspace();
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (masks[k].size() != input_width()) throw DimensionError("sample width does not match the network input");
    loss += accumulate_gradient(*this, masks[k], targets[k], scale, grad, ws);
  }
  return loss * scale;
}

double SurrogateRegressor::mse(std::span<const HeadMask> masks, std::span<const double> targets) const {
  if (masks.size() != targets.size() || masks.empty()) throw DataError("mse: bad sample set");
  double sum = 0.0;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const double e = forward(masks[k]) - targets[k];
    sum += e * e;
  }
  return sum / static_cast<double>(masks.size());
}

std::vector<bool> SurrogateRegressor::activation_pattern(std::span<const HeadMask> masks) const {
  std::vector<bool> pattern;
  auto& ws = thread_workspace();
  for (const auto& s : masks) {
    run_forward(*this, s, ws);
    for (std::size_t l = 0; l + 1 < ws.z.size(); ++l)
      for (double z : ws.z[l]) pattern.push_back(z > 0.0);
  }
  return pattern;
}

std::string_view to_string(Target t) noexcept { return t == Target::bias ? "bias" : "ppl"; }

TrainResult train(const TrainingCorpus& corpus, Target target, const Architecture& arch, const TrainOptions& options) {
  arch.validate();
  if (corpus.size() < 2) throw DataError("train: need at least two samples");
  if (arch.layer_sizes.front() != corpus.width())
    throw DimensionError("architecture input " + std::to_string(arch.layer_sizes.front()) + " does not match " +
                         std::to_string(corpus.width()) + " heads");
  if (!(options.validation_fraction > 0.0 && options.validation_fraction < 1.0))
    throw ConfigError("validation fraction must lie in (0,1)");
  if (options.batch_size == 0 || options.max_epochs == 0) throw ConfigError("batch size and max epochs must be positive");

  const auto& y = target == Target::bias ? corpus.bias_targets : corpus.ppl_targets;
  const std::size_t n = corpus.size();

  Rng split_rng(options.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t val_count = static_cast<std::size_t>(std::llround(options.validation_fraction * static_cast<double>(n)));
  val_count = std::clamp<std::size_t>(val_count, 1, n - 1);
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(val_count));
  std::vector<HeadMask> val_masks;
  std::vector<double> val_y;
  for (auto it = order.end() - static_cast<std::ptrdiff_t>(val_count); it != order.end(); ++it) {
    val_masks.push_back(corpus.masks[*it]);
    val_y.push_back(y[*it]);
  }

  TrainResult result;
  result.train_count = train_idx.size();
  result.validation_count = val_count;
  SurrogateRegressor model(arch);
  Rng init_rng(options.seed + 0x9e3779b97f4a7c15ULL);
  model.initialize(init_rng);
  Rng shuffle_rng(options.seed + 0x632be59bd9b4e019ULL);

  const std::size_t np = model.parameter_count();
  std::vector<double> grad(np), m1(np, 0.0), m2(np, 0.0);
  std::vector<double> best = std::vector<double>(model.parameters().begin(), model.parameters().end());
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::uint64_t step = 0;
  auto& ws = thread_workspace();

  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += options.batch_size) {
      const std::size_t stop = std::min(train_idx.size(), start + options.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k)
        batch_loss += accumulate_gradient(model, corpus.masks[train_idx[k]], y[train_idx[k]], scale, grad, ws);
      if (!std::isfinite(batch_loss))
        throw DivergenceError("non-finite " + std::string(to_string(target)) + " loss at epoch " +
                              std::to_string(epoch + 1) + ", batch starting at " + std::to_string(start) +
                              " (learning rate " + std::to_string(options.learning_rate) + ")");
      epoch_loss += batch_loss;

      ++step;
      const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
      auto params = model.parameters();
      for (std::size_t k = 0; k < np; ++k) {
        m1[k] = options.beta1 * m1[k] + (1.0 - options.beta1) * grad[k];
        m2[k] = options.beta2 * m2[k] + (1.0 - options.beta2) * grad[k] * grad[k];
        params[k] -= options.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + options.adam_epsilon);
      }
    }

    const double train_mse = epoch_loss / static_cast<double>(train_idx.size());
    const double val_mse = model.mse(val_masks, val_y);
    if (!std::isfinite(val_mse))
      throw DivergenceError("non-finite validation MSE at epoch " + std::to_string(epoch + 1));
    result.train_history.push_back(train_mse);
    result.validation_history.push_back(val_mse);

    if (val_mse < best_val) {
      best_val = val_mse;
      result.best_epoch = epoch;
      std::copy(model.parameters().begin(), model.parameters().end(), best.begin());
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }

  std::copy(best.begin(), best.end(), model.parameters().begin());
  model.scaling = corpus.scaling;
  model.info.target = std::string(to_string(target));
  model.info.seed = options.seed;
  model.info.epochs_run = result.validation_history.size();
  model.info.best_epoch = result.best_epoch + 1;
  model.info.train_mse = result.train_history[result.best_epoch];
  model.info.validation_mse = best_val;
  model.info.learning_rate = options.learning_rate;
  model.info.batch_size = options.batch_size;
  model.info.patience = options.patience;
  model.info.validation_fraction = options.validation_fraction;
  result.best_validation_mse = best_val;
  result.model = std::move(model);
  return result;
}

FiniteDiffReport finite_diff_check(const SurrogateRegressor& model, std::span<const HeadMask> masks,
                                   std::span<const double> targets, double step, std::size_t max_parameters,
                                   std::uint64_t seed) {
  FiniteDiffReport report;
  const std::size_t np = model.parameter_count();
  std::vector<double> grad(np);
  model.loss_and_gradient(masks, targets, grad);

  std::vector<std::size_t> chosen(np);
  std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  if (max_parameters != 0 && max_parameters < np) {
    Rng rng(seed);
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(max_parameters);
  }

  SurrogateRegressor probe = model;
  const auto base_pattern = probe.activation_pattern(masks);
  for (std::size_t k : chosen) {
    const double original = probe.parameters()[k];
    probe.parameters()[k] = original + step;
    const double up = probe.mse(masks, targets);
    const bool up_same = probe.activation_pattern(masks) == base_pattern;
    probe.parameters()[k] = original - step;
    const double down = probe.mse(masks, targets);
    const bool down_same = probe.activation_pattern(masks) == base_pattern;
    probe.parameters()[k] = original;
    if (!up_same || !down_same) {
      ++report.skipped_at_kink;
      continue;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double rel = std::abs(grad[k] - numeric) / (std::abs(numeric) + 1e-12);
    report.max_relative_error = std::max(report.max_relative_error, rel);
    ++report.checked;
  }
  return report;
}

std::string regressor_to_json(const SurrogateRegressor& model) {
  nlohmann::ordered_json j;
  j["format"] = kFormatName;
  j["version"] = kFormatVersion;
  j["layer_sizes"] = model.architecture().layer_sizes;
  j["scaling"] = {{"bias_max", model.scaling.bias_max},
                  {"ppl_max", model.scaling.ppl_max},
                  {"sigma", model.scaling.sigma}};
  const auto& info = model.info;
  j["training"] = {{"target", info.target},
                   {"seed", info.seed},
                   {"epochs_run", info.epochs_run},
                   {"best_epoch", info.best_epoch},
                   {"train_mse", info.train_mse},
                   {"validation_mse", info.validation_mse},
                   {"optimizer", "adam"},
                   {"learning_rate", info.learning_rate},
                   {"batch_size", info.batch_size},
                   {"patience", info.patience},
                   {"validation_fraction", info.validation_fraction}};
  j["parameters"] = std::vector<double>(model.parameters().begin(), model.parameters().end());
  return j.dump() + "\n";
}

SurrogateRegressor regressor_from_json(std::string_view text, std::string_view source) {
  const std::string src(source);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(src, 0, std::string("invalid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormatName) throw ParseError(src, 0, "not a surrogate model file");
    if (j.at("version").get<int>() != kFormatVersion)
      throw ParseError(src, 0, "unsupported surrogate format version " + j.at("version").dump());
    SurrogateRegressor model(Architecture{j.at("layer_sizes").get<std::vector<std::size_t>>()});
    const auto params = j.at("parameters").get<std::vector<double>>();
    if (params.size() != model.parameter_count())
      throw ParseError(src, 0, "expected " + std::to_string(model.parameter_count()) + " parameters, found " +
                                   std::to_string(params.size()));
    std::copy(params.begin(), params.end(), model.parameters().begin());
    const auto& sc = j.at("scaling");
    model.scaling = ScalingSpec{sc.at("bias_max").get<double>(), sc.at("ppl_max").get<double>(),
                                sc.at("sigma").get<double>()};
    if (j.contains("training")) {
      const auto& t = j["training"];
      auto& info = model.info;
      info.target = t.value("target", "");
      info.seed = t.value("seed", std::uint64_t{0});
      info.epochs_run = t.value("epochs_run", std::size_t{0});
      info.best_epoch = t.value("best_epoch", std::size_t{0});
      info.train_mse = t.value("train_mse", 0.0);
      info.validation_mse = t.value("validation_mse", 0.0);
      info.learning_rate = t.value("learning_rate", 0.0);
      info.batch_size = t.value("batch_size", std::size_t{0});
      info.patience = t.value("patience", std::size_t{0});
      info.validation_fraction = t.value("validation_fraction", 0.0);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(src, 0, std::string("malformed surrogate model: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(src, 0, e.what());
  }
}

void save_regressor(const std::filesystem::path& path, const SurrogateRegressor& model) {
  io::write_file_atomic(path, regressor_to_json(model));
}

SurrogateRegressor load_regressor(const std::filesystem::path& path) {
  return regressor_from_json(io::read_file(path), path.string());
}

} // namespace headprune
