#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mi2a/graph.hpp"

namespace mi2a::models {

enum class EvolverKind { Mi2a, Luong, Cran };

std::string to_string(EvolverKind kind);
/// Accepts "mi2a", "luong", "cran"; throws ConfigError otherwise.
EvolverKind evolver_kind_from_string(const std::string& s);

/// Convolutional autoencoder plus sequence evolver. Defaults are the published 1D setup.
struct ModelConfig {
  Shape spatial{256};                     // (L) or (H, W); a single input channel is implied
  std::size_t latent = 2;                 // r
  std::size_t hidden = 32;                // p, LSTM units
  std::size_t derivative_kernel = 3;      // k_d
  EvolverKind evolver = EvolverKind::Mi2a;
  std::size_t conv_filters[2] = {64, 32};
  std::size_t kernel_size = 5;
  std::size_t dense_units[2] = {128, 64};

  std::size_t spatial_rank() const { return spatial.size(); }
  /// Spatial extents after the two conv(stride 2) + pool(2) stages.
  Shape bottleneck() const;
  /// Spatial extents the decoder produces before cropping back to `spatial`.
  Shape decoded_extent() const;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Every trainable tensor's name and shape, derived from the config alone.
std::vector<std::pair<std::string, Shape>> parameter_inventory(const ModelConfig& cfg);

struct EvolveResult {
  Var prediction;                // (B, T, r)
  std::optional<Var> attention;  // (B, T, T); absent for the plain seq2seq evolver
};

struct ForwardResult {
  Var latent;          // (B, T, r) from the (noisy) input
  Var reconstruction;  // (B, T, spatial...)
  EvolveResult evolved;
  Var prediction;      // decoded evolved latent, (B, T, spatial...)
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterStore& parameters() noexcept { return params_; }
  const ParameterStore& parameters() const noexcept { return params_; }

  /// (B, T, spatial...) -> (B, T, r)
  Var encode(Graph& g, Var x);
  /// (B, T, r) -> (B, T, spatial...)
  Var decode(Graph& g, Var z);
  /// (B, T, r) -> (B, T, r)
  EvolveResult evolve(Graph& g, Var z);
  /// The full training-time pass of one batch.
  ForwardResult forward(Graph& g, Var x);

  /// Replaces softmax attention with a constant weight per encoder step (len == window).
  void set_fixed_attention(std::vector<double> gamma);
  void clear_fixed_attention() { fixed_attention_.reset(); }
  const std::optional<std::vector<double>>& fixed_attention() const noexcept { return fixed_attention_; }

 private:
  Var param(Graph& g, const std::string& name);
  /// Runs a stacked two-layer LSTM over `inputs`. Returns the per-step outputs of the top
  /// layer and each layer's final (h, c).
  struct LstmRun {
    std::vector<Var> outputs;
    std::vector<std::pair<Var, Var>> final_state;
  };
  LstmRun run_lstm(Graph& g, const std::string& prefix, const std::vector<Var>& inputs,
                   const std::vector<std::pair<Var, Var>>& init);

  ModelConfig cfg_;
  ParameterStore params_;
  std::optional<std::vector<double>> fixed_attention_;
};

}  // namespace mi2a::models
