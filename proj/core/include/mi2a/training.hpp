#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mi2a/adam.hpp"
#include "mi2a/datagen.hpp"
#include "mi2a/errors.hpp"
#include "mi2a/losses.hpp"
#include "mi2a/models.hpp"
#include "mi2a/random.hpp"

namespace mi2a::training {

enum class LossMode { Decomposed, Plain };

std::string to_string(LossMode mode);
/// Accepts "decomposed" and "plain"; throws ConfigError otherwise.
LossMode loss_mode_from_string(const std::string& s);

struct RunConfig {
  std::string benchmark = "linear_convection";
  models::ModelConfig model;
  losses::LossWeights weights;
  LossMode loss_mode = LossMode::Decomposed;
  std::size_t epochs = 1500;
  std::size_t batch_size = 64;
  AdamConfig adam;
  std::uint64_t seed = 0;
  datagen::NoiseConfig noise;
  std::size_t window = 10;
  /// Training trajectories to use; empty means every trajectory in the dataset.
  std::vector<double> train_params;
  /// Write a checkpoint every this many epochs (0: only at the end).
  std::size_t checkpoint_every = 0;
  std::string data_path;
  std::string out_dir;

  /// Collects every problem before throwing ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are errors.
  static RunConfig from_json(const nlohmann::json& j);
  /// FNV-1a of the canonical JSON with the path fields removed.
  std::uint64_t hash() const;
};

/// Applies "a.b.c=value" overrides to a JSON document. Values are parsed as JSON when
/// possible, else taken as strings.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Per-epoch means, weighted by batch size. total = (1 - xi) ae + xi * evolver.
struct EpochLoss {
  std::size_t epoch = 0;  // 1-based
  double total = 0.0;
  double ae = 0.0;
  double evolver = 0.0;
  double dissipation = 0.0;
  double dispersion = 0.0;
};

/// Gradient L2 norms per parameter group from the last step of an epoch.
struct GradientAudit {
  double encoder = 0.0;
  double decoder = 0.0;
  double evolver = 0.0;
};

std::string loss_history_csv(const std::vector<EpochLoss>& history);

/// Shuffled partition of [0, n) into batches of `batch_size` (the last may be short).
/// Throws ConfigError if batch_size is 0 or exceeds n.
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng);

struct Batch {
  Tensor x_noisy;
  Tensor x_clean;
  Tensor y;
};

/// Index-aligned rows of the three pair tensors.
Batch gather_batch(const datagen::TrainingPairs& pairs, std::span<const std::size_t> indices);

struct Checkpoint {
  RunConfig config;
  ParameterStore parameters;
  AdamState adam;
  std::size_t epoch = 0;
  std::string rng_state;
  datagen::Normalization normalization;
  std::vector<EpochLoss> history;

  /// Writes a directory: one tensor file per parameter and moment, plus manifest.json.
  void save(const std::filesystem::path& dir) const;
  static Checkpoint load(const std::filesystem::path& dir);
  /// Rebuilds the model with these weights.
  models::Model model() const;
};

/// Raised when training hits a non-finite loss or gradient. The trainer has already rolled
/// back to the state at the end of the last completed epoch.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::size_t last_good_epoch)
      : NumericError(what), last_good_epoch_(last_good_epoch) {}
  std::size_t last_good_epoch() const noexcept { return last_good_epoch_; }

 private:
  std::size_t last_good_epoch_;
};

class Trainer {
 public:
  /// Fresh run: weights and sampling stream seeded from cfg.seed.
  Trainer(RunConfig cfg, const datagen::TrainingPairs& pairs);
  /// Continues from a checkpoint; cfg must hash the same as the checkpoint's.
  Trainer(const Checkpoint& ckpt, const datagen::TrainingPairs& pairs);

  const RunConfig& config() const noexcept { return cfg_; }
  models::Model& model() noexcept { return model_; }
  const models::Model& model() const noexcept { return model_; }
  std::size_t epoch() const noexcept { return epoch_; }
  const std::vector<EpochLoss>& history() const noexcept { return history_; }
  const GradientAudit& last_audit() const noexcept { return audit_; }

  /// One shuffled pass over every sample.
  EpochLoss run_epoch();
  /// Runs epochs until cfg.epochs; `on_epoch` sees each finished epoch.
  void run(const std::function<void(const EpochLoss&, const Trainer&)>& on_epoch = {});

  Checkpoint checkpoint() const;

 private:
  void snapshot_good_state();
  void restore_good_state();

  RunConfig cfg_;
  const datagen::TrainingPairs* pairs_;
  models::Model model_;
  AdamState adam_;
  Rng rng_;
  std::size_t epoch_ = 0;
  std::vector<EpochLoss> history_;
  GradientAudit audit_;

  struct GoodState {
    ParameterStore parameters;
    AdamState adam;
    Rng rng;
    std::size_t epoch = 0;
    std::size_t history_size = 0;
  };
  std::optional<GoodState> good_;
};

/// Restricts a dataset to the listed parameter values (matched to 1e-9 relative).
datagen::SnapshotDataset select_params(const datagen::SnapshotDataset& ds, const std::vector<double>& params);

}  // namespace mi2a::training
