#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mi2a/datagen.hpp"
#include "mi2a/models.hpp"
#include "mi2a/tensor.hpp"

namespace mi2a::eval {

/// Maps one normalized (T, spatial...) window to the next one.
using Predictor = std::function<Tensor(const Tensor& window)>;

/// encode -> evolve -> decode on a batch of one. Forward passes only read the weights, so
/// the predictor may be called from several threads at once.
Predictor model_predictor(models::Model& model);

struct RolloutResult {
  Tensor trajectory;                      // (horizons * T, spatial...), normalized
  std::size_t window = 0;                 // T
  std::vector<std::size_t> horizon_start; // absolute step index of each horizon's first frame
  bool truncated = false;                 // a non-finite prediction stopped the rollout early

  std::size_t horizons() const { return horizon_start.size(); }
};

/// Feeds each predicted window back as the next input. Horizon h covers absolute steps
/// [T (h + 1), T (h + 2)) when the seed window holds steps [0, T).
RolloutResult rollout(const Predictor& predict, const Tensor& seed_window, std::size_t n_horizons);

/// Per-step errors over the flattened spatial extent, plus their time averages.
struct MetricSeries {
  std::vector<double> mse, mae, linf;
  double mean_mse = 0.0, mean_mae = 0.0, mean_linf = 0.0;

  std::size_t steps() const { return mse.size(); }
  /// Mean of per-step MSE within each consecutive block of `window` steps.
  std::vector<double> horizon_mse(std::size_t window) const;
  /// step,mse,mae,linf with `first_step` as the index of row 0.
  std::string to_csv(std::size_t first_step = 0) const;
};

/// pred and truth are (steps, spatial...). Throws ShapeError on mismatch or rank < 2.
MetricSeries metrics(const Tensor& pred, const Tensor& truth);

struct TrajectoryEvaluation {
  double param = 0.0;
  RolloutResult rollout;
  Tensor truth;           // physical units, aligned with rollout.trajectory
  Tensor error_field;     // prediction - truth, physical units
  MetricSeries physical;  // headline numbers
  MetricSeries normalized;
};

/// Seeds with the first T frames of a physical trajectory (nt, spatial...), rolls out as
/// many whole horizons as the trajectory still covers (capped by max_horizons when given),
/// and scores the result in physical and in normalized units.
TrajectoryEvaluation evaluate_trajectory(const Predictor& predict, const Tensor& trajectory, double param,
                                         const datagen::Normalization& norm, std::size_t window,
                                         std::optional<std::size_t> max_horizons = std::nullopt);

/// One evaluation per dataset trajectory, run concurrently.
std::vector<TrajectoryEvaluation> evaluate_dataset(const Predictor& predict, const datagen::SnapshotDataset& ds,
                                                   const datagen::Normalization& norm, std::size_t window,
                                                   std::optional<std::size_t> max_horizons = std::nullopt);

struct VariantResult {
  std::string name;  // column label, e.g. MI2A_LossDecomp
  std::vector<std::pair<double, MetricSeries>> per_param;
};

struct TableRow {
  double param = 0.0;
  std::string metric;                // MSE, MAE or Linf (time averaged)
  std::vector<double> values;        // one per variant, in variant order
  std::optional<std::size_t> best;   // strictly smallest; ties flag nothing
};

/// Variants must cover the same parameters in the same order.
std::vector<TableRow> comparison_table(const std::vector<VariantResult>& variants,
                                       const std::vector<std::string>& metric_names = {"MSE", "Linf"});
std::string table_csv(const std::vector<VariantResult>& variants, const std::vector<TableRow>& rows);

}  // namespace mi2a::eval
