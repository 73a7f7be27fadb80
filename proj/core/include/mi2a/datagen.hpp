#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mi2a/tensor.hpp"

namespace mi2a::datagen {

/// Spatial/temporal sampling of a dataset. dy and ny are zero for 1D data.
struct Grid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nt = 0;
  double dx = 0.0;
  double dy = 0.0;
  double dt = 0.0;
  double x_extent = 0.0;
  double y_extent = 0.0;
  double t_max = 0.0;

  bool two_d() const noexcept { return ny > 0; }
  Shape spatial_shape() const;
};

/// Snapshots of shape (n_params, nt, nx) or (n_params, nt, ny, nx).
struct SnapshotDataset {
  std::string benchmark;
  std::vector<double> params;
  Tensor snapshots;
  Grid grid;
  double global_min = 0.0;
  double global_max = 0.0;

  /// Throws ShapeError / NumericError when the invariants do not hold.
  void validate() const;
  /// Trajectory i as (nt, spatial...).
  Tensor trajectory(std::size_t i) const;
  nlohmann::json metadata() const;
};

/// Min-max scaling to [0, 1].
struct Normalization {
  double min = 0.0;
  double max = 1.0;

  double normalize(double v) const noexcept { return (v - min) / (max - min); }
  double denormalize(double v) const noexcept { return v * (max - min) + min; }
  Tensor normalize(const Tensor& t) const;
  Tensor denormalize(const Tensor& t) const;
};

// ---- linear convection -------------------------------------------------------------

struct LinearConvectionConfig {
  std::size_t nx = 256;
  std::size_t nt = 200;
  double x_extent = 1.0;
  double t_max = 1.0;
  double rho = 1e-4;
};

/// f(x) = exp(-x^2 / (2 rho)) / sqrt(2 pi rho)
double gaussian_profile(double x, double rho);
SnapshotDataset gen_linear_convection(const std::vector<double>& mu, const LinearConvectionConfig& cfg = {});

// ---- viscous Burgers ---------------------------------------------------------------

struct BurgersConfig {
  std::size_t nx = 256;
  std::size_t nt = 200;
  double x_extent = 1.0;
  double t_max = 2.0;
};

/// Closed-form solution, evaluated through a log-space sigmoid so large Re does not overflow.
double burgers_value(double x, double t, double re);
SnapshotDataset gen_burgers(const std::vector<double>& re, const BurgersConfig& cfg = {});

// ---- shallow water -----------------------------------------------------------------

struct ShallowWaterConfig {
  std::size_t nx = 184;
  std::size_t ny = 184;
  std::size_t nt = 100;
  double x_extent = 1.0;
  double y_extent = 1.0;
  double t_max = 1.0;
  double g = 1.0;
  double depth = 1.0;      // reference height H
  double viscosity = 1e-3;
  double amplitude = 0.1;  // absolute; default is 0.1 * depth
  double width = 0.05;     // Gaussian half-width of the plane wave
  double safety = 0.9;     // fraction of the stable internal step actually used
  std::size_t substep_factor = 1;  // extra refinement of the internal step, for convergence studies

  void validate() const;
};

struct ShallowWaterDiagnostics {
  double internal_dt = 0.0;
  std::size_t substeps_per_frame = 0;
  double dt_limit_gravity_viscous = 0.0;
  double dt_limit_cfl = 0.0;
  double dt_limit_diffusion = 0.0;
};

/// Plane wave h0 = A exp(-(x - x0)^2 / (2 w^2)) at rest.
Tensor plane_wave(const ShallowWaterConfig& cfg, double position);

/// Integrates from h0 (ny, nx) with zero velocity; returns frames (nt, ny, nx) of h.
/// Throws NumericError with the step-limit diagnostics if |h| blows past 10x the amplitude.
Tensor simulate_shallow_water(const ShallowWaterConfig& cfg, const Tensor& h0,
                              ShallowWaterDiagnostics* diagnostics = nullptr);

SnapshotDataset gen_shallow_water(const std::vector<double>& positions, const ShallowWaterConfig& cfg = {});

// ---- default parameter sets ----------------------------------------------------------

std::vector<double> linspace(double lo, double hi, std::size_t n);
std::vector<double> midpoints(const std::vector<double>& v);

struct ParameterSplit {
  std::vector<double> train;
  std::vector<double> test;
};

ParameterSplit linear_convection_params();  // 20 uniform on [0.775, 1.25]; 19 midpoints
ParameterSplit burgers_params();            // 7 uniform on [1000, 4000]; {1100, 2600, 4100}
ParameterSplit shallow_water_params();      // 20 uniform on [0.25, 0.75]; 5 midpoints

/// Generates the named benchmark ("linear_convection", "burgers", "shallow_water").
/// The config object may override any field of the benchmark's config struct.
SnapshotDataset generate(const std::string& benchmark, const std::vector<double>& params,
                         const nlohmann::json& config = nlohmann::json::object());
ParameterSplit default_params(const std::string& benchmark);

// ---- training pairs -----------------------------------------------------------------

struct NoiseConfig {
  double mean = 0.0;
  double stddev = 0.01;
};

/// Windowed, normalized samples: x_clean/x_noisy/y have shape (n_samples, window, spatial...).
struct TrainingPairs {
  Tensor x_clean;
  Tensor x_noisy;
  Tensor y;
  std::size_t window = 0;
  std::size_t windows_per_trajectory = 0;
  Normalization normalization;

  std::size_t samples() const { return x_clean.empty() ? 0 : x_clean.dim(0); }
};

std::size_t windows_per_trajectory(std::size_t nt, std::size_t window);

/// Builds stride-1 windows. Bounds default to the dataset's own global min/max; pass the
/// training bounds when building pairs for held-out data.
TrainingPairs build_pairs(const SnapshotDataset& ds, std::size_t window, const NoiseConfig& noise,
                          std::uint64_t seed, std::optional<Normalization> bounds = std::nullopt);

// ---- persistence ----------------------------------------------------------------------

/// Writes the snapshot tensor to `path` and metadata to `path` + ".json".
void save_dataset(const std::filesystem::path& path, const SnapshotDataset& ds);
SnapshotDataset load_dataset(const std::filesystem::path& path);

}  // namespace mi2a::datagen
