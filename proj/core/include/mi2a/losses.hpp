#pragma once

#include <span>

#include "mi2a/graph.hpp"

namespace mi2a::losses {

/// xi trades autoencoder reconstruction against evolver prediction; psi trades the
/// dispersion (phase) term against the dissipation (amplitude) term.
struct LossWeights {
  double xi = 0.5;
  double psi = 0.7;

  /// Throws ConfigError unless both weights lie in [0, 1].
  void validate() const;
};

/// Below this, a field is treated as constant: rho is undefined, so the dispersion term is
/// taken as zero and the dissipation term carries the whole error.
inline constexpr double kSigmaFloor = 1e-12;

/// Decomposition of the mean squared error between two fields on one time step, with
/// population (1/N) statistics.
struct DecomposedError {
  double total = 0.0;        // mean squared difference
  double dissipation = 0.0;  // (sigma_Y - sigma_X)^2 + (mean_Y - mean_X)^2
  double dispersion = 0.0;   // 2 (1 - rho) sigma_Y sigma_X
  double correlation = 1.0;  // rho, clamped to [-1, 1]
};

/// `truth` is Y, `prediction` is X. Requires equal lengths >= 2.
DecomposedError decompose_mse(std::span<const double> truth, std::span<const double> prediction);

/// Mean of squared differences; equal shapes required.
double ae_loss(const Tensor& reconstruction, const Tensor& clean);
Var ae_loss(Var reconstruction, Var clean);

/// Same functional form as ae_loss, used as the undecomposed evolver objective.
Var plain_mse_evolver_loss(Var prediction, Var truth);

/// Per-step decomposition as a graph op. Inputs are (B, T, spatial...) and the spatial
/// extents are flattened; the result is (B*T, 2) holding [dissipation, dispersion] rows.
Var dispersion_dissipation(Var prediction, Var truth);

struct EvolverLoss {
  Var total;        // psi * mean(dispersion) + (1 - psi) * mean(dissipation)
  Var dissipation;  // mean over batch and time
  Var dispersion;
};

/// Decomposed evolver objective. Means are taken over batch and time after decomposing
/// each step over space.
EvolverLoss evolver_loss(Var prediction, Var truth, double psi);

/// (1 - xi) * ae + xi * evolver.
double total_loss(double ae, double evolver, double xi);
Var total_loss(Var ae, Var evolver, double xi);

}  // namespace mi2a::losses
