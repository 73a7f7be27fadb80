#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mi2a/tensor.hpp"

namespace mi2a::lmm {

/// First-order upwind discretisation of u_t + mu u_x = 0 on a periodic 1D grid.
struct UpwindSystem {
  double mu = 1.0;
  double dx = 0.0;
  double dt = 0.0;

  double cfl() const { return mu * dt / dx; }
  /// Throws ConfigError unless mu, dx, dt are all positive and finite.
  void validate() const;
};

/// Weights of the four states entering one AB2 + upwind step:
/// u_i^{n+1} = g1 u_i^n + d1 u_{i-1}^n + g2 u_i^{n-1} - d2 u_{i-1}^{n-1}.
struct Ab2Coefficients {
  double gamma1 = 0.0, delta1 = 0.0, gamma2 = 0.0, delta2 = 0.0;

  static Ab2Coefficients from(double mu, double dt, double dx);
  /// g1 + d1 + g2 - d2; equals 1 whenever the formulas hold.
  double consistency_sum() const { return gamma1 + delta1 + gamma2 - delta2; }
};

/// -(mu/dx)(u_i - u_{i-1}) with u_{-1} = u_{N-1}. Throws ShapeError for rank != 1 or N < 2.
Tensor upwind_rhs(const Tensor& u, double mu, double dx);
Tensor euler_step(const Tensor& u, const UpwindSystem& sys);
/// u^n + dt (3/2 F(u^n) - 1/2 F(u^{n-1})).
Tensor ab2_step(const Tensor& u_n, const Tensor& u_nm1, const UpwindSystem& sys);
/// The same step written as the four-state linear combination.
Tensor ab2_step_expanded(const Tensor& u_n, const Tensor& u_nm1, const Ab2Coefficients& c);
/// u^0, an Euler bootstrap u^1, then AB2 up to u^steps. Returns steps + 1 states.
std::vector<Tensor> ab2_trajectory(const Tensor& u0, const UpwindSystem& sys, std::size_t steps);

/// Attention weights over the stacked-pair embedding of `window` past steps, oldest first:
/// [u^{n-w+1}, S u^{n-w+1}, ..., u^n, S u^n] where (S u)_i = u_{i-1}.
std::vector<double> ab2_attention_weights(const Ab2Coefficients& c, std::size_t window);

/// One time-invariant attention update: sum_j w_j e_j over the stacked-pair embedding of
/// `history` (oldest first; missing leading steps count as zero states).
Tensor fixed_attention_step(const std::vector<Tensor>& history, const std::vector<double>& weights);

struct EquivalenceReport {
  std::size_t steps = 0;
  std::size_t window = 0;
  double cfl = 0.0;
  Ab2Coefficients coefficients;
  double tolerance = 0.0;
  double max_deviation = 0.0;
  std::vector<double> deviation;  // per step, max |attention - direct|
  bool passed = false;

  std::string to_csv() const;  // step,max_abs_deviation
};

/// Rolls the system forward twice from u0: directly with ab2_step, and by a time-invariant
/// attention layer (identity value projection, no nonlinearity) over the stacked-pair
/// embedding with weights from ab2_attention_weights. Both share the Euler bootstrap.
EquivalenceReport attention_emulates_ab2(const UpwindSystem& sys, const Tensor& u0, std::size_t steps,
                                         std::size_t window = 2, double tolerance = 1e-12);

struct WeightTrace {
  std::vector<std::vector<double>> weights;  // one row per step
  /// Largest spread of any single weight across steps.
  double max_variation = 0.0;
};

/// Same rollout but with softmax attention whose scores come from the current state
/// (score_j = <e_last, W e_j> / sqrt(N) with a seeded random W). The weights it produces
/// change from step to step, unlike any multistep method.
WeightTrace softmax_weight_trace(const UpwindSystem& sys, const Tensor& u0, std::size_t steps,
                                 std::size_t window, std::uint64_t seed);

/// Trace of the fixed AB2 weights over the same rollout; max_variation is exactly zero.
WeightTrace fixed_weight_trace(const Ab2Coefficients& c, std::size_t steps, std::size_t window);

}  // namespace mi2a::lmm
