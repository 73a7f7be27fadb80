#pragma once

#include <cstdint>
#include <vector>

#include "mi2a/graph.hpp"

namespace mi2a {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Optimizer state. Moment buffers are index-aligned with the ParameterStore they were
/// created for and have the same shapes.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState for_parameters(const ParameterStore& params, AdamConfig config = {});
};

/// One bias-corrected Adam step using the gradients stored in `params`.
/// Throws NumericError naming the offending parameter if any gradient is non-finite;
/// in that case no parameter or moment is modified.
void adam_update(ParameterStore& params, AdamState& state);

}  // namespace mi2a
