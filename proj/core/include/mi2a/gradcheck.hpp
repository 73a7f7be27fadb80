#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mi2a/graph.hpp"

namespace mi2a {

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t entries_checked = 0;
};

/// Builds a scalar from graph variables bound to the given inputs.
using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;

/// Compares reverse-mode gradients of `fn` wrt every entry of every input against
/// central differences with step `h`. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult check_gradients(const std::string& name, const std::vector<Tensor>& inputs, const ScalarFn& fn,
                                double h = 1e-5, double floor = 1e-6);

/// The built-in suite covering every differentiable op (used by tests and `mi2a gradcheck`).
/// `filter` selects op names by substring; empty runs everything.
std::vector<GradCheckResult> run_op_gradchecks(const std::string& filter = "", std::uint64_t seed = 7);

}  // namespace mi2a
