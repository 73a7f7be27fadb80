#include "mi2a/lmm_bridge.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "mi2a/errors.hpp"
#include "mi2a/graph.hpp"
#include "mi2a/ops.hpp"
#include "mi2a/random.hpp"

namespace mi2a::lmm {

namespace {

void require_field(const Tensor& u) {
  if (u.rank() != 1 || u.size() < 2) throw ShapeError("upwind field must be rank 1 with N >= 2, got " + shape_string(u.shape()));
}

// (S u)_i = u_{i-1}, periodic.
Tensor shifted(const Tensor& u) {
  Tensor s = Tensor::uninitialized(u.shape());
  const std::size_t n = u.size();
  s[0] = u[n - 1];
  for (std::size_t i = 1; i < n; ++i) s[i] = u[i - 1];
  return s;
}

// (1, 2w, N) stacked pairs, oldest first; missing history stays zero.
Tensor embedding(const std::deque<Tensor>& history, std::size_t window) {
  const std::size_t n = history.back().size();
  Tensor e({1, 2 * window, n});
  const std::size_t have = std::min(window, history.size());
  for (std::size_t k = 0; k < have; ++k) {
    const Tensor& u = history[history.size() - have + k];
    const std::size_t slot = window - have + k;
    const Tensor su = shifted(u);
    std::copy_n(u.raw(), n, e.raw() + (2 * slot) * n);
    std::copy_n(su.raw(), n, e.raw() + (2 * slot + 1) * n);
  }
  return e;
}

Tensor attend(const Tensor& weights, const Tensor& states) {
  Graph g;
  Var q = ops::batched_matmul(g.constant(weights), g.constant(states));
  return q.value().reshaped({states.dim(2)});
}

double variation(const std::vector<std::vector<double>>& rows) {
  double worst = 0.0;
  if (rows.empty()) return worst;
  for (std::size_t j = 0; j < rows.front().size(); ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : rows) {
      lo = std::min(lo, r[j]);
      hi = std::max(hi, r[j]);
    }
    worst = std::max(worst, hi - lo);
  }
  return worst;
}

}  // namespace

void UpwindSystem::validate() const {
  std::vector<std::string> problems;
  if (!(mu > 0.0) || !std::isfinite(mu)) problems.push_back("wave speed mu must be positive");
  if (!(dx > 0.0) || !std::isfinite(dx)) problems.push_back("dx must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) problems.push_back("dt must be positive");
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

Ab2Coefficients Ab2Coefficients::from(double mu, double dt, double dx) {
  const double c = mu * dt / dx;
  return {1.0 - 1.5 * c, 1.5 * c, 0.5 * c, 0.5 * c};
}

Tensor upwind_rhs(const Tensor& u, double mu, double dx) {
  require_field(u);
  const std::size_t n = u.size();
  Tensor r = Tensor::uninitialized(u.shape());
  const double k = -mu / dx;
  r[0] = k * (u[0] - u[n - 1]);
  for (std::size_t i = 1; i < n; ++i) r[i] = k * (u[i] - u[i - 1]);
  return r;
}

Tensor euler_step(const Tensor& u, const UpwindSystem& sys) {
  Tensor f = upwind_rhs(u, sys.mu, sys.dx);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = u[i] + sys.dt * f[i];
  return f;
}

Tensor ab2_step(const Tensor& u_n, const Tensor& u_nm1, const UpwindSystem& sys) {
  if (u_n.shape() != u_nm1.shape()) throw ShapeError("ab2_step: history shapes differ");
  const Tensor f_n = upwind_rhs(u_n, sys.mu, sys.dx);
  const Tensor f_nm1 = upwind_rhs(u_nm1, sys.mu, sys.dx);
  Tensor out = Tensor::uninitialized(u_n.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = u_n[i] + sys.dt * (1.5 * f_n[i] - 0.5 * f_nm1[i]);
  return out;
}

Tensor ab2_step_expanded(const Tensor& u_n, const Tensor& u_nm1, const Ab2Coefficients& c) {
  require_field(u_n);
  if (u_n.shape() != u_nm1.shape()) throw ShapeError("ab2_step_expanded: history shapes differ");
  const Tensor s_n = shifted(u_n), s_nm1 = shifted(u_nm1);
  Tensor out = Tensor::uninitialized(u_n.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = c.gamma1 * u_n[i] + c.delta1 * s_n[i] + c.gamma2 * u_nm1[i] - c.delta2 * s_nm1[i];
  }
  return out;
}

std::vector<Tensor> ab2_trajectory(const Tensor& u0, const UpwindSystem& sys, std::size_t steps) {
  sys.validate();
  require_field(u0);
  std::vector<Tensor> traj{u0};
  traj.reserve(steps + 1);
  if (steps >= 1) traj.push_back(euler_step(u0, sys));
  for (std::size_t n = 2; n <= steps; ++n) traj.push_back(ab2_step(traj[n - 1], traj[n - 2], sys));
  return traj;
}

std::vector<double> ab2_attention_weights(const Ab2Coefficients& c, std::size_t window) {
  if (window < 2) throw ConfigError({"AB2 needs an attention window of at least 2 steps"});
  std::vector<double> w(2 * window, 0.0);
  // Oldest first, so u^{n-1} sits two slots before the end.
  w[2 * window - 4] = c.gamma2;
  w[2 * window - 3] = -c.delta2;
  w[2 * window - 2] = c.gamma1;
  w[2 * window - 1] = c.delta1;
  return w;
}

Tensor fixed_attention_step(const std::vector<Tensor>& history, const std::vector<double>& weights) {
  if (history.empty()) throw ShapeError("fixed_attention_step: empty history");
  if (weights.size() < 2 || weights.size() % 2 != 0) {
    throw ShapeError("fixed_attention_step: need two weights per past step, got " + std::to_string(weights.size()));
  }
  for (const Tensor& u : history) {
    require_field(u);
    if (u.shape() != history.front().shape()) throw ShapeError("fixed_attention_step: ragged history");
  }
  const std::deque<Tensor> h(history.begin(), history.end());
  return attend(Tensor({1, 1, weights.size()}, weights), embedding(h, weights.size() / 2));
}

std::string EquivalenceReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "step,max_abs_deviation\n";
  for (std::size_t i = 0; i < deviation.size(); ++i) os << i << ',' << deviation[i] << '\n';
  return os.str();
}

EquivalenceReport attention_emulates_ab2(const UpwindSystem& sys, const Tensor& u0, std::size_t steps,
                                         std::size_t window, double tolerance) {
  sys.validate();
  require_field(u0);
  EquivalenceReport rep;
  rep.steps = steps;
  rep.window = window;
  rep.cfl = sys.cfl();
  rep.coefficients = Ab2Coefficients::from(sys.mu, sys.dt, sys.dx);
  rep.tolerance = tolerance;

  const std::vector<Tensor> direct = ab2_trajectory(u0, sys, steps);
  const std::vector<double> w = ab2_attention_weights(rep.coefficients, window);
  const Tensor alpha({1, 1, w.size()}, w);

  std::deque<Tensor> history{direct[0]};
  if (steps >= 1) history.push_back(direct[1]);
  rep.deviation.assign(steps + 1, 0.0);
  for (std::size_t n = 2; n <= steps; ++n) {
    history.push_back(attend(alpha, embedding(history, window)));
    if (history.size() > window) history.pop_front();
    rep.deviation[n] = max_abs_diff(history.back(), direct[n]);
  }
  rep.max_deviation = *std::max_element(rep.deviation.begin(), rep.deviation.end());
  rep.passed = std::isfinite(rep.max_deviation) && rep.max_deviation <= tolerance;
  return rep;
}

WeightTrace softmax_weight_trace(const UpwindSystem& sys, const Tensor& u0, std::size_t steps, std::size_t window,
                                 std::uint64_t seed) {
  sys.validate();
  require_field(u0);
  if (window < 2) throw ConfigError({"attention window must be at least 2 steps"});
  const std::size_t n = u0.size();
  Rng rng(derive_seed(seed, "lmm.score"));
  const Tensor w_score = normal_tensor({n, n}, 0.0, 1.0 / std::sqrt(static_cast<double>(n)), rng);

  WeightTrace trace;
  std::deque<Tensor> history{u0, euler_step(u0, sys)};
  for (std::size_t step = 2; step <= steps; ++step) {
    const Tensor e = embedding(history, window);
    Graph g;
    Var states = g.constant(e);
    Var query = ops::slice_last(ops::reshape(states, {1, 2 * window * n}), (2 * window - 2) * n, n);
    Var keys = ops::reshape(ops::matmul(ops::reshape(states, {2 * window, n}), g.constant(w_score)), {1, 2 * window, n});
    Var scores = ops::scale(ops::batched_matmul(ops::reshape(query, {1, 1, n}), keys, true),
                            1.0 / std::sqrt(static_cast<double>(n)));
    Var alpha = ops::softmax(scores, 2);
    trace.weights.emplace_back(alpha.value().raw(), alpha.value().raw() + 2 * window);
    history.push_back(ops::batched_matmul(alpha, states).value().reshaped({n}));
    if (history.size() > window) history.pop_front();
  }
  trace.max_variation = variation(trace.weights);
  return trace;
}

WeightTrace fixed_weight_trace(const Ab2Coefficients& c, std::size_t steps, std::size_t window) {
  WeightTrace trace;
  const std::vector<double> w = ab2_attention_weights(c, window);
  for (std::size_t step = 2; step <= steps; ++step) trace.weights.push_back(w);
  trace.max_variation = variation(trace.weights);
  return trace;
}

}  // namespace mi2a::lmm
