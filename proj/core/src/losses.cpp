#include "mi2a/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mi2a/errors.hpp"
#include "mi2a/ops.hpp"

namespace mi2a::losses {

void LossWeights::validate() const {
  std::vector<std::string> bad;
  if (!(xi >= 0.0 && xi <= 1.0)) bad.push_back("xi=" + std::to_string(xi) + " not in [0,1]");
  if (!(psi >= 0.0 && psi <= 1.0)) bad.push_back("psi=" + std::to_string(psi) + " not in [0,1]");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

namespace {

struct Moments {
  double mean_y = 0.0, mean_x = 0.0;
  double var_y = 0.0, var_x = 0.0;
  double sigma_y = 0.0, sigma_x = 0.0;
  double cov = 0.0;
  double mse = 0.0;
};

Moments moments(const double* y, const double* x, std::size_t n) {
  Moments m;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.mean_y += y[i];
    m.mean_x += x[i];
  }
  m.mean_y *= inv;
  m.mean_x *= inv;
  double vy = 0.0, vx = 0.0, c = 0.0, se = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dy = y[i] - m.mean_y;
    const double dx = x[i] - m.mean_x;
    vy += dy * dy;
    vx += dx * dx;
    c += dy * dx;
    const double d = y[i] - x[i];
    se += d * d;
  }
  m.var_y = vy * inv;
  m.var_x = vx * inv;
  m.sigma_y = std::sqrt(m.var_y);
  m.sigma_x = std::sqrt(m.var_x);
  m.cov = c * inv;
  m.mse = se * inv;
  return m;
}

bool degenerate(const Moments& m) { return m.sigma_y < kSigmaFloor || m.sigma_x < kSigmaFloor; }

DecomposedError decompose(const Moments& m) {
  DecomposedError e;
  e.total = m.mse;
  if (degenerate(m)) {
    e.correlation = 0.0;
    e.dispersion = 0.0;
    e.dissipation = m.mse;
    return e;
  }
  const double product = std::max(m.sigma_y * m.sigma_x, kSigmaFloor);
  e.correlation = std::clamp(m.cov / product, -1.0, 1.0);
  const double ds = m.sigma_y - m.sigma_x;
  const double dm = m.mean_y - m.mean_x;
  e.dissipation = ds * ds + dm * dm;
  // 2 (1 - rho) sigma_y sigma_x written without the division, and with sqrt(var_y var_x)
  // so that identical fields give exactly zero.
  e.dispersion = std::max(0.0, 2.0 * (std::sqrt(m.var_y * m.var_x) - m.cov));
  return e;
}

}  // namespace

DecomposedError decompose_mse(std::span<const double> truth, std::span<const double> prediction) {
  if (truth.size() != prediction.size()) {
    throw ShapeError("decompose_mse: lengths " + std::to_string(truth.size()) + " vs " +
                     std::to_string(prediction.size()));
  }
  if (truth.size() < 2) throw ShapeError("decompose_mse: need at least 2 points");
  return decompose(moments(truth.data(), prediction.data(), truth.size()));
}

double ae_loss(const Tensor& reconstruction, const Tensor& clean) {
  if (reconstruction.shape() != clean.shape()) {
    throw ShapeError("ae_loss: " + shape_string(reconstruction.shape()) + " vs " + shape_string(clean.shape()));
  }
  if (clean.empty()) throw ShapeError("ae_loss: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double d = reconstruction[i] - clean[i];
    s += d * d;
  }
  return s / static_cast<double>(clean.size());
}

Var ae_loss(Var reconstruction, Var clean) { return ops::mse(reconstruction, clean); }

Var plain_mse_evolver_loss(Var prediction, Var truth) { return ops::mse(prediction, truth); }

Var dispersion_dissipation(Var prediction, Var truth) {
  const Shape s = prediction.shape();
  if (s != truth.shape()) {
    throw ShapeError("dispersion_dissipation: " + shape_string(s) + " vs " + shape_string(truth.shape()));
  }
  if (s.size() < 3) throw ShapeError("dispersion_dissipation: expected (B, T, spatial...), got " + shape_string(s));
  const std::size_t rows = s[0] * s[1];
  const std::size_t n = prediction.value().size() / rows;
  if (n < 2) throw ShapeError("dispersion_dissipation: need at least 2 spatial points");

  std::vector<Moments> stats(rows);
  Tensor out({rows, 2});
  for (std::size_t r = 0; r < rows; ++r) {
    stats[r] = moments(truth.value().raw() + r * n, prediction.value().raw() + r * n, n);
    const DecomposedError e = decompose(stats[r]);
    out[2 * r] = e.dissipation;
    out[2 * r + 1] = e.dispersion;
  }

  return prediction.graph()->record(std::move(out), {prediction, truth},
                                    [prediction, truth, rows, n, stats = std::move(stats)](Graph& g, const Tensor& go) {
    const bool want_x = g.needs_grad(prediction);
    const bool want_y = g.needs_grad(truth);
    Tensor* gx = want_x ? &g.grad_of(prediction) : nullptr;
    Tensor* gy = want_y ? &g.grad_of(truth) : nullptr;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const Moments& m = stats[r];
      const double g_diss = go[2 * r];
      const double g_disp = go[2 * r + 1];
      const double* y = g.value(truth).raw() + r * n;
      const double* x = g.value(prediction).raw() + r * n;
      if (degenerate(m)) {
        // Dissipation equals the plain MSE here; dispersion is identically zero.
        for (std::size_t i = 0; i < n; ++i) {
          const double d = 2.0 * (x[i] - y[i]) * inv * g_diss;
          if (gx) (*gx)[r * n + i] += d;
          if (gy) (*gy)[r * n + i] -= d;
        }
        continue;
      }
      const double ds = m.sigma_y - m.sigma_x;
      const double dm = m.mean_y - m.mean_x;
      for (std::size_t i = 0; i < n; ++i) {
        const double cx = x[i] - m.mean_x;
        const double cy = y[i] - m.mean_y;
        if (gx) {
          const double d_diss = -2.0 * ds * cx * inv / m.sigma_x - 2.0 * dm * inv;
          const double d_disp = 2.0 * (m.sigma_y * cx * inv / m.sigma_x - cy * inv);
          (*gx)[r * n + i] += g_diss * d_diss + g_disp * d_disp;
        }
        if (gy) {
          const double d_diss = 2.0 * ds * cy * inv / m.sigma_y + 2.0 * dm * inv;
          const double d_disp = 2.0 * (m.sigma_x * cy * inv / m.sigma_y - cx * inv);
          (*gy)[r * n + i] += g_diss * d_diss + g_disp * d_disp;
        }
      }
    }
  });
}

EvolverLoss evolver_loss(Var prediction, Var truth, double psi) {
  if (!(psi >= 0.0 && psi <= 1.0)) throw ConfigError({"psi=" + std::to_string(psi) + " not in [0,1]"});
  Var terms = dispersion_dissipation(prediction, truth);
  EvolverLoss out;
  out.dissipation = ops::mean(ops::slice_last(terms, 0, 1));
  out.dispersion = ops::mean(ops::slice_last(terms, 1, 1));
  out.total = ops::add(ops::scale(out.dispersion, psi), ops::scale(out.dissipation, 1.0 - psi));
  return out;
}

double total_loss(double ae, double evolver, double xi) { return (1.0 - xi) * ae + xi * evolver; }

Var total_loss(Var ae, Var evolver, double xi) {
  return ops::add(ops::scale(ae, 1.0 - xi), ops::scale(evolver, xi));
}

}  // namespace mi2a::losses
