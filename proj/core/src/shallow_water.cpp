#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "mi2a/datagen.hpp"
#include "mi2a/errors.hpp"

namespace mi2a::datagen {

void ShallowWaterConfig::validate() const {
  std::vector<std::string> bad;
  if (nx < 3 || ny < 3) bad.push_back("shallow water grid must be at least 3x3");
  if (nt < 2) bad.push_back("nt must be >= 2");
  if (!(x_extent > 0 && y_extent > 0 && t_max > 0)) bad.push_back("extents and t_max must be positive");
  if (!(g > 0 && depth > 0)) bad.push_back("g and depth must be positive");
  // Forward Euler with centred pressure gradients has no stable step without some viscosity.
  if (!(viscosity > 0)) bad.push_back("viscosity must be positive");
  if (!(amplitude >= 0)) bad.push_back("amplitude must be >= 0");
  if (!(width > 0)) bad.push_back("width must be positive");
  if (!(safety > 0 && safety <= 1)) bad.push_back("safety must be in (0, 1]");
  if (substep_factor == 0) bad.push_back("substep_factor must be >= 1");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

Tensor plane_wave(const ShallowWaterConfig& cfg, double position) {
  cfg.validate();
  const double dx = cfg.x_extent / static_cast<double>(cfg.nx);
  Tensor h({cfg.ny, cfg.nx});
  for (std::size_t i = 0; i < cfg.nx; ++i) {
    const double x = (static_cast<double>(i) + 0.5) * dx;
    const double d = x - position * cfg.x_extent;
    const double v = cfg.amplitude * std::exp(-d * d / (2.0 * cfg.width * cfg.width));
    for (std::size_t j = 0; j < cfg.ny; ++j) h[j * cfg.nx + i] = v;
  }
  return h;
}

namespace {

// Padded (ny+2) x (nx+2) field with one ghost layer on each side.
struct Field {
  std::size_t nx, ny;
  std::vector<double> a;
  Field(std::size_t nx_, std::size_t ny_) : nx(nx_), ny(ny_), a((nx_ + 2) * (ny_ + 2), 0.0) {}
  double& operator()(std::size_t j, std::size_t i) { return a[j * (nx + 2) + i]; }
  double operator()(std::size_t j, std::size_t i) const { return a[j * (nx + 2) + i]; }
};

// Walls: h is mirrored; the wall-normal velocity is odd so it vanishes on the wall face,
// the tangential one is even (free slip).
void fill_ghosts(Field& f, double sign_x_walls, double sign_y_walls) {
  for (std::size_t j = 1; j <= f.ny; ++j) {
    f(j, 0) = sign_x_walls * f(j, 1);
    f(j, f.nx + 1) = sign_x_walls * f(j, f.nx);
  }
  for (std::size_t i = 0; i <= f.nx + 1; ++i) {
    f(0, i) = sign_y_walls * f(1, i);
    f(f.ny + 1, i) = sign_y_walls * f(f.ny, i);
  }
}

double upwind(double vel, double minus, double centre, double plus, double h) {
  return vel > 0 ? vel * (centre - minus) / h : vel * (plus - centre) / h;
}

}  // namespace

Tensor simulate_shallow_water(const ShallowWaterConfig& cfg, const Tensor& h0, ShallowWaterDiagnostics* diagnostics) {
  cfg.validate();
  if (h0.shape() != Shape{cfg.ny, cfg.nx}) {
    throw ShapeError("simulate_shallow_water: h0 is " + shape_string(h0.shape()) + ", grid is " +
                     shape_string({cfg.ny, cfg.nx}));
  }
  const std::size_t nx = cfg.nx, ny = cfg.ny;
  const double dx = cfg.x_extent / static_cast<double>(nx);
  const double dy = cfg.y_extent / static_cast<double>(ny);
  const double dmin = std::min(dx, dy);
  const double nu = cfg.viscosity;
  const double peak = std::max(cfg.amplitude, h0.max_abs());
  const double c = std::sqrt(cfg.g * (cfg.depth + peak));

  ShallowWaterDiagnostics diag;
  // Per Fourier mode the forward-Euler factor is 1 - dt (d - i lambda); stability needs
  // dt <= 2 d / (d^2 + lambda^2), whose minimum over the grid's modes is bounded below by
  // 2 nu / (c^2 + nu^2 kmax^2) with kmax^2 = 8 / dmin^2.
  diag.dt_limit_gravity_viscous = 2.0 * nu / (c * c + nu * nu * 8.0 / (dmin * dmin));
  diag.dt_limit_cfl = dmin / (c + peak * std::sqrt(cfg.g / cfg.depth));
  diag.dt_limit_diffusion = dmin * dmin / (8.0 * nu);
  const double dt_stable =
      cfg.safety * std::min({diag.dt_limit_gravity_viscous, diag.dt_limit_cfl, diag.dt_limit_diffusion});
  const double frame_dt = cfg.t_max / static_cast<double>(cfg.nt - 1);
  diag.substeps_per_frame =
      static_cast<std::size_t>(std::ceil(frame_dt / dt_stable - 1e-12)) * cfg.substep_factor;
  diag.internal_dt = frame_dt / static_cast<double>(diag.substeps_per_frame);
  if (diagnostics) *diagnostics = diag;

  Field h(nx, ny), u(nx, ny), v(nx, ny);
  Field hn(nx, ny), un(nx, ny), vn(nx, ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) h(j + 1, i + 1) = h0[j * nx + i];

  Tensor frames({cfg.nt, ny, nx});
  auto store = [&](std::size_t k) {
    double* out = frames.raw() + k * ny * nx;
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) out[j * nx + i] = h(j + 1, i + 1);
  };
  const double limit = 10.0 * cfg.amplitude;
  auto check = [&](std::size_t k) {
    const double* f = frames.raw() + k * ny * nx;
    for (std::size_t n = 0; n < ny * nx; ++n) {
      if (!std::isfinite(f[n]) || (limit > 0 && std::abs(f[n]) > limit)) {
        std::ostringstream msg;
        msg << "shallow water solver unstable at frame " << k << " (|h| = " << std::abs(f[n]) << ", limit " << limit
            << "); internal dt " << diag.internal_dt << ", limits: gravity/viscous " << diag.dt_limit_gravity_viscous
            << ", CFL " << diag.dt_limit_cfl << ", diffusion " << diag.dt_limit_diffusion;
        throw NumericError(msg.str());
      }
    }
  };
  store(0);
  check(0);

  const double dt = diag.internal_dt;
  const double H = cfg.depth;
  for (std::size_t k = 1; k < cfg.nt; ++k) {
    for (std::size_t s = 0; s < diag.substeps_per_frame; ++s) {
      fill_ghosts(h, 1.0, 1.0);
      fill_ghosts(u, -1.0, 1.0);
      fill_ghosts(v, 1.0, -1.0);
      for (std::size_t j = 1; j <= ny; ++j) {
        for (std::size_t i = 1; i <= nx; ++i) {
          // Mass through face fluxes so the discrete total is conserved exactly.
          const double fe = 0.5 * (2 * H + h(j, i) + h(j, i + 1)) * 0.5 * (u(j, i) + u(j, i + 1));
          const double fw = 0.5 * (2 * H + h(j, i - 1) + h(j, i)) * 0.5 * (u(j, i - 1) + u(j, i));
          const double fn = 0.5 * (2 * H + h(j, i) + h(j + 1, i)) * 0.5 * (v(j, i) + v(j + 1, i));
          const double fs = 0.5 * (2 * H + h(j - 1, i) + h(j, i)) * 0.5 * (v(j - 1, i) + v(j, i));
          hn(j, i) = h(j, i) - dt * ((fe - fw) / dx + (fn - fs) / dy);

          const double uc = u(j, i), vc = v(j, i);
          const double lap_u = (u(j, i + 1) - 2 * uc + u(j, i - 1)) / (dx * dx) +
                               (u(j + 1, i) - 2 * uc + u(j - 1, i)) / (dy * dy);
          const double lap_v = (v(j, i + 1) - 2 * vc + v(j, i - 1)) / (dx * dx) +
                               (v(j + 1, i) - 2 * vc + v(j - 1, i)) / (dy * dy);
          const double adv_u = upwind(uc, u(j, i - 1), uc, u(j, i + 1), dx) + upwind(vc, u(j - 1, i), uc, u(j + 1, i), dy);
          const double adv_v = upwind(uc, v(j, i - 1), vc, v(j, i + 1), dx) + upwind(vc, v(j - 1, i), vc, v(j + 1, i), dy);
          const double hx = (h(j, i + 1) - h(j, i - 1)) / (2 * dx);
          const double hy = (h(j + 1, i) - h(j - 1, i)) / (2 * dy);
          un(j, i) = uc + dt * (-adv_u - cfg.g * hx + nu * lap_u);
          vn(j, i) = vc + dt * (-adv_v - cfg.g * hy + nu * lap_v);
        }
      }
      std::swap(h.a, hn.a);
      std::swap(u.a, un.a);
      std::swap(v.a, vn.a);
    }
    store(k);
    check(k);
  }
  return frames;
}

}  // namespace mi2a::datagen
