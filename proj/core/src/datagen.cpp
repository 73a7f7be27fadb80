#include "mi2a/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "mi2a/errors.hpp"
#include "mi2a/parallel.hpp"
#include "mi2a/random.hpp"
#include "mi2a/tensor_io.hpp"

namespace mi2a::datagen {

using nlohmann::json;

Shape Grid::spatial_shape() const { return two_d() ? Shape{ny, nx} : Shape{nx}; }

void SnapshotDataset::validate() const {
  const Shape spatial = grid.spatial_shape();
  if (snapshots.rank() != 2 + spatial.size()) {
    throw ShapeError("dataset: snapshots " + shape_string(snapshots.shape()) + " do not match grid rank");
  }
  if (snapshots.dim(0) != params.size()) {
    throw ShapeError("dataset: " + std::to_string(params.size()) + " params but " + std::to_string(snapshots.dim(0)) +
                     " trajectories");
  }
  if (snapshots.dim(1) != grid.nt) throw ShapeError("dataset: time axis does not match grid.nt");
  for (std::size_t a = 0; a < spatial.size(); ++a) {
    if (snapshots.dim(2 + a) != spatial[a]) throw ShapeError("dataset: spatial extents do not match grid");
  }
  if (!snapshots.all_finite()) throw NumericError("dataset: non-finite snapshot values");
  if (!(global_min < global_max)) throw NumericError("dataset: degenerate field (global_min >= global_max)");
}

Tensor SnapshotDataset::trajectory(std::size_t i) const {
  if (i >= params.size()) throw ShapeError("trajectory index out of range");
  Shape s(snapshots.shape().begin() + 1, snapshots.shape().end());
  const std::size_t n = shape_size(s);
  std::vector<double> data(snapshots.raw() + i * n, snapshots.raw() + (i + 1) * n);
  return Tensor(std::move(s), std::move(data));
}

json SnapshotDataset::metadata() const {
  return json{{"benchmark", benchmark},
              {"params", params},
              {"shape", snapshots.shape()},
              {"global_min", global_min},
              {"global_max", global_max},
              {"grid",
               {{"nx", grid.nx},
                {"ny", grid.ny},
                {"nt", grid.nt},
                {"dx", grid.dx},
                {"dy", grid.dy},
                {"dt", grid.dt},
                {"x_extent", grid.x_extent},
                {"y_extent", grid.y_extent},
                {"t_max", grid.t_max}}}};
}

Tensor Normalization::normalize(const Tensor& t) const {
  Tensor out = t;
  for (auto& v : out.data()) v = normalize(v);
  return out;
}

Tensor Normalization::denormalize(const Tensor& t) const {
  Tensor out = t;
  for (auto& v : out.data()) v = denormalize(v);
  return out;
}

namespace {

void finish(SnapshotDataset& ds) {
  const auto [lo, hi] = std::minmax_element(ds.snapshots.data().begin(), ds.snapshots.data().end());
  ds.global_min = *lo;
  ds.global_max = *hi;
  ds.validate();
}

void require_grid(std::size_t nx, std::size_t nt, double x_extent, double t_max) {
  std::vector<std::string> bad;
  if (nx < 2) bad.push_back("nx must be >= 2");
  if (nt < 2) bad.push_back("nt must be >= 2");
  if (!(x_extent > 0)) bad.push_back("x_extent must be positive");
  if (!(t_max > 0)) bad.push_back("t_max must be positive");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

// Fills snapshots(p, k, i) = value(param_p, x_i, t_k) on uniform node grids including both ends.
template <typename F>
SnapshotDataset analytic(std::string name, const std::vector<double>& params, std::size_t nx, std::size_t nt,
                         double x_extent, double t_max, F value) {
  require_grid(nx, nt, x_extent, t_max);
  if (params.empty()) throw ConfigError({"parameter list is empty"});
  SnapshotDataset ds;
  ds.benchmark = std::move(name);
  ds.params = params;
  ds.grid.nx = nx;
  ds.grid.nt = nt;
  ds.grid.x_extent = x_extent;
  ds.grid.t_max = t_max;
  ds.grid.dx = x_extent / static_cast<double>(nx - 1);
  ds.grid.dt = t_max / static_cast<double>(nt - 1);
  ds.snapshots = Tensor({params.size(), nt, nx});
  parallel_for(params.size(), [&](std::size_t p) {
    double* out = ds.snapshots.raw() + p * nt * nx;
    for (std::size_t k = 0; k < nt; ++k) {
      const double t = static_cast<double>(k) * ds.grid.dt;
      for (std::size_t i = 0; i < nx; ++i) out[k * nx + i] = value(params[p], static_cast<double>(i) * ds.grid.dx, t);
    }
  });
  finish(ds);
  return ds;
}

}  // namespace

double gaussian_profile(double x, double rho) {
  return std::exp(-x * x / (2.0 * rho)) / std::sqrt(2.0 * std::numbers::pi * rho);
}

SnapshotDataset gen_linear_convection(const std::vector<double>& mu, const LinearConvectionConfig& cfg) {
  if (!(cfg.rho > 0)) throw ConfigError({"rho must be positive"});
  return analytic("linear_convection", mu, cfg.nx, cfg.nt, cfg.x_extent, cfg.t_max,
                  [rho = cfg.rho](double m, double x, double t) { return gaussian_profile(x - m * t, rho); });
}

double burgers_value(double x, double t, double re) {
  // 1 + sqrt((t+1)/t0) exp(Re x^2 / (4t+4)) = 1 + exp(a), t0 = exp(Re/8)
  const double a = re * x * x / (4.0 * (t + 1.0)) + 0.5 * std::log(t + 1.0) - re / 16.0;
  const double s = a > 0 ? std::exp(-a) / (1.0 + std::exp(-a)) : 1.0 / (1.0 + std::exp(a));
  return x / (t + 1.0) * s;
}

SnapshotDataset gen_burgers(const std::vector<double>& re, const BurgersConfig& cfg) {
  for (double r : re) {
    if (!(r > 0)) throw ConfigError({"Reynolds numbers must be positive"});
  }
  return analytic("burgers", re, cfg.nx, cfg.nt, cfg.x_extent, cfg.t_max,
                  [](double r, double x, double t) { return burgers_value(x, t, r); });
}

SnapshotDataset gen_shallow_water(const std::vector<double>& positions, const ShallowWaterConfig& cfg) {
  cfg.validate();
  if (positions.empty()) throw ConfigError({"parameter list is empty"});
  SnapshotDataset ds;
  ds.benchmark = "shallow_water";
  ds.params = positions;
  ds.grid.nx = cfg.nx;
  ds.grid.ny = cfg.ny;
  ds.grid.nt = cfg.nt;
  ds.grid.x_extent = cfg.x_extent;
  ds.grid.y_extent = cfg.y_extent;
  ds.grid.t_max = cfg.t_max;
  ds.grid.dx = cfg.x_extent / static_cast<double>(cfg.nx);
  ds.grid.dy = cfg.y_extent / static_cast<double>(cfg.ny);
  ds.grid.dt = cfg.t_max / static_cast<double>(cfg.nt - 1);
  const std::size_t frame = cfg.nt * cfg.ny * cfg.nx;
  ds.snapshots = Tensor({positions.size(), cfg.nt, cfg.ny, cfg.nx});
  parallel_for(positions.size(), [&](std::size_t p) {
    const Tensor frames = simulate_shallow_water(cfg, plane_wave(cfg, positions[p]));
    std::copy(frames.data().begin(), frames.data().end(), ds.snapshots.raw() + p * frame);
  });
  finish(ds);
  return ds;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return v;
}

std::vector<double> midpoints(const std::vector<double>& v) {
  std::vector<double> m;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) m.push_back(0.5 * (v[i] + v[i + 1]));
  return m;
}

ParameterSplit linear_convection_params() {
  ParameterSplit s;
  s.train = linspace(0.775, 1.25, 20);
  s.test = midpoints(s.train);
  return s;
}

ParameterSplit burgers_params() { return {linspace(1000.0, 4000.0, 7), {1100.0, 2600.0, 4100.0}}; }

ParameterSplit shallow_water_params() {
  ParameterSplit s;
  s.train = linspace(0.25, 0.75, 20);
  const auto mids = midpoints(s.train);
  for (std::size_t i : {1u, 5u, 9u, 13u, 17u}) s.test.push_back(mids[i]);
  return s;
}

ParameterSplit default_params(const std::string& benchmark) {
  if (benchmark == "linear_convection") return linear_convection_params();
  if (benchmark == "burgers") return burgers_params();
  if (benchmark == "shallow_water") return shallow_water_params();
  throw ConfigError({"unknown benchmark '" + benchmark + "'"});
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& field, std::vector<std::string>& bad) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    bad.push_back(std::string(key) + ": " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, std::vector<std::string>& bad) {
  for (const auto& [k, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; })) {
      bad.push_back("unknown key '" + k + "'");
    }
  }
}

}  // namespace

SnapshotDataset generate(const std::string& benchmark, const std::vector<double>& params, const json& config) {
  if (!config.is_object()) throw ConfigError({"generator config must be an object"});
  std::vector<std::string> bad;
  if (benchmark == "linear_convection") {
    LinearConvectionConfig c;
    take(config, "nx", c.nx, bad);
    take(config, "nt", c.nt, bad);
    take(config, "x_extent", c.x_extent, bad);
    take(config, "t_max", c.t_max, bad);
    take(config, "rho", c.rho, bad);
    reject_unknown(config, {"nx", "nt", "x_extent", "t_max", "rho"}, bad);
    if (!bad.empty()) throw ConfigError(std::move(bad));
    return gen_linear_convection(params, c);
  }
  if (benchmark == "burgers") {
    BurgersConfig c;
    take(config, "nx", c.nx, bad);
    take(config, "nt", c.nt, bad);
    take(config, "x_extent", c.x_extent, bad);
    take(config, "t_max", c.t_max, bad);
    reject_unknown(config, {"nx", "nt", "x_extent", "t_max"}, bad);
    if (!bad.empty()) throw ConfigError(std::move(bad));
    return gen_burgers(params, c);
  }
  if (benchmark == "shallow_water") {
    ShallowWaterConfig c;
    take(config, "nx", c.nx, bad);
    take(config, "ny", c.ny, bad);
    take(config, "nt", c.nt, bad);
    take(config, "x_extent", c.x_extent, bad);
    take(config, "y_extent", c.y_extent, bad);
    take(config, "t_max", c.t_max, bad);
    take(config, "g", c.g, bad);
    take(config, "depth", c.depth, bad);
    take(config, "viscosity", c.viscosity, bad);
    take(config, "amplitude", c.amplitude, bad);
    take(config, "width", c.width, bad);
    take(config, "safety", c.safety, bad);
    take(config, "substep_factor", c.substep_factor, bad);
    reject_unknown(config,
                   {"nx", "ny", "nt", "x_extent", "y_extent", "t_max", "g", "depth", "viscosity", "amplitude", "width",
                    "safety", "substep_factor"},
                   bad);
    if (!bad.empty()) throw ConfigError(std::move(bad));
    return gen_shallow_water(params, c);
  }
  throw ConfigError({"unknown benchmark '" + benchmark + "'"});
}

std::size_t windows_per_trajectory(std::size_t nt, std::size_t window) {
  if (window == 0) throw ConfigError({"window length must be positive"});
  if (nt < 2 * window) {
    throw ConfigError({"need N_T >= 2 N_t, got N_T=" + std::to_string(nt) + ", N_t=" + std::to_string(window)});
  }
  return nt - 2 * window + 1;
}

TrainingPairs build_pairs(const SnapshotDataset& ds, std::size_t window, const NoiseConfig& noise, std::uint64_t seed,
                          std::optional<Normalization> bounds) {
  ds.validate();
  const std::size_t nt = ds.snapshots.dim(1);
  const std::size_t ns = windows_per_trajectory(nt, window);
  if (!(noise.stddev >= 0)) throw ConfigError({"noise stddev must be >= 0"});
  const Normalization norm = bounds.value_or(Normalization{ds.global_min, ds.global_max});
  if (!(norm.min < norm.max)) throw ConfigError({"normalization bounds must satisfy min < max"});

  const Shape spatial = ds.grid.spatial_shape();
  const std::size_t frame = shape_size(spatial);
  const std::size_t nm = ds.params.size() * ns;
  Shape shape{nm, window};
  shape.insert(shape.end(), spatial.begin(), spatial.end());

  TrainingPairs out;
  out.window = window;
  out.windows_per_trajectory = ns;
  out.normalization = norm;
  out.x_clean = Tensor(shape);
  out.y = Tensor(shape);
  const std::size_t block = window * frame;
  for (std::size_t p = 0; p < ds.params.size(); ++p) {
    const double* traj = ds.snapshots.raw() + p * nt * frame;
    for (std::size_t s = 0; s < ns; ++s) {
      const std::size_t m = p * ns + s;
      const double* src_x = traj + s * frame;
      const double* src_y = traj + (s + window) * frame;
      double* dx = out.x_clean.raw() + m * block;
      double* dy = out.y.raw() + m * block;
      for (std::size_t n = 0; n < block; ++n) {
        dx[n] = norm.normalize(src_x[n]);
        dy[n] = norm.normalize(src_y[n]);
      }
    }
  }
  out.x_noisy = out.x_clean;
  if (noise.stddev > 0) {
    Rng rng(seed);
    std::normal_distribution<double> dist(noise.mean, noise.stddev);
    for (auto& v : out.x_noisy.data()) v += dist(rng);
  } else {
    for (auto& v : out.x_noisy.data()) v += noise.mean;
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const SnapshotDataset& ds) {
  ds.validate();
  save_tensor(path, ds.snapshots);
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) throw FormatError("cannot open sidecar for " + path.string());
  side << ds.metadata().dump(2) << '\n';
}

SnapshotDataset load_dataset(const std::filesystem::path& path) {
  SnapshotDataset ds;
  ds.snapshots = load_tensor(path);
  const std::string side_path = path.string() + ".json";
  std::ifstream side(side_path);
  if (!side) throw FormatError("missing sidecar " + side_path);
  try {
    const json meta = json::parse(side);
    ds.benchmark = meta.at("benchmark").get<std::string>();
    ds.params = meta.at("params").get<std::vector<double>>();
    ds.global_min = meta.at("global_min").get<double>();
    ds.global_max = meta.at("global_max").get<double>();
    const json& g = meta.at("grid");
    ds.grid.nx = g.at("nx").get<std::size_t>();
    ds.grid.ny = g.at("ny").get<std::size_t>();
    ds.grid.nt = g.at("nt").get<std::size_t>();
    ds.grid.dx = g.at("dx").get<double>();
    ds.grid.dy = g.at("dy").get<double>();
    ds.grid.dt = g.at("dt").get<double>();
    ds.grid.x_extent = g.at("x_extent").get<double>();
    ds.grid.y_extent = g.at("y_extent").get<double>();
    ds.grid.t_max = g.at("t_max").get<double>();
    if (meta.at("shape").get<Shape>() != ds.snapshots.shape()) {
      throw FormatError(side_path + ": shape disagrees with tensor header");
    }
  } catch (const json::exception& e) {
    throw FormatError(side_path + ": " + e.what());
  }
  try {
    ds.validate();
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace mi2a::datagen
