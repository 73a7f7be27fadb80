#include "mi2a/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mi2a/errors.hpp"
#include "mi2a/parallel.hpp"

namespace mi2a::eval {

namespace {

Tensor frames(const Tensor& t, std::size_t first, std::size_t count) {
  Shape s = t.shape();
  const std::size_t frame = t.size() / s[0];
  s[0] = count;
  Tensor out = Tensor::uninitialized(s);
  std::copy_n(t.raw() + first * frame, count * frame, out.raw());
  return out;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

Predictor model_predictor(models::Model& m) {
  return [&m](const Tensor& window) {
    Shape batched{1};
    batched.insert(batched.end(), window.shape().begin(), window.shape().end());
    Graph g;
    Var z = m.encode(g, g.constant(window.reshaped(batched)));
    Var next = m.decode(g, m.evolve(g, z).prediction);
    return next.value().reshaped(window.shape());
  };
}

RolloutResult rollout(const Predictor& predict, const Tensor& seed_window, std::size_t n_horizons) {
  if (seed_window.rank() < 2) throw ShapeError("rollout: seed window must be (T, spatial...), got " + shape_string(seed_window.shape()));
  RolloutResult r;
  r.window = seed_window.dim(0);
  Shape s = seed_window.shape();
  s[0] = n_horizons * r.window;
  Tensor traj(s);
  const std::size_t block = seed_window.size();
  Tensor input = seed_window;
  for (std::size_t h = 0; h < n_horizons; ++h) {
    Tensor next = predict(input);
    if (next.shape() != seed_window.shape()) {
      throw ShapeError("rollout: predictor returned " + shape_string(next.shape()) + " for " + shape_string(seed_window.shape()));
    }
    if (!next.all_finite()) {
      r.truncated = true;
      break;
    }
    std::copy_n(next.raw(), block, traj.raw() + h * block);
    r.horizon_start.push_back(r.window * (h + 1));
    input = std::move(next);
  }
  if (r.truncated) traj = frames(traj, 0, r.horizons() * r.window);
  r.trajectory = std::move(traj);
  return r;
}

MetricSeries metrics(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape()) {
    throw ShapeError("metrics: prediction " + shape_string(pred.shape()) + " vs truth " + shape_string(truth.shape()));
  }
  if (pred.rank() < 2) throw ShapeError("metrics: expected (steps, spatial...), got " + shape_string(pred.shape()));
  const std::size_t steps = pred.dim(0), n = pred.size() / std::max<std::size_t>(1, steps);
  MetricSeries m;
  m.mse.resize(steps);
  m.mae.resize(steps);
  m.linf.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    double se = 0.0, ae = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pred[t * n + i] - truth[t * n + i];
      se += d * d;
      ae += std::abs(d);
      mx = std::max(mx, std::abs(d));
    }
    m.mse[t] = se / static_cast<double>(n);
    m.mae[t] = ae / static_cast<double>(n);
    m.linf[t] = mx;
  }
  m.mean_mse = mean(m.mse);
  m.mean_mae = mean(m.mae);
  m.mean_linf = mean(m.linf);
  return m;
}

std::vector<double> MetricSeries::horizon_mse(std::size_t window) const {
  if (window == 0) throw ShapeError("horizon_mse: window must be positive");
  std::vector<double> out;
  for (std::size_t s = 0; s + window <= mse.size(); s += window) {
    double acc = 0.0;
    for (std::size_t k = 0; k < window; ++k) acc += mse[s + k];
    out.push_back(acc / static_cast<double>(window));
  }
  return out;
}

std::string MetricSeries::to_csv(std::size_t first_step) const {
  std::ostringstream os;
  os.precision(17);
  os << "step,mse,mae,linf\n";
  for (std::size_t t = 0; t < steps(); ++t) os << first_step + t << ',' << mse[t] << ',' << mae[t] << ',' << linf[t] << '\n';
  return os.str();
}

TrajectoryEvaluation evaluate_trajectory(const Predictor& predict, const Tensor& trajectory, double param,
                                         const datagen::Normalization& norm, std::size_t window,
                                         std::optional<std::size_t> max_horizons) {
  if (trajectory.rank() < 2 || window == 0 || trajectory.dim(0) < 2 * window) {
    throw ShapeError("evaluate_trajectory: need at least two windows of " + std::to_string(window) + " frames, got " +
                     shape_string(trajectory.shape()));
  }
  std::size_t horizons = trajectory.dim(0) / window - 1;
  if (max_horizons) horizons = std::min(horizons, *max_horizons);

  TrajectoryEvaluation ev;
  ev.param = param;
  ev.rollout = rollout(predict, norm.normalize(frames(trajectory, 0, window)), horizons);
  const std::size_t steps = ev.rollout.horizons() * window;
  ev.truth = frames(trajectory, window, steps);
  const Tensor physical = norm.denormalize(ev.rollout.trajectory);
  ev.error_field = physical;
  for (std::size_t i = 0; i < physical.size(); ++i) ev.error_field[i] -= ev.truth[i];
  if (steps > 0) {
    ev.physical = metrics(physical, ev.truth);
    ev.normalized = metrics(ev.rollout.trajectory, norm.normalize(ev.truth));
  }
  return ev;
}

std::vector<TrajectoryEvaluation> evaluate_dataset(const Predictor& predict, const datagen::SnapshotDataset& ds,
                                                   const datagen::Normalization& norm, std::size_t window,
                                                   std::optional<std::size_t> max_horizons) {
  std::vector<TrajectoryEvaluation> out(ds.params.size());
  parallel_for(ds.params.size(), [&](std::size_t i) {
    out[i] = evaluate_trajectory(predict, ds.trajectory(i), ds.params[i], norm, window, max_horizons);
  });
  return out;
}

std::vector<TableRow> comparison_table(const std::vector<VariantResult>& variants,
                                       const std::vector<std::string>& metric_names) {
  if (variants.empty()) throw ConfigError({"comparison table needs at least one variant"});
  const auto& ref = variants.front().per_param;
  for (const auto& v : variants) {
    if (v.per_param.size() != ref.size()) throw ConfigError({"variant " + v.name + " covers a different parameter set"});
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (v.per_param[i].first != ref[i].first) throw ConfigError({"variant " + v.name + " covers a different parameter set"});
    }
  }
  for (const auto& name : metric_names) {
    if (name != "MSE" && name != "MAE" && name != "Linf") throw ConfigError({"unknown metric '" + name + "'"});
  }
  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    for (const auto& name : metric_names) {
      TableRow row;
      row.param = ref[i].first;
      row.metric = name;
      for (const auto& v : variants) {
        const MetricSeries& m = v.per_param[i].second;
        row.values.push_back(name == "MSE" ? m.mean_mse : name == "MAE" ? m.mean_mae : m.mean_linf);
      }
      const auto it = std::min_element(row.values.begin(), row.values.end());
      if (std::count(row.values.begin(), row.values.end(), *it) == 1) {
        row.best = static_cast<std::size_t>(it - row.values.begin());
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string table_csv(const std::vector<VariantResult>& variants, const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "param,metric";
  for (const auto& v : variants) os << ',' << v.name;
  os << ",best\n";
  for (const auto& r : rows) {
    os << r.param << ',' << r.metric;
    for (double v : r.values) os << ',' << v;
    os << ',' << (r.best ? variants[*r.best].name : "") << '\n';
  }
  return os.str();
}

}  // namespace mi2a::eval
