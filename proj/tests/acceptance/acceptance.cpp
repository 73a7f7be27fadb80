// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on stderr.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mi2a/datagen.hpp"
#include "mi2a/eval.hpp"
#include "mi2a/gradcheck.hpp"
#include "mi2a/lmm_bridge.hpp"
#include "mi2a/losses.hpp"
#include "mi2a/parallel.hpp"
#include "mi2a/random.hpp"
#include "mi2a/training.hpp"

using namespace mi2a;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  json data = json::object();
};

struct Options {
  std::string profile = "ci";
  std::optional<std::size_t> epochs;
  std::size_t sw_epochs = 50;
  std::uint64_t seed = 0;
  fs::path out;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string sci(double v) { return fmt("%.3e", v); }

// ---- 1: decomposition identity ------------------------------------------------------

Outcome decomposition_identity() {
  Outcome o{1, "loss decomposition identity"};
  Rng rng(2024);
  std::uniform_int_distribution<std::size_t> length(2, 256);
  std::uniform_real_distribution<double> exponent(-3.0, 3.0), offset(-5.0, 5.0);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = length(rng);
    // Mix of scales and offsets; some pairs are identical and some predictions constant.
    const double scale = std::pow(10.0, exponent(rng)), shift = offset(rng);
    std::vector<double> y(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = shift + scale * normal(rng);
      x[i] = trial % 7 == 0 ? y[i] : 0.8 * y[i] + 0.2 * shift + 0.3 * scale * normal(rng);
    }
    if (trial % 11 == 0) std::fill(x.begin(), x.end(), shift);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (y[i] - x[i]) * (y[i] - x[i]);
    total /= static_cast<double>(n);
    const losses::DecomposedError e = losses::decompose_mse(y, x);
    worst = std::max(worst, std::abs(total - (e.dissipation + e.dispersion)) / std::max(1.0, total));
  }
  o.passed = worst <= 1e-10;
  o.detail = "10000 pairs, max |total - (diss + disp)| / max(1, total) = " + sci(worst) + " (tol 1e-10)";
  o.data = {{"max_scaled_residual", worst}};
  return o;
}

// ---- 2: AB2 / attention equivalence ------------------------------------------------

Outcome ab2_equivalence() {
  Outcome o{2, "AB2-attention equivalence"};
  const std::size_t n = 200;
  const lmm::UpwindSystem sys{1.0, 1.0 / n, 0.5 / n};
  Tensor u0({n});
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (static_cast<double>(i) + 0.5) / n;
    u0[i] = std::exp(-0.5 * std::pow((x - 0.5) / 0.05, 2));
  }
  const lmm::EquivalenceReport r = lmm::attention_emulates_ab2(sys, u0, 50);

  // Coefficients by substitution: with c = mu dt / dx the expanded two-step update is
  // u + dt * (1.5 f(u_n) - 0.5 f(u_{n-1})) and f(u)_i = -(mu/dx)(u_i - u_{i-1}).
  bool coeff_ok = false;
  double worst = 0.0;
  for (auto [mu, dt, dx] : {std::tuple{1.0, 0.1, 0.2}, std::tuple{0.7875, 0.004, 0.0039}, std::tuple{2.5, 1e-3, 0.01}}) {
    const auto c = lmm::Ab2Coefficients::from(mu, dt, dx);
    const double cf = mu * dt / dx;
    const double g1 = 1.0 - 1.5 * cf, d1 = 1.5 * cf, g2 = 0.5 * cf, d2 = 0.5 * cf;
    worst = std::max({worst, std::abs(c.gamma1 - g1), std::abs(c.delta1 - d1), std::abs(c.gamma2 - g2),
                      std::abs(c.delta2 - d2), std::abs(c.consistency_sum() - 1.0)});
    // Plug a random field through both forms.
    Rng rng(static_cast<std::uint64_t>(mu * 1000));
    Tensor un = uniform_tensor({32}, -1, 1, rng), um = uniform_tensor({32}, -1, 1, rng);
    const lmm::UpwindSystem s{mu, dx, dt};
    worst = std::max(worst, max_abs_diff(lmm::ab2_step(un, um, s), lmm::ab2_step_expanded(un, um, c)));
  }
  const auto worked = lmm::Ab2Coefficients::from(1.0, 0.1, 0.2);
  coeff_ok = worst <= 1e-12 && worked.gamma1 == 0.25 && worked.delta1 == 0.75 && worked.gamma2 == 0.25 &&
             worked.delta2 == 0.25;
  o.passed = r.passed && r.max_deviation <= 1e-12 && coeff_ok;
  o.detail = "50 steps at CFL " + fmt("%.2f", r.cfl) + ", max deviation " + sci(r.max_deviation) +
             "; coefficient substitution at 3 triples, max residual " + sci(worst) + " (tol 1e-12)";
  o.data = {{"max_deviation", r.max_deviation}, {"coefficient_residual", worst}};
  return o;
}

// ---- 3: gradients -------------------------------------------------------------------

Outcome gradient_checks() {
  Outcome o{3, "gradient correctness"};
  const auto results = run_op_gradchecks("all");
  double worst = 0.0;
  std::string worst_name;
  bool has_loss = false;
  for (const auto& r : results) {
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = r.name;
    }
    has_loss = has_loss || r.name == "evolver_loss";
  }
  o.passed = has_loss && worst <= 1e-4;
  o.detail = std::to_string(results.size()) + " ops incl. evolver_loss, worst " + worst_name + " rel err " + sci(worst) +
             " (tol 1e-4)";
  o.data = {{"ops", results.size()}, {"worst", worst}, {"worst_op", worst_name}};
  return o;
}

// ---- 4: parameter count -------------------------------------------------------------

Outcome parameter_count() {
  Outcome o{4, "architecture reconstruction"};
  // Independent tally from the layer table: conv k*in*out+out, dense in*out+out, LSTM (in+p)*4p+4p.
  auto dense = [](std::size_t in, std::size_t out) { return in * out + out; };
  auto conv = [](std::size_t k, std::size_t in, std::size_t out) { return k * in * out + out; };
  auto lstm = [](std::size_t in, std::size_t p) { return (in + p) * 4 * p + 4 * p; };
  const std::size_t r = 2, p = 32, kd = 3, flat = 16 * 32;
  const std::size_t oracle = conv(5, 1, 64) + conv(5, 64, 32) + dense(flat, 128) + dense(128, 64) + dense(64, r) +
                             dense(r, 64) + dense(64, 128) + dense(128, flat) + conv(5, 32, 64) + conv(5, 64, 1) +
                             lstm(r, p) + 3 * lstm(p, p) + dense(p, p) + conv(kd, p, p) + dense(p, r);
  const std::size_t model = models::Model(models::ModelConfig{}, 0).parameters().scalar_count();
  o.passed = oracle == 203557 && model == 203557;
  o.detail = "oracle " + std::to_string(oracle) + ", model " + std::to_string(model) + " (expected 203557)";
  o.data = {{"oracle", oracle}, {"model", model}};
  return o;
}

// ---- 8: data pipeline ---------------------------------------------------------------

Outcome data_pipeline() {
  Outcome o{8, "data-pipeline exactness"};
  std::vector<std::string> bad;
  if (datagen::windows_per_trajectory(200, 10) != 181) bad.push_back("N_s(200, 10) != 181");
  const auto split = datagen::linear_convection_params();
  const auto ds = datagen::gen_linear_convection(split.train);
  const auto pairs = datagen::build_pairs(ds, 10, {}, 5);
  if (pairs.samples() != split.train.size() * 181) bad.push_back("N_m != N_mu * N_s");
  double lo = ds.snapshots[0], hi = ds.snapshots[0];
  for (double v : ds.snapshots.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo != ds.global_min || hi != ds.global_max || pairs.normalization.min != lo || pairs.normalization.max != hi) {
    bad.push_back("normalization bounds differ from the data extremes");
  }
  double cmin = 1.0, cmax = 0.0;
  for (double v : pairs.x_clean.data()) {
    cmin = std::min(cmin, v);
    cmax = std::max(cmax, v);
  }
  if (cmin != 0.0 || cmax != 1.0) bad.push_back("normalized range is not exactly [0, 1]");

  // Window adjacency: x_s covers steps [s, s+T), y_s covers [s+T, s+2T) of the same trajectory.
  const std::size_t T = 10, nx = 256, ns = 181, frame = nx;
  std::size_t mismatches = 0;
  for (std::size_t m = 0; m < split.train.size(); ++m) {
    const Tensor traj = ds.trajectory(m);
    for (std::size_t s = 0; s < ns; ++s) {
      const std::size_t row = (m * ns + s) * T * frame;
      for (std::size_t k = 0; k < T * frame; ++k) {
        const double xv = pairs.normalization.normalize(traj[s * frame + k]);
        const double yv = pairs.normalization.normalize(traj[(s + T) * frame + k]);
        mismatches += pairs.x_clean[row + k] != xv || pairs.y[row + k] != yv;
      }
    }
  }
  if (mismatches) bad.push_back(std::to_string(mismatches) + " window entries out of place");
  o.passed = bad.empty();
  o.detail = o.passed ? "N_s=181, N_m=" + std::to_string(pairs.samples()) + ", bounds and adjacency exact" : bad.front();
  return o;
}

// ---- training criteria --------------------------------------------------------------

struct Trained {
  std::string name;
  std::vector<training::EpochLoss> history;
  std::vector<eval::TrajectoryEvaluation> evals;
  double seconds = 0.0;
};

training::RunConfig run_config(const std::string& benchmark, Shape spatial, std::size_t latent,
                               models::EvolverKind kind, training::LossMode mode, std::size_t epochs, std::uint64_t seed) {
  training::RunConfig c;
  c.benchmark = benchmark;
  c.model.spatial = std::move(spatial);
  c.model.latent = latent;
  c.model.evolver = kind;
  c.loss_mode = mode;
  c.epochs = epochs;
  c.seed = seed;
  return c;
}

Trained train_and_evaluate(const std::string& name, const training::RunConfig& cfg, const datagen::SnapshotDataset& train,
                           const datagen::SnapshotDataset& test, const fs::path& out) {
  const auto start = std::chrono::steady_clock::now();
  const auto pairs = datagen::build_pairs(train, cfg.window, cfg.noise, cfg.seed);
  training::Trainer t(cfg, pairs);
  std::cerr << "[" << name << "] " << pairs.samples() << " samples, " << cfg.epochs << " epochs\n";
  const std::size_t every = std::max<std::size_t>(1, cfg.epochs / 20);
  t.run([&](const training::EpochLoss& e, const training::Trainer&) {
    if (e.epoch % every == 0 || e.epoch == 1) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "[" << name << "] epoch " << e.epoch << " total " << e.total << " (" << fmt("%.0f", s) << " s)\n";
    }
  });
  models::Model& m = t.model();
  Trained r{name, t.history(), eval::evaluate_dataset(eval::model_predictor(m), test, pairs.normalization, cfg.window), 0.0};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!out.empty()) {
    const fs::path dir = out / name;
    t.checkpoint().save(dir / "checkpoint");
    std::ofstream(dir / "loss_history.csv") << training::loss_history_csv(t.history());
    json res = json::array();
    for (const auto& e : r.evals) {
      res.push_back({{"param", e.param}, {"mse", e.physical.mean_mse}, {"mae", e.physical.mean_mae},
                     {"linf", e.physical.mean_linf}, {"normalized_mse", e.normalized.mean_mse},
                     {"normalized_linf", e.normalized.mean_linf}, {"horizon_mse", e.physical.horizon_mse(cfg.window)}});
    }
    std::ofstream(dir / "summary.json") << json{{"variant", name}, {"seconds", r.seconds}, {"results", res}}.dump(2);
  }
  return r;
}

class TrainingCriteria {
 public:
  explicit TrainingCriteria(Options o) : opt_(std::move(o)) {}

  std::size_t epochs(std::size_t ci, std::size_t full) const {
    return opt_.epochs ? *opt_.epochs : (opt_.profile == "full" ? full : ci);
  }

  // Shared by criteria 5 and 9.
  const Trained& convection(const std::string& name, models::EvolverKind kind, training::LossMode mode,
                            const std::string& tag = "") {
    const std::string key = name + tag;
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const bool full = opt_.profile == "full";
    const auto split = datagen::linear_convection_params();
    const auto params = full ? split.train : datagen::linspace(0.775, 1.25, 5);
    if (!lc_train_) {
      lc_train_ = datagen::gen_linear_convection(params);
      lc_test_ = datagen::gen_linear_convection({0.7875});
    }
    const auto cfg = run_config("linear_convection", {256}, 2, kind, mode, epochs(300, 1500), opt_.seed);
    return cache_.emplace(key, train_and_evaluate(key, cfg, *lc_train_, *lc_test_, opt_.out)).first->second;
  }

  Outcome linear_convection() {
    Outcome o{5, "linear convection training (" + opt_.profile + " profile)"};
    const auto& dec = convection("MI2A_LossDecomp", models::EvolverKind::Mi2a, training::LossMode::Decomposed);
    const auto& plain = convection("MI2A", models::EvolverKind::Mi2a, training::LossMode::Plain);
    const auto& cran = convection("CRAN", models::EvolverKind::Cran, training::LossMode::Plain);
    const auto& d = dec.evals[0].physical;
    const double p = plain.evals[0].physical.mean_mse, c = cran.evals[0].physical.mean_mse;
    const bool order = d.mean_mse < p && p < c;
    const bool bounds = d.mean_mse <= 5e-3 && d.mean_linf <= 0.4;
    o.passed = opt_.profile == "full" ? order && bounds : order;
    o.detail = "mu=0.7875 <MSE> LossDecomp " + sci(d.mean_mse) + " / plain " + sci(p) + " / CRAN " + sci(c) +
               (order ? " (ordered)" : " (ordering violated)") + "; LossDecomp <Linf> " + sci(d.mean_linf) +
               (bounds ? " within" : " outside") + " 5e-3 / 0.4" + (opt_.profile == "full" ? "" : " (bounds not judged in ci profile)") +
               "; normalized <MSE> " + sci(dec.evals[0].normalized.mean_mse) + " / " + sci(plain.evals[0].normalized.mean_mse) +
               " / " + sci(cran.evals[0].normalized.mean_mse) + "; epochs " + std::to_string(epochs(300, 1500));
    o.data = {{"mse", {{"MI2A_LossDecomp", d.mean_mse}, {"MI2A", p}, {"CRAN", c}}}, {"linf_decomp", d.mean_linf}};
    return o;
  }

  Outcome burgers() {
    Outcome o{6, "Burgers training (" + opt_.profile + " profile)"};
    const auto split = datagen::burgers_params();
    const auto train = datagen::gen_burgers(split.train), test = datagen::gen_burgers({1100});
    const std::size_t ep = epochs(300, 1500);
    const auto dec = train_and_evaluate("burgers_MI2A_LossDecomp",
                                        run_config("burgers", {256}, 2, models::EvolverKind::Mi2a, training::LossMode::Decomposed, ep, opt_.seed),
                                        train, test, opt_.out);
    const auto cran = train_and_evaluate("burgers_CRAN",
                                         run_config("burgers", {256}, 2, models::EvolverKind::Cran, training::LossMode::Plain, ep, opt_.seed),
                                         train, test, opt_.out);
    const double d = dec.evals[0].physical.mean_mse, c = cran.evals[0].physical.mean_mse, ratio = c / d;
    o.passed = d <= 2e-3 && ratio >= 3.0;
    o.detail = "Re=1100 <MSE> LossDecomp " + sci(d) + " (tol 2e-3), CRAN " + sci(c) + ", ratio " + fmt("%.2f", ratio) +
               " (need >= 3); epochs " + std::to_string(ep);
    o.data = {{"mse_decomp", d}, {"mse_cran", c}, {"ratio", ratio}};
    return o;
  }

  Outcome shallow_water() {
    Outcome o{7, "2D shallow water"};
    datagen::ShallowWaterConfig sc;
    sc.nx = sc.ny = 64;
    const auto train = datagen::gen_shallow_water(datagen::linspace(0.25, 0.75, 10), sc);
    const auto test = datagen::gen_shallow_water(datagen::shallow_water_params().test, sc);

    double drift = 0.0;
    const std::size_t frame = 64 * 64;
    for (const auto* ds : {&train, &test}) {
      for (std::size_t m = 0; m < ds->params.size(); ++m) {
        const Tensor tr = ds->trajectory(m);
        auto mass = [&](std::size_t k) {
          double s = 0.0;
          for (std::size_t i = 0; i < frame; ++i) s += sc.depth + tr[k * frame + i];
          return s;
        };
        const double m0 = mass(0);
        for (std::size_t k = 1; k < sc.nt; ++k) drift = std::max(drift, std::abs(mass(k) - m0) / m0);
      }
    }

    const std::size_t ep = opt_.epochs ? *opt_.epochs : opt_.sw_epochs;
    const auto mi2a = train_and_evaluate("sw_MI2A_LossDecomp",
                                         run_config("shallow_water", {64, 64}, 8, models::EvolverKind::Mi2a, training::LossMode::Decomposed, ep, opt_.seed),
                                         train, test, opt_.out);
    const auto cran = train_and_evaluate("sw_CRAN",
                                         run_config("shallow_water", {64, 64}, 8, models::EvolverKind::Cran, training::LossMode::Plain, ep, opt_.seed),
                                         train, test, opt_.out);
    // Per-horizon MSE averaged over the test positions.
    auto horizons = [](const Trained& t) {
      std::vector<double> h;
      for (const auto& e : t.evals) {
        const auto v = e.physical.horizon_mse(10);
        if (h.empty()) h.assign(v.size(), 0.0);
        for (std::size_t i = 0; i < v.size(); ++i) h[i] += v[i] / static_cast<double>(t.evals.size());
      }
      return h;
    };
    const auto hm = horizons(mi2a), hc = horizons(cran);
    std::size_t wins = 0;
    for (std::size_t i = 0; i < std::min(hm.size(), hc.size()); ++i) wins += hm[i] < hc[i];
    o.passed = hm.size() == 9 && wins >= 7 && drift <= 1e-3;
    o.detail = "MI2A below CRAN on " + std::to_string(wins) + "/" + std::to_string(hm.size()) +
               " horizons (need >= 7 of 9); max mass drift " + sci(drift) + " (tol 1e-3); epochs " + std::to_string(ep);
    o.data = {{"horizon_mse_mi2a", hm}, {"horizon_mse_cran", hc}, {"mass_drift", drift}};
    return o;
  }

  Outcome determinism() {
    Outcome o{9, "determinism"};
    const auto& a = convection("MI2A_LossDecomp", models::EvolverKind::Mi2a, training::LossMode::Decomposed);
    const auto& b = convection("MI2A_LossDecomp", models::EvolverKind::Mi2a, training::LossMode::Decomposed, "_repeat");
    const double la = a.history.back().total, lb = b.history.back().total;
    o.passed = la == lb;
    o.detail = "final-epoch loss " + fmt("%.17g", la) + " vs " + fmt("%.17g", lb) + (o.passed ? " (bitwise equal)" : " (differ)");
    o.data = {{"first", la}, {"second", lb}};
    return o;
  }

 private:
  Options opt_;
  std::optional<datagen::SnapshotDataset> lc_train_, lc_test_;
  std::map<std::string, Trained> cache_;
};

std::set<int> parse_criteria(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "fast") out.insert({1, 2, 3, 4, 8});
    else if (item == "training") out.insert({5, 6, 7, 9});
    else if (item == "all") out.insert({1, 2, 3, 4, 5, 6, 7, 8, 9});
    else out.insert(std::stoi(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MI2A acceptance criteria"};
  std::string which = "fast";
  Options opt;
  app.add_option("--criteria", which, "Comma list of criterion numbers, or fast / training / all")->capture_default_str();
  app.add_option("--profile", opt.profile, "Training profile for criteria 5, 6 and 9")->check(CLI::IsMember({"ci", "full"}))->capture_default_str();
  app.add_option("--epochs", opt.epochs, "Override the epoch count of every training criterion");
  app.add_option("--sw-epochs", opt.sw_epochs, "Epochs per model for criterion 7")->capture_default_str();
  app.add_option("--seed", opt.seed, "Training seed")->capture_default_str();
  app.add_option("--out", opt.out, "Directory for checkpoints, loss histories and results.json");
  CLI11_PARSE(app, argc, argv);

  tune_allocator();
  std::set<int> selected;
  try {
    selected = parse_criteria(which);
  } catch (const std::exception&) {
    std::cerr << "bad --criteria '" << which << "'\n";
    return 2;
  }
  if (!opt.out.empty()) fs::create_directories(opt.out);

  TrainingCriteria training(opt);
  const std::map<int, std::function<Outcome()>> table{
      {1, decomposition_identity},
      {2, ab2_equivalence},
      {3, gradient_checks},
      {4, parameter_count},
      {5, [&] { return training.linear_convection(); }},
      {6, [&] { return training.burgers(); }},
      {7, [&] { return training.shallow_water(); }},
      {8, data_pipeline},
      {9, [&] { return training.determinism(); }},
  };

  json report = json::array();
  bool all = true;
  for (int id : selected) {
    const auto it = table.find(id);
    if (it == table.end()) {
      std::cerr << "no criterion " << id << "\n";
      return 2;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = Outcome{id, "criterion " + std::to_string(id), false, std::string("error: ") + e.what()};
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all = all && o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " [" << o.id << "] " << o.name << ": " << o.detail << " ("
              << fmt("%.1f", o.seconds) << " s)" << std::endl;
    report.push_back({{"id", o.id}, {"name", o.name}, {"passed", o.passed}, {"detail", o.detail}, {"seconds", o.seconds}, {"data", o.data}});
  }
  if (!opt.out.empty()) std::ofstream(opt.out / "results.json") << report.dump(2) << "\n";
  return all ? 0 : 1;
}
