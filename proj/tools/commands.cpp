#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mi2a/datagen.hpp"
#include "mi2a/errors.hpp"
#include "mi2a/eval.hpp"
#include "mi2a/gradcheck.hpp"
#include "mi2a/lmm_bridge.hpp"
#include "mi2a/parallel.hpp"
#include "mi2a/random.hpp"
#include "mi2a/tensor_io.hpp"

#ifndef MI2A_VERSION
#define MI2A_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace mi2a::cli {

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open '" + path.string() + "'"});
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("failed to write " + path.string());
}

std::string param_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", p);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// gen-data takes {"solver": {...}, "train_params": [...], "test_params": [...]}, all optional.
struct DataConfig {
  json solver = json::object();
  std::vector<double> train;
  std::vector<double> test;

  json to_json() const { return {{"solver", solver}, {"train_params", train}, {"test_params", test}}; }
};

DataConfig data_config_from(const json& doc, const std::string& benchmark) {
  std::vector<std::string> bad;
  if (!doc.is_object()) throw ConfigError({"data config must be a JSON object"});
  const datagen::ParameterSplit defaults = datagen::default_params(benchmark);
  DataConfig c{json::object(), defaults.train, defaults.test};
  for (const auto& [k, v] : doc.items()) {
    try {
      if (k == "solver") c.solver = v;
      else if (k == "train_params") c.train = v.get<std::vector<double>>();
      else if (k == "test_params") c.test = v.get<std::vector<double>>();
      else bad.push_back("unknown key '" + k + "'");
    } catch (const json::exception& e) {
      bad.push_back(k + ": " + e.what());
    }
  }
  if (c.train.empty()) bad.push_back("train_params must not be empty");
  if (!bad.empty()) throw ConfigError(std::move(bad));
  return c;
}

std::string canonical_benchmark(std::string b) {
  for (char& ch : b)
    if (ch == '-') ch = '_';
  if (b == "convection") b = "linear_convection";
  return b;
}

}  // namespace

training::RunConfig default_run_config(const std::string& benchmark) {
  training::RunConfig c;
  c.benchmark = canonical_benchmark(benchmark);
  if (c.benchmark == "shallow_water") {
    c.model.spatial = {184, 184};
    c.model.latent = 8;
  }
  return c;
}

training::RunConfig resolve_run_config(const std::string& path, const std::string& fallback_benchmark,
                                       const std::vector<std::string>& overrides) {
  json doc = path.empty() ? default_run_config(fallback_benchmark).to_json() : read_json(path);
  for (const auto& o : overrides) training::apply_override(doc, o);
  return training::RunConfig::from_json(doc);
}

std::string variant_name(const training::RunConfig& cfg) {
  std::string base = cfg.model.evolver == models::EvolverKind::Mi2a    ? "MI2A"
                     : cfg.model.evolver == models::EvolverKind::Luong ? "Luong"
                                                                       : "CRAN";
  return cfg.loss_mode == training::LossMode::Decomposed ? base + "_LossDecomp" : base;
}

void write_manifest(const fs::path& file, const std::string& subcommand, const json& config, std::uint64_t config_hash,
                    std::uint64_t seed, const std::vector<std::string>& artifacts) {
  const json m{{"tool", "mi2a"},
               {"version", MI2A_VERSION},
               {"subcommand", subcommand},
               {"config", config},
               {"config_hash", config_hash},
               {"seed", seed},
               {"tensor_format_version", kTensorFormatVersion},
               {"artifacts", artifacts},
               {"created", utc_now()}};
  write_text(file, m.dump(2) + "\n");
}

// ---- gen-data -----------------------------------------------------------------------

int gen_data(const GenDataOptions& o, std::ostream& log) {
  const std::string benchmark = canonical_benchmark(o.benchmark);
  json doc = o.config_path.empty() ? json::object() : read_json(o.config_path);
  for (const auto& s : o.overrides) training::apply_override(doc, s);
  const DataConfig cfg = data_config_from(doc, benchmark);

  fs::create_directories(o.out);
  std::vector<std::string> artifacts;
  for (const auto& [split, params] : {std::pair{"train", cfg.train}, std::pair{"test", cfg.test}}) {
    if (params.empty()) continue;
    const datagen::SnapshotDataset ds = datagen::generate(benchmark, params, cfg.solver);
    const std::string file = std::string(split) + ".mi2a";
    datagen::save_dataset(o.out / file, ds);
    artifacts.push_back(file);
    artifacts.push_back(file + ".json");
    log << split << ": " << shape_string(ds.snapshots.shape()) << " range [" << ds.global_min << ", " << ds.global_max
        << "]\n";
  }
  json resolved = cfg.to_json();
  resolved["benchmark"] = benchmark;
  write_manifest(o.out / "manifest.json", "gen-data", resolved, fnv1a64(resolved.dump()), 0, artifacts);
  return kExitOk;
}

// ---- train --------------------------------------------------------------------------

int train(const TrainOptions& o, std::ostream& log) {
  tune_allocator();
  const datagen::SnapshotDataset full = datagen::load_dataset(o.data / "train.mi2a");

  std::optional<training::Checkpoint> resume;
  training::RunConfig cfg;
  if (!o.resume.empty()) {
    resume = training::Checkpoint::load(o.resume);
    cfg = resume->config;
  } else {
    cfg = resolve_run_config(o.config_path, full.benchmark, o.overrides);
    if (o.seed) cfg.seed = *o.seed;
    cfg.data_path = o.data.string();
    cfg.out_dir = o.out.string();
  }
  std::vector<std::string> bad;
  if (cfg.benchmark != full.benchmark) bad.push_back("benchmark: config says " + cfg.benchmark + ", data holds " + full.benchmark);
  if (cfg.model.spatial != full.grid.spatial_shape()) {
    bad.push_back("model.spatial: config " + shape_string(cfg.model.spatial) + " does not match data " +
                  shape_string(full.grid.spatial_shape()));
  }
  if (!bad.empty()) throw ConfigError(std::move(bad));

  const datagen::SnapshotDataset ds = cfg.train_params.empty() ? full : training::select_params(full, cfg.train_params);
  const datagen::TrainingPairs pairs = datagen::build_pairs(ds, cfg.window, cfg.noise, cfg.seed);
  training::Trainer trainer = resume ? training::Trainer(*resume, pairs) : training::Trainer(cfg, pairs);
  log << variant_name(cfg) << ": " << pairs.samples() << " samples, " << trainer.model().parameters().scalar_count()
      << " parameters, epochs " << trainer.epoch() + 1 << ".." << cfg.epochs << "\n";

  fs::create_directories(o.out);
  auto save = [&] {
    trainer.checkpoint().save(o.out / "checkpoint");
    write_text(o.out / "loss_history.csv", training::loss_history_csv(trainer.history()));
  };
  const std::size_t every = std::max<std::size_t>(1, cfg.epochs / 100);
  try {
    trainer.run([&](const training::EpochLoss& e, const training::Trainer&) {
      if (!o.quiet && (e.epoch % every == 0 || e.epoch == 1 || e.epoch == cfg.epochs)) {
        log << "epoch " << e.epoch << "/" << cfg.epochs << " total=" << e.total << " ae=" << e.ae
            << " evolver=" << e.evolver << "\n";
      }
      if (cfg.checkpoint_every > 0 && e.epoch % cfg.checkpoint_every == 0) save();
    });
  } catch (const training::TrainingAborted&) {
    save();
    throw;
  }
  save();
  write_text(o.out / "run_config.json", cfg.to_json().dump(2) + "\n");
  write_manifest(o.out / "manifest.json", "train", cfg.to_json(), cfg.hash(), cfg.seed,
                 {"checkpoint/manifest.json", "loss_history.csv", "run_config.json"});
  return kExitOk;
}

// ---- evaluate -----------------------------------------------------------------------

int evaluate(const EvaluateOptions& o, std::ostream& log) {
  const training::Checkpoint ckpt = training::Checkpoint::load(o.checkpoint);
  const datagen::SnapshotDataset ds = datagen::load_dataset(o.data / "test.mi2a");
  if (ckpt.config.model.spatial != ds.grid.spatial_shape()) {
    throw ConfigError({"model.spatial " + shape_string(ckpt.config.model.spatial) + " does not match test data " +
                       shape_string(ds.grid.spatial_shape())});
  }
  models::Model model = ckpt.model();
  const std::size_t window = ckpt.config.window;
  const auto results = eval::evaluate_dataset(eval::model_predictor(model), ds, ckpt.normalization, window, o.horizons);

  fs::create_directories(o.out);
  const std::string name = o.name.empty() ? variant_name(ckpt.config) : o.name;
  json per_param = json::array();
  std::vector<std::string> artifacts;
  for (const auto& r : results) {
    const std::string label = param_label(r.param);
    write_text(o.out / ("metrics_" + label + ".csv"), r.physical.to_csv(window));
    artifacts.push_back("metrics_" + label + ".csv");
    if (o.export_fields) {
      save_tensor(o.out / ("error_field_" + label + ".mi2a"), r.error_field);
      artifacts.push_back("error_field_" + label + ".mi2a");
    }
    per_param.push_back({{"param", r.param},
                         {"horizons", r.rollout.horizons()},
                         {"truncated", r.rollout.truncated},
                         {"mse", r.physical.mean_mse},
                         {"mae", r.physical.mean_mae},
                         {"linf", r.physical.mean_linf},
                         {"normalized", {{"mse", r.normalized.mean_mse}, {"mae", r.normalized.mean_mae}, {"linf", r.normalized.mean_linf}}},
                         {"horizon_mse", r.physical.horizon_mse(window)}});
    log << name << " param=" << label << " horizons=" << r.rollout.horizons() << (r.rollout.truncated ? " (truncated)" : "")
        << " MSE=" << r.physical.mean_mse << " MAE=" << r.physical.mean_mae << " Linf=" << r.physical.mean_linf << "\n";
  }
  const json summary{{"variant", name}, {"epoch", ckpt.epoch}, {"window", window}, {"units", "physical"}, {"results", per_param}};
  write_text(o.out / "summary.json", summary.dump(2) + "\n");
  artifacts.push_back("summary.json");
  write_manifest(o.out / "manifest.json", "evaluate", ckpt.config.to_json(), ckpt.config.hash(), ckpt.config.seed, artifacts);
  return kExitOk;
}

// ---- table --------------------------------------------------------------------------

int table(const TableOptions& o, std::ostream& log) {
  std::vector<eval::VariantResult> variants;
  for (const auto& dir : o.runs) {
    const json s = read_json(dir / "summary.json");
    eval::VariantResult v{s.at("variant").get<std::string>(), {}};
    for (const auto& r : s.at("results")) {
      eval::MetricSeries m;
      m.mean_mse = r.at("mse").get<double>();
      m.mean_mae = r.at("mae").get<double>();
      m.mean_linf = r.at("linf").get<double>();
      v.per_param.emplace_back(r.at("param").get<double>(), m);
    }
    variants.push_back(std::move(v));
  }
  const std::string csv = eval::table_csv(variants, eval::comparison_table(variants, o.metrics));
  write_text(o.out, csv);
  log << csv;
  json cfg{{"runs", json::array()}, {"metrics", o.metrics}};
  for (const auto& r : o.runs) cfg["runs"].push_back(r.string());
  fs::path manifest = o.out;
  manifest.replace_extension(".manifest.json");
  write_manifest(manifest, "table", cfg, fnv1a64(cfg.dump()), 0, {o.out.filename().string()});
  return kExitOk;
}

// ---- lmm-verify ---------------------------------------------------------------------

int lmm_verify(const LmmVerifyOptions& o, std::ostream& log) {
  const lmm::UpwindSystem sys{o.mu, o.dx, o.dt};
  sys.validate();
  if (o.points < 2) throw ConfigError({"points must be >= 2"});
  // Smooth bump centred in the periodic domain.
  Tensor u0({o.points});
  const double centre = 0.5 * static_cast<double>(o.points), width = 0.05 * static_cast<double>(o.points);
  for (std::size_t i = 0; i < o.points; ++i) {
    const double s = (static_cast<double>(i) - centre) / width;
    u0[i] = std::exp(-0.5 * s * s);
  }
  const lmm::EquivalenceReport r = lmm::attention_emulates_ab2(sys, u0, o.steps, o.window, o.tolerance);
  const auto& c = r.coefficients;
  log << std::setprecision(17) << (r.passed ? "PASS" : "FAIL") << " cfl=" << r.cfl << " steps=" << r.steps
      << " window=" << r.window << " max_deviation=" << r.max_deviation << " tolerance=" << r.tolerance << "\n"
      << "gamma1=" << c.gamma1 << " delta1=" << c.delta1 << " gamma2=" << c.gamma2 << " delta2=" << c.delta2
      << " consistency_sum=" << c.consistency_sum() << "\n";
  if (!o.out.empty()) {
    write_text(o.out / "ab2_equivalence.csv", r.to_csv());
    const json cfg{{"mu", o.mu}, {"dt", o.dt}, {"dx", o.dx}, {"steps", o.steps}, {"window", o.window},
                   {"points", o.points}, {"tolerance", o.tolerance}};
    write_manifest(o.out / "manifest.json", "lmm-verify", cfg, fnv1a64(cfg.dump()), 0, {"ab2_equivalence.csv"});
  }
  return r.passed ? kExitOk : kExitNumeric;
}

// ---- gradcheck ----------------------------------------------------------------------

int gradcheck(const GradcheckOptions& o, std::ostream& log) {
  const auto results = run_op_gradchecks(o.module, o.seed);
  if (results.empty()) throw ConfigError({"module: no gradient check matches '" + o.module + "'"});
  bool ok = true;
  log << std::left << std::setw(20) << "op" << std::setw(16) << "max_rel_err" << "status\n";
  for (const auto& r : results) {
    const bool pass = r.max_relative_error <= o.tolerance;
    ok = ok && pass;
    log << std::setw(20) << r.name << std::setw(16) << std::setprecision(3) << std::scientific << r.max_relative_error
        << (pass ? "PASS" : "FAIL") << "\n";
  }
  log << std::defaultfloat << results.size() << " ops, tolerance " << o.tolerance << ": " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kExitOk : kExitNumeric;
}

// ---- error mapping ------------------------------------------------------------------

int guarded(const std::function<int()>& body, std::ostream& err) {
  auto report = [&](const char* kind, const std::string& message, int code, json extra = json::object()) {
    extra["error"] = kind;
    extra["message"] = message;
    extra["exit_code"] = code;
    err << extra.dump() << "\n";
    return code;
  };
  try {
    return body();
  } catch (const ConfigError& e) {
    return report("config", e.what(), kExitConfig, {{"problems", e.problems()}});
  } catch (const training::TrainingAborted& e) {
    return report("numeric", e.what(), kExitNumeric, {{"last_good_epoch", e.last_good_epoch()}});
  } catch (const NumericError& e) {
    return report("numeric", e.what(), kExitNumeric);
  } catch (const ShapeError& e) {
    return report("shape", e.what(), kExitFailure);
  } catch (const FormatError& e) {
    return report("format", e.what(), kExitFailure);
  } catch (const std::exception& e) {
    return report("internal", e.what(), kExitFailure);
  }
}

}  // namespace mi2a::cli
