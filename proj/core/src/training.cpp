#include "mi2a/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mi2a/errors.hpp"
#include "mi2a/ops.hpp"
#include "mi2a/parallel.hpp"
#include "mi2a/tensor_io.hpp"

namespace mi2a::training {

using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

// Unbiased index in [0, n) by rejection; std::uniform_int_distribution is not portable.
std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v > limit);
  return static_cast<std::size_t>(v % bound);
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw FormatError("checkpoint: unreadable sampler state");
  return rng;
}

// Parameter names are dotted identifiers, safe as file stems.
std::filesystem::path tensor_file(const std::filesystem::path& dir, const std::string& kind, const std::string& name) {
  return dir / (kind + "." + name + ".mi2a");
}

double group_norm(const ParameterStore& params, std::string_view prefix) {
  double s = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    if (!p.name.starts_with(prefix)) continue;
    for (double g : p.grad.data()) s += g * g;
  }
  return std::sqrt(s);
}

void copy_values(ParameterStore& dst, const ParameterStore& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.get(src[i].name).value = src[i].value;
}

json epoch_to_json(const EpochLoss& e) {
  return {{"epoch", e.epoch}, {"total", e.total}, {"ae", e.ae}, {"evolver", e.evolver},
          {"dissipation", e.dissipation}, {"dispersion", e.dispersion}};
}

EpochLoss epoch_from_json(const json& j) {
  return {j.at("epoch").get<std::size_t>(), j.at("total").get<double>(), j.at("ae").get<double>(),
          j.at("evolver").get<double>(), j.at("dissipation").get<double>(), j.at("dispersion").get<double>()};
}

}  // namespace

std::string to_string(LossMode mode) { return mode == LossMode::Decomposed ? "decomposed" : "plain"; }

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "decomposed") return LossMode::Decomposed;
  if (s == "plain") return LossMode::Plain;
  throw ConfigError({"loss_mode must be 'decomposed' or 'plain', got '" + s + "'"});
}

// ---- RunConfig ------------------------------------------------------------------------

void RunConfig::validate() const {
  std::vector<std::string> bad;
  static const std::vector<std::string> known{"linear_convection", "burgers", "shallow_water"};
  if (std::find(known.begin(), known.end(), benchmark) == known.end()) bad.push_back("unknown benchmark '" + benchmark + "'");
  if (epochs < 1) bad.push_back("epochs must be >= 1");
  if (batch_size < 1) bad.push_back("batch_size must be >= 1");
  if (window < 1) bad.push_back("window must be >= 1");
  if (!(adam.learning_rate > 0.0)) bad.push_back("adam.learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) bad.push_back("adam.beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) bad.push_back("adam.beta2 must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) bad.push_back("adam.epsilon must be positive");
  if (!(noise.stddev >= 0.0) || !std::isfinite(noise.mean)) bad.push_back("noise must have finite mean and stddev >= 0");
  for (const auto& check : {std::function<void()>([&] { model.validate(); }),
                            std::function<void()>([&] { weights.validate(); })}) {
    try {
      check();
    } catch (const ConfigError& e) {
      bad.insert(bad.end(), e.problems().begin(), e.problems().end());
    }
  }
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

json RunConfig::to_json() const {
  return json{{"benchmark", benchmark},
              {"model", model.to_json()},
              {"loss", {{"xi", weights.xi}, {"psi", weights.psi}, {"mode", to_string(loss_mode)}}},
              {"epochs", epochs},
              {"batch_size", batch_size},
              {"adam", {{"learning_rate", adam.learning_rate}, {"beta1", adam.beta1}, {"beta2", adam.beta2},
                        {"epsilon", adam.epsilon}}},
              {"seed", seed},
              {"noise", {{"mean", noise.mean}, {"stddev", noise.stddev}}},
              {"window", window},
              {"train_params", train_params},
              {"checkpoint_every", checkpoint_every},
              {"data_path", data_path},
              {"out_dir", out_dir}};
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError({"run config must be a JSON object"});
  RunConfig c;
  std::vector<std::string> bad;
  auto nested = [&](const std::string& section, const json& obj, const std::function<void(const std::string&, const json&)>& set) {
    if (!obj.is_object()) {
      bad.push_back(section + " must be an object");
      return;
    }
    for (const auto& [k, v] : obj.items()) {
      try {
        set(k, v);
      } catch (const json::exception& e) {
        bad.push_back(section + "." + k + ": " + e.what());
      } catch (const ConfigError& e) {
        bad.insert(bad.end(), e.problems().begin(), e.problems().end());
      }
    }
  };
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "benchmark") {
        c.benchmark = value.get<std::string>();
      } else if (key == "model") {
        c.model = models::ModelConfig::from_json(value);
      } else if (key == "loss") {
        nested("loss", value, [&](const std::string& k, const json& v) {
          if (k == "xi") c.weights.xi = v.get<double>();
          else if (k == "psi") c.weights.psi = v.get<double>();
          else if (k == "mode") c.loss_mode = loss_mode_from_string(v.get<std::string>());
          else bad.push_back("loss: unknown key '" + k + "'");
        });
      } else if (key == "epochs") {
        c.epochs = value.get<std::size_t>();
      } else if (key == "batch_size") {
        c.batch_size = value.get<std::size_t>();
      } else if (key == "adam") {
        nested("adam", value, [&](const std::string& k, const json& v) {
          if (k == "learning_rate") c.adam.learning_rate = v.get<double>();
          else if (k == "beta1") c.adam.beta1 = v.get<double>();
          else if (k == "beta2") c.adam.beta2 = v.get<double>();
          else if (k == "epsilon") c.adam.epsilon = v.get<double>();
          else bad.push_back("adam: unknown key '" + k + "'");
        });
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "noise") {
        nested("noise", value, [&](const std::string& k, const json& v) {
          if (k == "mean") c.noise.mean = v.get<double>();
          else if (k == "stddev") c.noise.stddev = v.get<double>();
          else bad.push_back("noise: unknown key '" + k + "'");
        });
      } else if (key == "window") {
        c.window = value.get<std::size_t>();
      } else if (key == "train_params") {
        c.train_params = value.get<std::vector<double>>();
      } else if (key == "checkpoint_every") {
        c.checkpoint_every = value.get<std::size_t>();
      } else if (key == "data_path") {
        c.data_path = value.get<std::string>();
      } else if (key == "out_dir") {
        c.out_dir = value.get<std::string>();
      } else {
        bad.push_back("unknown key '" + key + "'");
      }
    } catch (const json::exception& e) {
      bad.push_back(key + ": " + e.what());
    } catch (const ConfigError& e) {
      bad.insert(bad.end(), e.problems().begin(), e.problems().end());
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    bad.insert(bad.end(), e.problems().begin(), e.problems().end());
  }
  if (!bad.empty()) throw ConfigError(std::move(bad));
  return c;
}

std::uint64_t RunConfig::hash() const {
  json j = to_json();
  j.erase("data_path");
  j.erase("out_dir");
  return fnv1a64(j.dump());
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError({"override '" + assignment + "' is not key=value"});
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError({"override '" + assignment + "' has an empty key segment"});
    if (!node->is_object()) throw ConfigError({"override '" + assignment + "' descends into a non-object"});
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string loss_history_csv(const std::vector<EpochLoss>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,L_total,L_AE,tau_diss,tau_disp\n";
  for (const auto& e : history) os << e.epoch << ',' << e.total << ',' << e.ae << ',' << e.dissipation << ',' << e.dispersion << '\n';
  return os.str();
}

// ---- sampling -------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0 || batch_size > n) {
    throw ConfigError({"batch size " + std::to_string(batch_size) + " must lie in [1, " + std::to_string(n) + "]"});
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < n; s += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch_size)));
  }
  return batches;
}

Batch gather_batch(const datagen::TrainingPairs& pairs, std::span<const std::size_t> indices) {
  const std::size_t n = pairs.samples();
  const std::size_t row = n == 0 ? 0 : pairs.x_clean.size() / n;
  Shape shape = pairs.x_clean.shape();
  shape[0] = indices.size();
  Batch b{Tensor::uninitialized(shape), Tensor::uninitialized(shape), Tensor::uninitialized(shape)};
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= n) throw ShapeError("gather_batch: index " + std::to_string(i) + " out of " + std::to_string(n));
    std::copy_n(pairs.x_noisy.raw() + i * row, row, b.x_noisy.raw() + k * row);
    std::copy_n(pairs.x_clean.raw() + i * row, row, b.x_clean.raw() + k * row);
    std::copy_n(pairs.y.raw() + i * row, row, b.y.raw() + k * row);
  }
  return b;
}

// ---- checkpoint -----------------------------------------------------------------------

void Checkpoint::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json names = json::array();
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    const Parameter& p = parameters[i];
    names.push_back(p.name);
    save_tensor(tensor_file(dir, "param", p.name), p.value);
    save_tensor(tensor_file(dir, "adam_m", p.name), adam.first_moment.at(i));
    save_tensor(tensor_file(dir, "adam_v", p.name), adam.second_moment.at(i));
  }
  json hist = json::array();
  for (const auto& e : history) hist.push_back(epoch_to_json(e));
  const json manifest{{"format_version", kCheckpointVersion},
                      {"config", config.to_json()},
                      {"config_hash", config.hash()},
                      {"epoch", epoch},
                      {"adam_step", adam.step},
                      {"rng_state", rng_state},
                      {"normalization", {{"min", normalization.min}, {"max", normalization.max}}},
                      {"parameters", names},
                      {"history", hist}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw FormatError("checkpoint: cannot write " + (dir / "manifest.json").string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("checkpoint: missing " + (dir / "manifest.json").string());
  const json m = json::parse(in, nullptr, false);
  if (m.is_discarded() || !m.is_object()) throw FormatError("checkpoint: malformed manifest.json");
  try {
    if (m.at("format_version").get<int>() != kCheckpointVersion) throw FormatError("checkpoint: unsupported format_version");
    Checkpoint c;
    c.config = RunConfig::from_json(m.at("config"));
    if (m.at("config_hash").get<std::uint64_t>() != c.config.hash()) throw FormatError("checkpoint: config hash mismatch");
    c.epoch = m.at("epoch").get<std::size_t>();
    c.rng_state = m.at("rng_state").get<std::string>();
    c.normalization = {m.at("normalization").at("min").get<double>(), m.at("normalization").at("max").get<double>()};
    c.adam.config = c.config.adam;
    c.adam.step = m.at("adam_step").get<std::uint64_t>();
    for (const auto& name_json : m.at("parameters")) {
      const auto name = name_json.get<std::string>();
      c.parameters.add(name, load_tensor(tensor_file(dir, "param", name)));
      c.adam.first_moment.push_back(load_tensor(tensor_file(dir, "adam_m", name)));
      c.adam.second_moment.push_back(load_tensor(tensor_file(dir, "adam_v", name)));
    }
    for (const auto& e : m.at("history")) c.history.push_back(epoch_from_json(e));
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

models::Model Checkpoint::model() const {
  models::Model m(config.model, config.seed);
  const auto expected = m.parameters().names();
  const auto got = parameters.names();
  if (std::set<std::string>(expected.begin(), expected.end()) != std::set<std::string>(got.begin(), got.end())) {
    throw FormatError("checkpoint parameters do not match the model config");
  }
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    Parameter& p = m.parameters().get(parameters[i].name);
    if (p.value.shape() != parameters[i].value.shape()) {
      throw FormatError("checkpoint: " + p.name + " has shape " + shape_string(parameters[i].value.shape()) +
                        ", model expects " + shape_string(p.value.shape()));
    }
    p.value = parameters[i].value;
  }
  return m;
}

// ---- trainer --------------------------------------------------------------------------

Trainer::Trainer(RunConfig cfg, const datagen::TrainingPairs& pairs)
    : cfg_(std::move(cfg)),
      pairs_(&pairs),
      model_((cfg_.validate(), cfg_.model), cfg_.seed),
      adam_(AdamState::for_parameters(model_.parameters(), cfg_.adam)),
      rng_(derive_seed(cfg_.seed, "training.batches")) {
  tune_allocator();
  Shape expected{0, cfg_.window};
  expected.insert(expected.end(), cfg_.model.spatial.begin(), cfg_.model.spatial.end());
  Shape got = pairs.x_clean.shape();
  if (!got.empty()) got[0] = 0;
  if (got != expected) {
    throw ShapeError("training pairs " + shape_string(pairs.x_clean.shape()) + " do not fit window " +
                     std::to_string(cfg_.window) + " and spatial " + shape_string(cfg_.model.spatial));
  }
  if (pairs.samples() < cfg_.batch_size) {
    throw ConfigError({"batch_size " + std::to_string(cfg_.batch_size) + " exceeds the " +
                       std::to_string(pairs.samples()) + " training samples"});
  }
}

Trainer::Trainer(const Checkpoint& ckpt, const datagen::TrainingPairs& pairs) : Trainer(ckpt.config, pairs) {
  copy_values(model_.parameters(), ckpt.model().parameters());
  adam_ = ckpt.adam;
  if (adam_.first_moment.size() != model_.parameters().size()) throw FormatError("checkpoint: optimizer state size mismatch");
  // Moments were saved in store order; re-align by name in case the order differs.
  AdamState aligned = adam_;
  for (std::size_t i = 0; i < ckpt.parameters.size(); ++i) {
    const auto names = model_.parameters().names();
    const auto it = std::find(names.begin(), names.end(), ckpt.parameters[i].name);
    const auto k = static_cast<std::size_t>(it - names.begin());
    aligned.first_moment[k] = ckpt.adam.first_moment[i];
    aligned.second_moment[k] = ckpt.adam.second_moment[i];
  }
  adam_ = std::move(aligned);
  rng_ = rng_from_string(ckpt.rng_state);
  epoch_ = ckpt.epoch;
  history_ = ckpt.history;
}

EpochLoss Trainer::run_epoch() {
  if (!good_) snapshot_good_state();
  const double xi = cfg_.weights.xi, psi = cfg_.weights.psi;
  EpochLoss acc;
  acc.epoch = epoch_ + 1;
  const auto batches = shuffled_batches(pairs_->samples(), cfg_.batch_size, rng_);
  for (const auto& idx : batches) {
    const Batch b = gather_batch(*pairs_, idx);
    Graph g;
    const auto out = model_.forward(g, g.constant(b.x_noisy));
    Var truth = g.constant(b.y);
    Var ae = losses::ae_loss(out.reconstruction, g.constant(b.x_clean));
    const losses::EvolverLoss parts = losses::evolver_loss(out.prediction, truth, psi);
    Var evolver = cfg_.loss_mode == LossMode::Decomposed ? parts.total : losses::plain_mse_evolver_loss(out.prediction, truth);
    Var total = losses::total_loss(ae, evolver, xi);

    const double t = total.value()[0];
    if (!std::isfinite(t)) {
      restore_good_state();
      throw TrainingAborted("non-finite training loss in epoch " + std::to_string(acc.epoch), epoch_);
    }
    model_.parameters().zero_grad();
    g.backward(total);
    try {
      adam_update(model_.parameters(), adam_);
    } catch (const NumericError& e) {
      restore_good_state();
      throw TrainingAborted(std::string(e.what()) + " in epoch " + std::to_string(acc.epoch), epoch_);
    }

    const double w = static_cast<double>(idx.size());
    acc.total += w * t;
    acc.ae += w * ae.value()[0];
    acc.evolver += w * evolver.value()[0];
    acc.dissipation += w * parts.dissipation.value()[0];
    acc.dispersion += w * parts.dispersion.value()[0];
  }
  const auto& params = model_.parameters();
  audit_ = {group_norm(params, "encoder."), group_norm(params, "decoder."), group_norm(params, "evolver.")};

  const double n = static_cast<double>(pairs_->samples());
  acc.total /= n;
  acc.ae /= n;
  acc.evolver /= n;
  acc.dissipation /= n;
  acc.dispersion /= n;
  ++epoch_;
  history_.push_back(acc);
  snapshot_good_state();
  return acc;
}

void Trainer::run(const std::function<void(const EpochLoss&, const Trainer&)>& on_epoch) {
  while (epoch_ < cfg_.epochs) {
    const EpochLoss e = run_epoch();
    if (on_epoch) on_epoch(e, *this);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = cfg_;
  c.parameters = model_.parameters();
  for (std::size_t i = 0; i < c.parameters.size(); ++i) c.parameters[i].grad = Tensor();
  c.adam = adam_;
  c.epoch = epoch_;
  c.rng_state = rng_to_string(rng_);
  c.normalization = pairs_->normalization;
  c.history = history_;
  return c;
}

void Trainer::snapshot_good_state() {
  good_ = GoodState{model_.parameters(), adam_, rng_, epoch_, history_.size()};
}

void Trainer::restore_good_state() {
  copy_values(model_.parameters(), good_->parameters);
  model_.parameters().zero_grad();
  adam_ = good_->adam;
  rng_ = good_->rng;
  epoch_ = good_->epoch;
  history_.resize(good_->history_size);
}

datagen::SnapshotDataset select_params(const datagen::SnapshotDataset& ds, const std::vector<double>& params) {
  if (params.empty()) return ds;
  std::vector<std::size_t> rows;
  std::vector<std::string> missing;
  for (double p : params) {
    std::size_t found = ds.params.size();
    for (std::size_t i = 0; i < ds.params.size(); ++i) {
      if (std::abs(ds.params[i] - p) <= 1e-9 * std::max(1.0, std::abs(p))) found = i;
    }
    if (found == ds.params.size()) {
      std::ostringstream os;
      os << "parameter " << p << " is not in the dataset";
      missing.push_back(os.str());
    } else {
      rows.push_back(found);
    }
  }
  if (!missing.empty()) throw ConfigError(std::move(missing));
  datagen::SnapshotDataset out = ds;
  out.params.clear();
  Shape shape = ds.snapshots.shape();
  const std::size_t row = ds.snapshots.size() / shape[0];
  shape[0] = rows.size();
  out.snapshots = Tensor::uninitialized(shape);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.params.push_back(ds.params[rows[k]]);
    std::copy_n(ds.snapshots.raw() + rows[k] * row, row, out.snapshots.raw() + k * row);
  }
  // Bounds stay those of the full dataset so subsets share one normalization.
  return out;
}

}  // namespace mi2a::training
