#include "mi2a/models.hpp"

#include <algorithm>

#include "mi2a/errors.hpp"
#include "mi2a/ops.hpp"
#include "mi2a/random.hpp"

namespace mi2a::models {

using nlohmann::json;

std::string to_string(EvolverKind kind) {
  switch (kind) {
    case EvolverKind::Mi2a:
      return "mi2a";
    case EvolverKind::Luong:
      return "luong";
    case EvolverKind::Cran:
      return "cran";
  }
  return "?";
}

EvolverKind evolver_kind_from_string(const std::string& s) {
  if (s == "mi2a") return EvolverKind::Mi2a;
  if (s == "luong") return EvolverKind::Luong;
  if (s == "cran") return EvolverKind::Cran;
  throw ConfigError({"evolver must be one of mi2a, luong, cran (got '" + s + "')"});
}

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

Shape ModelConfig::bottleneck() const {
  Shape s = spatial;
  for (auto& d : s) d = ceil_div(ceil_div(ceil_div(ceil_div(d, 2), 2), 2), 2);
  return s;
}

Shape ModelConfig::decoded_extent() const {
  Shape s = bottleneck();
  for (auto& d : s) d *= 16;
  return s;
}

void ModelConfig::validate() const {
  std::vector<std::string> bad;
  if (spatial.empty() || spatial.size() > 2) bad.push_back("spatial must have 1 or 2 extents");
  for (std::size_t d : spatial) {
    if (d < 16) bad.push_back("spatial extents must be >= 16");
  }
  if (latent == 0) bad.push_back("latent must be >= 1");
  if (hidden == 0) bad.push_back("hidden must be >= 1");
  if (derivative_kernel == 0) bad.push_back("derivative_kernel must be >= 1");
  if (kernel_size == 0) bad.push_back("kernel_size must be >= 1");
  if (conv_filters[0] == 0 || conv_filters[1] == 0) bad.push_back("conv_filters must be positive");
  if (dense_units[0] == 0 || dense_units[1] == 0) bad.push_back("dense_units must be positive");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

json ModelConfig::to_json() const {
  return json{{"spatial", spatial},
              {"latent", latent},
              {"hidden", hidden},
              {"derivative_kernel", derivative_kernel},
              {"evolver", to_string(evolver)},
              {"conv_filters", {conv_filters[0], conv_filters[1]}},
              {"kernel_size", kernel_size},
              {"dense_units", {dense_units[0], dense_units[1]}}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError({"model config must be an object"});
  ModelConfig c;
  std::vector<std::string> bad;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "spatial") {
        c.spatial = value.get<Shape>();
      } else if (key == "latent") {
        c.latent = value.get<std::size_t>();
      } else if (key == "hidden") {
        c.hidden = value.get<std::size_t>();
      } else if (key == "derivative_kernel") {
        c.derivative_kernel = value.get<std::size_t>();
      } else if (key == "evolver") {
        c.evolver = evolver_kind_from_string(value.get<std::string>());
      } else if (key == "conv_filters" || key == "dense_units") {
        const auto v = value.get<std::vector<std::size_t>>();
        if (v.size() != 2) {
          bad.push_back("model." + key + " must have two entries");
          continue;
        }
        auto* dst = key == "conv_filters" ? c.conv_filters : c.dense_units;
        dst[0] = v[0];
        dst[1] = v[1];
      } else if (key == "kernel_size") {
        c.kernel_size = value.get<std::size_t>();
      } else {
        bad.push_back("model: unknown key '" + key + "'");
      }
    } catch (const json::exception& e) {
      bad.push_back("model." + key + ": " + e.what());
    } catch (const ConfigError& e) {
      for (const auto& p : e.problems()) bad.push_back("model." + key + ": " + p);
    }
  }
  if (!bad.empty()) throw ConfigError(std::move(bad));
  c.validate();
  return c;
}

std::vector<std::pair<std::string, Shape>> parameter_inventory(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t k = cfg.kernel_size, f0 = cfg.conv_filters[0], f1 = cfg.conv_filters[1];
  const std::size_t d0 = cfg.dense_units[0], d1 = cfg.dense_units[1];
  const std::size_t r = cfg.latent, p = cfg.hidden;
  const bool two_d = cfg.spatial_rank() == 2;
  auto kernel = [&](std::size_t a, std::size_t b) { return two_d ? Shape{k, k, a, b} : Shape{k, a, b}; };
  const std::size_t flat = shape_size(cfg.bottleneck()) * f1;

  std::vector<std::pair<std::string, Shape>> inv{
      {"encoder.conv1.kernel", kernel(1, f0)},
      {"encoder.conv1.bias", {f0}},
      {"encoder.conv2.kernel", kernel(f0, f1)},
      {"encoder.conv2.bias", {f1}},
      {"encoder.dense1.weight", {flat, d0}},
      {"encoder.dense1.bias", {d0}},
      {"encoder.dense2.weight", {d0, d1}},
      {"encoder.dense2.bias", {d1}},
      {"encoder.latent.weight", {d1, r}},
      {"encoder.latent.bias", {r}},
      {"decoder.dense1.weight", {r, d1}},
      {"decoder.dense1.bias", {d1}},
      {"decoder.dense2.weight", {d1, d0}},
      {"decoder.dense2.bias", {d0}},
      {"decoder.dense3.weight", {d0, flat}},
      {"decoder.dense3.bias", {flat}},
      {"decoder.deconv1.kernel", kernel(f0, f1)},  // transpose kernels are (K.., Cout, Cin)
      {"decoder.deconv1.bias", {f0}},
      {"decoder.deconv2.kernel", kernel(1, f0)},
      {"decoder.deconv2.bias", {1}},
      {"evolver.enc1.weight", {r + p, 4 * p}},
      {"evolver.enc1.bias", {4 * p}},
      {"evolver.enc2.weight", {2 * p, 4 * p}},
      {"evolver.enc2.bias", {4 * p}},
      {"evolver.dec1.weight", {2 * p, 4 * p}},
      {"evolver.dec1.bias", {4 * p}},
      {"evolver.dec2.weight", {2 * p, 4 * p}},
      {"evolver.dec2.bias", {4 * p}},
  };
  if (cfg.evolver != EvolverKind::Cran) {
    inv.push_back({"evolver.attention.weight", {p, p}});
    inv.push_back({"evolver.attention.bias", {p}});
  }
  if (cfg.evolver == EvolverKind::Mi2a) {
    inv.push_back({"evolver.derivative.kernel", {cfg.derivative_kernel, p, p}});
    inv.push_back({"evolver.derivative.bias", {p}});
  }
  if (cfg.evolver == EvolverKind::Luong) {
    inv.push_back({"evolver.combine.weight", {2 * p, p}});
    inv.push_back({"evolver.combine.bias", {p}});
  }
  inv.push_back({"evolver.output.weight", {p, r}});
  inv.push_back({"evolver.output.bias", {r}});
  return inv;
}

namespace {

Tensor initial_value(const std::string& name, const Shape& shape, std::size_t hidden, std::uint64_t seed) {
  const bool is_bias = name.ends_with(".bias");
  if (is_bias) {
    Tensor b(shape);
    // LSTM forget-gate block starts open.
    if (name.starts_with("evolver.enc") || name.starts_with("evolver.dec")) {
      for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
    }
    return b;
  }
  Rng rng(derive_seed(seed, name));
  std::size_t fan_in = 0, fan_out = 0;
  if (shape.size() == 2) {
    fan_in = shape[0];
    fan_out = shape[1];
  } else {
    // Conv kernels (K.., A, B): receptive field times channel counts.
    const std::size_t field = shape_size(shape) / (shape[shape.size() - 2] * shape.back());
    fan_in = field * shape[shape.size() - 2];
    fan_out = field * shape.back();
  }
  return glorot_uniform(shape, fan_in, fan_out, rng);
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  for (const auto& [name, shape] : parameter_inventory(cfg_)) {
    params_.add(name, initial_value(name, shape, cfg_.hidden, seed));
  }
}

Var Model::param(Graph& g, const std::string& name) { return g.parameter(params_.get(name)); }

void Model::set_fixed_attention(std::vector<double> gamma) {
  if (cfg_.evolver == EvolverKind::Cran) throw ConfigError({"the plain seq2seq evolver has no attention to fix"});
  if (gamma.empty()) throw ConfigError({"fixed attention weights must be non-empty"});
  fixed_attention_ = std::move(gamma);
}

Var Model::encode(Graph& g, Var x) {
  const Shape sx = x.shape();
  const std::size_t sr = cfg_.spatial_rank();
  Shape expect_tail = cfg_.spatial;
  if (sx.size() != 2 + sr || !std::equal(expect_tail.begin(), expect_tail.end(), sx.begin() + 2)) {
    throw ShapeError("encode: expected (B, T, " + shape_string(cfg_.spatial) + "), got " + shape_string(sx));
  }
  const std::size_t b = sx[0], t = sx[1], bt = b * t;
  Shape img{bt};
  img.insert(img.end(), cfg_.spatial.begin(), cfg_.spatial.end());
  img.push_back(1);
  Var h = ops::reshape(x, img);
  auto conv = [&](Var in, const std::string& n) {
    Var k = param(g, n + ".kernel"), bias = param(g, n + ".bias");
    return ops::relu(sr == 1 ? ops::conv1d(in, k, bias, 2) : ops::conv2d(in, k, bias, 2));
  };
  auto pool = [&](Var in) { return sr == 1 ? ops::maxpool1d(in, 2) : ops::maxpool2d(in, 2); };
  h = pool(conv(h, "encoder.conv1"));
  h = pool(conv(h, "encoder.conv2"));
  h = ops::reshape(h, {bt, h.value().size() / bt});
  h = ops::relu(ops::dense(h, param(g, "encoder.dense1.weight"), param(g, "encoder.dense1.bias")));
  h = ops::relu(ops::dense(h, param(g, "encoder.dense2.weight"), param(g, "encoder.dense2.bias")));
  h = ops::dense(h, param(g, "encoder.latent.weight"), param(g, "encoder.latent.bias"));
  return ops::reshape(h, {b, t, cfg_.latent});
}

Var Model::decode(Graph& g, Var z) {
  if (z.shape().size() != 3 || z.dim(2) != cfg_.latent) {
    throw ShapeError("decode: expected (B, T, " + std::to_string(cfg_.latent) + "), got " + shape_string(z.shape()));
  }
  const std::size_t b = z.dim(0), t = z.dim(1), bt = b * t;
  const std::size_t sr = cfg_.spatial_rank();
  Var h = ops::reshape(z, {bt, cfg_.latent});
  h = ops::relu(ops::dense(h, param(g, "decoder.dense1.weight"), param(g, "decoder.dense1.bias")));
  h = ops::relu(ops::dense(h, param(g, "decoder.dense2.weight"), param(g, "decoder.dense2.bias")));
  h = ops::relu(ops::dense(h, param(g, "decoder.dense3.weight"), param(g, "decoder.dense3.bias")));
  Shape grid{bt};
  const Shape base = cfg_.bottleneck();
  grid.insert(grid.end(), base.begin(), base.end());
  grid.push_back(cfg_.conv_filters[1]);
  h = ops::reshape(h, grid);
  auto up = [&](Var in) { return sr == 1 ? ops::upsample1d(in, 2) : ops::upsample2d(in, 2); };
  auto deconv = [&](Var in, const std::string& n) {
    Var k = param(g, n + ".kernel"), bias = param(g, n + ".bias");
    return sr == 1 ? ops::conv1d_transpose(in, k, bias, 2) : ops::conv2d_transpose(in, k, bias, 2);
  };
  h = ops::relu(deconv(up(h), "decoder.deconv1"));
  h = deconv(up(h), "decoder.deconv2");

  // Centre-crop when the input extent is not a multiple of 16.
  const Shape full = cfg_.decoded_extent();
  if (full != cfg_.spatial) {
    Shape start{0}, size{bt};
    for (std::size_t a = 0; a < sr; ++a) {
      start.push_back((full[a] - cfg_.spatial[a]) / 2);
      size.push_back(cfg_.spatial[a]);
    }
    start.push_back(0);
    size.push_back(1);
    h = ops::crop(h, start, size);
  }
  Shape out{b, t};
  out.insert(out.end(), cfg_.spatial.begin(), cfg_.spatial.end());
  return ops::reshape(h, out);
}

Model::LstmRun Model::run_lstm(Graph& g, const std::string& prefix, const std::vector<Var>& inputs,
                               const std::vector<std::pair<Var, Var>>& init) {
  LstmRun run;
  std::vector<Var> layer_in = inputs;
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const std::string n = prefix + std::to_string(layer + 1);
    const ops::LstmWeights w{param(g, n + ".weight"), param(g, n + ".bias")};
    auto [h, c] = init[layer];
    std::vector<Var> out;
    out.reserve(layer_in.size());
    for (Var x : layer_in) {
      std::tie(h, c) = ops::lstm_step(x, h, c, w);
      out.push_back(h);
    }
    run.final_state.emplace_back(h, c);
    layer_in = std::move(out);
  }
  run.outputs = std::move(layer_in);
  return run;
}

EvolveResult Model::evolve(Graph& g, Var z) {
  if (z.shape().size() != 3 || z.dim(2) != cfg_.latent) {
    throw ShapeError("evolve: expected (B, T, " + std::to_string(cfg_.latent) + "), got " + shape_string(z.shape()));
  }
  const std::size_t b = z.dim(0), t = z.dim(1), p = cfg_.hidden, bt = b * t;

  std::vector<Var> steps;
  for (std::size_t i = 0; i < t; ++i) steps.push_back(ops::select_time(z, i));
  const Var zero = g.constant(Tensor({b, p}));
  LstmRun enc = run_lstm(g, "evolver.enc", steps, {{zero, zero}, {zero, zero}});
  const Var h_enc = ops::stack_time(enc.outputs);  // (B, T, p)

  // Decoder input: the encoder's final top-layer state repeated over the window.
  const std::vector<Var> dec_in(t, enc.final_state[1].first);
  LstmRun dec = run_lstm(g, "evolver.dec", dec_in, enc.final_state);
  const Var s_dec = ops::stack_time(dec.outputs);  // (B, T, p)

  EvolveResult result;
  Var hidden = s_dec;
  if (cfg_.evolver != EvolverKind::Cran) {
    Var alpha;
    if (fixed_attention_) {
      if (fixed_attention_->size() != t) {
        throw ShapeError("fixed attention has " + std::to_string(fixed_attention_->size()) + " weights for a window of " +
                         std::to_string(t));
      }
      Tensor a({b, t, t});
      for (std::size_t n = 0; n < b * t; ++n) std::copy(fixed_attention_->begin(), fixed_attention_->end(), a.raw() + n * t);
      alpha = g.constant(std::move(a));
    } else {
      Var keys = ops::dense(ops::reshape(h_enc, {bt, p}), param(g, "evolver.attention.weight"),
                            param(g, "evolver.attention.bias"));
      Var scores = ops::batched_matmul(s_dec, ops::reshape(keys, {b, t, p}), /*transpose_b=*/true);
      alpha = ops::softmax(scores, 2);
    }
    result.attention = alpha;
    const Var context = ops::batched_matmul(alpha, h_enc);  // (B, T, p)
    if (cfg_.evolver == EvolverKind::Mi2a) {
      const Var deriv = ops::conv1d(h_enc, param(g, "evolver.derivative.kernel"), param(g, "evolver.derivative.bias"), 1);
      hidden = ops::add(ops::add(s_dec, context), deriv);
    } else {
      Var joined = ops::reshape(ops::concat_last(context, s_dec), {bt, 2 * p});
      hidden = ops::tanh(ops::dense(joined, param(g, "evolver.combine.weight"), param(g, "evolver.combine.bias")));
    }
  }
  Var out = ops::dense(ops::reshape(hidden, {bt, p}), param(g, "evolver.output.weight"),
                       param(g, "evolver.output.bias"));
  result.prediction = ops::reshape(out, {b, t, cfg_.latent});
  return result;
}

ForwardResult Model::forward(Graph& g, Var x) {
  ForwardResult r;
  r.latent = encode(g, x);
  r.reconstruction = decode(g, r.latent);
  r.evolved = evolve(g, r.latent);
  r.prediction = decode(g, r.evolved.prediction);
  return r;
}

}  // namespace mi2a::models
