#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "mi2a/errors.hpp"
#include "mi2a/losses.hpp"
#include "mi2a/models.hpp"
#include "mi2a/ops.hpp"
#include "mi2a/random.hpp"

using namespace mi2a;
using namespace mi2a::models;

namespace {

// Independent per-layer count written out from the layer tables.
std::size_t dense_count(std::size_t in, std::size_t out) { return in * out + out; }
std::size_t conv_count(std::size_t k, std::size_t in, std::size_t out) { return k * in * out + out; }
std::size_t lstm_count(std::size_t in, std::size_t p) { return (in + p) * 4 * p + 4 * p; }

ModelConfig small_config(EvolverKind kind) {
  ModelConfig c;
  c.spatial = {32};
  c.hidden = 6;
  c.conv_filters[0] = 4;
  c.conv_filters[1] = 3;
  c.dense_units[0] = 8;
  c.dense_units[1] = 5;
  c.evolver = kind;
  return c;
}

}  // namespace

TEST(ParameterCount, PublishedOneDimensionalConfig) {
  const std::size_t r = 2, p = 32, kd = 3;
  const std::size_t encoder = conv_count(5, 1, 64) + conv_count(5, 64, 32) + dense_count(512, 128) +
                              dense_count(128, 64) + dense_count(64, r);
  const std::size_t decoder = dense_count(r, 64) + dense_count(64, 128) + dense_count(128, 512) +
                              conv_count(5, 32, 64) + conv_count(5, 64, 1);
  const std::size_t evolver = lstm_count(r, p) + 3 * lstm_count(p, p) + dense_count(p, p) + conv_count(kd, p, p) +
                              dense_count(p, r);
  EXPECT_EQ(encoder, 84706u);
  EXPECT_EQ(decoder, 85185u);
  EXPECT_EQ(evolver, 33666u);
  EXPECT_EQ(encoder + decoder + evolver, 203557u);

  Model m(ModelConfig{}, 1);
  EXPECT_EQ(m.parameters().scalar_count("encoder."), encoder);
  EXPECT_EQ(m.parameters().scalar_count("decoder."), decoder);
  EXPECT_EQ(m.parameters().scalar_count("evolver."), evolver);
  EXPECT_EQ(m.parameters().scalar_count(), 203557u);
}

TEST(ParameterCount, BaselinesDifferOnlyInHeads) {
  ModelConfig c;
  auto names = [&](EvolverKind k) {
    c.evolver = k;
    std::set<std::string> s;
    for (auto& [n, _] : parameter_inventory(c)) s.insert(n);
    return s;
  };
  const auto mi2a = names(EvolverKind::Mi2a), luong = names(EvolverKind::Luong), cran = names(EvolverKind::Cran);
  std::vector<std::string> only_mi2a, only_luong;
  std::set_difference(mi2a.begin(), mi2a.end(), luong.begin(), luong.end(), std::back_inserter(only_mi2a));
  std::set_difference(luong.begin(), luong.end(), mi2a.begin(), mi2a.end(), std::back_inserter(only_luong));
  EXPECT_EQ(only_mi2a, (std::vector<std::string>{"evolver.derivative.bias", "evolver.derivative.kernel"}));
  EXPECT_EQ(only_luong, (std::vector<std::string>{"evolver.combine.bias", "evolver.combine.weight"}));
  EXPECT_TRUE(std::includes(mi2a.begin(), mi2a.end(), cran.begin(), cran.end()));
  EXPECT_LT(Model(c, 1).parameters().scalar_count("evolver."),
            Model(ModelConfig{}, 1).parameters().scalar_count("evolver."));
}

TEST(Autoencoder, OneDimensionalShapes) {
  Model m(ModelConfig{}, 3);
  Rng rng(1);
  Graph g;
  Var x = g.constant(uniform_tensor({2, 10, 256}, 0, 1, rng));
  Var z = m.encode(g, x);
  EXPECT_EQ(z.shape(), (Shape{2, 10, 2}));
  Var xr = m.decode(g, z);
  EXPECT_EQ(xr.shape(), x.shape());
  EXPECT_TRUE(xr.value().all_finite());
}

TEST(Autoencoder, TwoDimensionalShapesWithCrop) {
  ModelConfig c;
  c.spatial = {184, 184};
  c.latent = 8;
  EXPECT_EQ(c.bottleneck(), (Shape{12, 12}));
  EXPECT_EQ(c.decoded_extent(), (Shape{192, 192}));
  Model m(c, 3);
  Graph g;
  Var x = g.constant(Tensor({1, 1, 184, 184}, 0.5));
  Var z = m.encode(g, x);
  EXPECT_EQ(z.shape(), (Shape{1, 1, 8}));
  EXPECT_EQ(m.decode(g, z).shape(), (Shape{1, 1, 184, 184}));
}

TEST(Autoencoder, RejectsWrongSpatialExtent) {
  Model m(ModelConfig{}, 3);
  Graph g;
  EXPECT_THROW(m.encode(g, g.constant(Tensor({1, 10, 128}))), ShapeError);
  EXPECT_THROW(m.decode(g, g.constant(Tensor({1, 10, 3}))), ShapeError);
}

TEST(Evolver, ShapesAndAttentionRows) {
  for (EvolverKind k : {EvolverKind::Mi2a, EvolverKind::Luong, EvolverKind::Cran}) {
    Model m(ModelConfig{.evolver = k}, 5);
    Rng rng(2);
    Graph g;
    auto r = m.evolve(g, g.constant(uniform_tensor({3, 10, 2}, -1, 1, rng)));
    EXPECT_EQ(r.prediction.shape(), (Shape{3, 10, 2})) << to_string(k);
    EXPECT_EQ(r.attention.has_value(), k != EvolverKind::Cran);
    if (r.attention) {
      const Tensor& a = r.attention->value();
      ASSERT_EQ(a.shape(), (Shape{3, 10, 10}));
      for (std::size_t row = 0; row < 30; ++row) {
        double s = 0.0;
        for (std::size_t j = 0; j < 10; ++j) {
          EXPECT_GE(a[row * 10 + j], 0.0);
          s += a[row * 10 + j];
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Evolver, CranZeroParametersZeroInputGiveZero) {
  Model m(ModelConfig{.evolver = EvolverKind::Cran}, 5);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) m.parameters()[i].value.fill(0.0);
  Graph g;
  auto r = m.evolve(g, g.constant(Tensor({2, 10, 2})));
  EXPECT_EQ(r.prediction.value().max_abs(), 0.0);
}

TEST(Evolver, FixedAttentionIsDataIndependent) {
  Model m(ModelConfig{}, 5);
  std::vector<double> gamma(10, 0.0);
  gamma.back() = 1.0;
  m.set_fixed_attention(gamma);
  Rng rng(4);
  const Tensor z = uniform_tensor({2, 10, 2}, -1, 1, rng);
  Graph g1;
  auto a = m.evolve(g1, g1.constant(z));
  for (std::size_t n = 0; n < 20; ++n)
    for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(a.attention->value()[n * 10 + j], gamma[j]);
  // Scrambling the score weights changes nothing once attention is fixed.
  m.parameters().get("evolver.attention.weight").value = uniform_tensor({32, 32}, -3, 3, rng);
  Graph g2;
  auto b = m.evolve(g2, g2.constant(z));
  EXPECT_EQ(a.prediction.value(), b.prediction.value());
}

TEST(Evolver, FixedAttentionLengthMismatch) {
  Model m(ModelConfig{}, 5);
  m.set_fixed_attention({0.5, 0.5});
  Graph g;
  EXPECT_THROW(m.evolve(g, g.constant(Tensor({1, 10, 2}))), ShapeError);
  Model cran(ModelConfig{.evolver = EvolverKind::Cran}, 5);
  EXPECT_THROW(cran.set_fixed_attention({1.0}), ConfigError);
}

TEST(Evolver, SoftmaxAttentionVariesWithInput) {
  Model m(ModelConfig{}, 5);
  Rng rng(9);
  Graph g;
  auto r1 = m.evolve(g, g.constant(uniform_tensor({1, 10, 2}, -1, 1, rng)));
  auto r2 = m.evolve(g, g.constant(uniform_tensor({1, 10, 2}, -1, 1, rng)));
  EXPECT_GT(max_abs_diff(r1.attention->value(), r2.attention->value()), 1e-6);
}

TEST(Model, EveryParameterReceivesGradient) {
  for (EvolverKind k : {EvolverKind::Mi2a, EvolverKind::Luong, EvolverKind::Cran}) {
    Model m(small_config(k), 11);
    Rng rng(6);
    Graph g;
    Var x = g.constant(uniform_tensor({3, 4, 32}, 0, 1, rng));
    Var y = g.constant(uniform_tensor({3, 4, 32}, 0, 1, rng));
    auto out = m.forward(g, x);
    Var ae = losses::ae_loss(out.reconstruction, x);
    Var ev = losses::evolver_loss(out.prediction, y, 0.7).total;
    m.parameters().zero_grad();
    g.backward(losses::total_loss(ae, ev, 0.5));
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      const Parameter& p = m.parameters()[i];
      EXPECT_GT(p.grad.max_abs(), 0.0) << to_string(k) << " " << p.name;
    }
  }
}

TEST(Model, SameSeedSameWeights) {
  Model a(ModelConfig{}, 99), b(ModelConfig{}, 99), c(ModelConfig{}, 100);
  EXPECT_EQ(a.parameters().get("encoder.conv1.kernel").value, b.parameters().get("encoder.conv1.kernel").value);
  EXPECT_NE(a.parameters().get("encoder.conv1.kernel").value, c.parameters().get("encoder.conv1.kernel").value);
}

TEST(ModelConfig, JsonRoundTripAndValidation) {
  ModelConfig c;
  c.spatial = {64, 64};
  c.latent = 8;
  c.evolver = EvolverKind::Luong;
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  try {
    ModelConfig::from_json({{"latent", 0}, {"evolver", "gru"}, {"bogus", 1}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_GE(e.problems().size(), 2u);
  }
}
