#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mi2a/errors.hpp"
#include "mi2a/eval.hpp"
#include "mi2a/random.hpp"

using namespace mi2a;
using namespace mi2a::eval;

namespace {

Predictor identity() {
  return [](const Tensor& w) { return w; };
}

// Straight double loop over (t, y, x) with multi-index access.
void brute_force(const Tensor& p, const Tensor& q, std::size_t t, double& mse, double& mae, double& linf) {
  mse = mae = linf = 0.0;
  const std::size_t h = p.dim(1), w = p.dim(2);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double d = p.at({t, y, x}) - q.at({t, y, x});
      mse += d * d / static_cast<double>(h * w);
      mae += std::fabs(d) / static_cast<double>(h * w);
      if (std::fabs(d) > linf) linf = std::fabs(d);
    }
  }
}

}  // namespace

TEST(Metrics, MatchBruteForce) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor p = uniform_tensor({7, 5, 9}, -2, 2, rng), q = uniform_tensor({7, 5, 9}, -2, 2, rng);
    const MetricSeries m = metrics(p, q);
    ASSERT_EQ(m.steps(), 7u);
    for (std::size_t t = 0; t < 7; ++t) {
      double mse, mae, linf;
      brute_force(p, q, t, mse, mae, linf);
      EXPECT_NEAR(m.mse[t], mse, 1e-14);
      EXPECT_NEAR(m.mae[t], mae, 1e-14);
      EXPECT_EQ(m.linf[t], linf);
    }
  }
}

TEST(Metrics, TimeAveragesAreMeansOfSteps) {
  Rng rng(13);
  const MetricSeries m = metrics(uniform_tensor({11, 16}, 0, 1, rng), uniform_tensor({11, 16}, 0, 1, rng));
  double a = 0, b = 0, c = 0;
  for (std::size_t t = 0; t < 11; ++t) {
    a += m.mse[t];
    b += m.mae[t];
    c += m.linf[t];
  }
  EXPECT_EQ(m.mean_mse, a / 11);
  EXPECT_EQ(m.mean_mae, b / 11);
  EXPECT_EQ(m.mean_linf, c / 11);
}

TEST(Metrics, TrivialCases) {
  Rng rng(1);
  const Tensor x = uniform_tensor({4, 8}, -1, 1, rng);
  const MetricSeries zero = metrics(x, x);
  EXPECT_EQ(zero.mean_mse + zero.mean_mae + zero.mean_linf, 0.0);
  Tensor shifted = x;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 1.0;
  const MetricSeries one = metrics(shifted, x);
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_NEAR(one.mse[t], 1.0, 1e-15);
    EXPECT_NEAR(one.mae[t], 1.0, 1e-15);
    EXPECT_NEAR(one.linf[t], 1.0, 1e-15);
  }
  EXPECT_THROW(metrics(Tensor({4, 8}), Tensor({4, 9})), ShapeError);
  EXPECT_THROW(metrics(Tensor({8}), Tensor({8})), ShapeError);
}

TEST(Metrics, HorizonBlocksAndCsv) {
  MetricSeries m;
  m.mse = {1, 2, 3, 4, 5, 6, 7};
  m.mae = m.linf = m.mse;
  EXPECT_EQ(m.horizon_mse(3), (std::vector<double>{2, 5}));
  EXPECT_EQ(m.to_csv(10).substr(0, 34), "step,mse,mae,linf\n10,1,1,1\n11,2,2,");
}

TEST(Rollout, OneHorizonIsOneCall) {
  int calls = 0;
  Predictor p = [&](const Tensor& w) {
    ++calls;
    return w;
  };
  const RolloutResult r = rollout(p, Tensor({10, 4}, 0.5), 1);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(r.horizon_start, (std::vector<std::size_t>{10}));
  EXPECT_EQ(r.trajectory.shape(), (Shape{10, 4}));
}

TEST(Rollout, NineteenHorizonsReachStep190) {
  const RolloutResult r = rollout(identity(), Tensor({10, 4}, 0.5), 19);
  EXPECT_EQ(r.horizons(), 19u);
  EXPECT_EQ(r.horizon_start[2], 30u);
  EXPECT_EQ(r.horizon_start[9], 100u);
  EXPECT_EQ(r.horizon_start.back(), 190u);
  EXPECT_EQ(r.trajectory.dim(0), 190u);
}

TEST(Rollout, IdentityTilesTheSeed) {
  Rng rng(3);
  const Tensor seed = uniform_tensor({10, 6}, 0, 1, rng);
  const RolloutResult r = rollout(identity(), seed, 4);
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t i = 0; i < seed.size(); ++i) EXPECT_EQ(r.trajectory[h * seed.size() + i], seed[i]);
}

TEST(Rollout, FeedsPredictionsBack) {
  Predictor plus_one = [](const Tensor& w) {
    Tensor o = w;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += 1.0;
    return o;
  };
  const RolloutResult r = rollout(plus_one, Tensor({2, 3}), 3);
  EXPECT_EQ(r.trajectory[0], 1.0);
  EXPECT_EQ(r.trajectory[6], 2.0);
  EXPECT_EQ(r.trajectory[17], 3.0);
}

TEST(Rollout, NonFiniteTruncatesAndFlags) {
  int calls = 0;
  Predictor p = [&](const Tensor& w) {
    Tensor o = w;
    if (++calls == 3) o[1] = std::numeric_limits<double>::infinity();
    return o;
  };
  const RolloutResult r = rollout(p, Tensor({5, 2}, 1.0), 6);
  EXPECT_TRUE(r.truncated);
  EXPECT_EQ(r.horizons(), 2u);
  EXPECT_EQ(r.trajectory.shape(), (Shape{10, 2}));
  EXPECT_THROW(rollout([](const Tensor&) { return Tensor({3}); }, Tensor({5, 2}), 1), ShapeError);
}

TEST(Rollout, ModelRolloutIsDeterministic) {
  models::ModelConfig cfg;
  cfg.spatial = {32};
  cfg.hidden = 5;
  cfg.conv_filters[0] = 4;
  cfg.conv_filters[1] = 3;
  cfg.dense_units[0] = 8;
  cfg.dense_units[1] = 6;
  models::Model m(cfg, 2);
  Rng rng(4);
  const Tensor seed = uniform_tensor({10, 32}, 0, 1, rng);
  const auto a = rollout(model_predictor(m), seed, 3), b = rollout(model_predictor(m), seed, 3);
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_TRUE(a.trajectory.all_finite());
}

TEST(EvaluateTrajectory, PhysicalAndNormalizedUnits) {
  // Frames hold the constant value t; identity repeats the seed, so the error at absolute
  // step s is (s mod T) - s in physical units.
  const std::size_t T = 5, nt = 23;
  Tensor traj({nt, 3});
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t i = 0; i < 3; ++i) traj[t * 3 + i] = static_cast<double>(t);
  const datagen::Normalization norm{0.0, 22.0};
  const TrajectoryEvaluation ev = evaluate_trajectory(identity(), traj, 0.5, norm, T);
  EXPECT_EQ(ev.rollout.horizons(), 3u);  // floor(23 / 5) - 1
  ASSERT_EQ(ev.physical.steps(), 15u);
  for (std::size_t k = 0; k < 15; ++k) {
    const double s = static_cast<double>(T + k), e = static_cast<double>((T + k) % T) - s;
    EXPECT_NEAR(ev.physical.mse[k], e * e, 1e-12);
    EXPECT_NEAR(ev.normalized.mse[k], e * e / (22.0 * 22.0), 1e-15);
    EXPECT_NEAR(ev.error_field[k * 3], e, 1e-12);
  }
  EXPECT_EQ(evaluate_trajectory(identity(), traj, 0.5, norm, T, 1).rollout.horizons(), 1u);
  EXPECT_THROW(evaluate_trajectory(identity(), Tensor({7, 3}), 0, norm, T), ShapeError);
}

TEST(EvaluateDataset, OneResultPerParameter) {
  const auto ds = datagen::gen_linear_convection({0.8, 1.0, 1.2}, {.nx = 16, .nt = 30});
  const auto res = evaluate_dataset(identity(), ds, {ds.global_min, ds.global_max}, 10);
  ASSERT_EQ(res.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(res[i].param, ds.params[i]);
    EXPECT_EQ(res[i].rollout.horizons(), 2u);
  }
}

TEST(ComparisonTable, BestCellAndTies) {
  MetricSeries lo, hi;
  lo.mean_mse = 0.1;
  lo.mean_linf = 0.5;
  hi.mean_mse = 0.2;
  hi.mean_linf = 0.5;
  const std::vector<VariantResult> v{{"MI2A_LossDecomp", {{0.7875, lo}}}, {"CRAN", {{0.7875, hi}}}};
  const auto rows = comparison_table(v);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].best, std::optional<std::size_t>(0));
  EXPECT_FALSE(rows[1].best.has_value());
  EXPECT_EQ(table_csv(v, rows), "param,metric,MI2A_LossDecomp,CRAN,best\n0.7875,MSE,0.1,0.2,MI2A_LossDecomp\n0.7875,Linf,0.5,0.5,\n");
}

TEST(ComparisonTable, IdentityStubsTieEverywhere) {
  const auto ds = datagen::gen_burgers({1100, 2600}, {.nx = 32, .nt = 40});
  const auto ev = evaluate_dataset(identity(), ds, {ds.global_min, ds.global_max}, 10);
  std::vector<VariantResult> variants;
  for (const char* name : {"MI2A_LossDecomp", "MI2A", "Luong", "CRAN"}) {
    VariantResult v{name, {}};
    for (const auto& e : ev) v.per_param.emplace_back(e.param, e.physical);
    variants.push_back(v);
  }
  for (const auto& row : comparison_table(variants, {"MSE", "MAE", "Linf"})) EXPECT_FALSE(row.best.has_value());
}

TEST(ComparisonTable, RejectsMismatchedVariants) {
  const std::vector<VariantResult> v{{"A", {{1.0, {}}}}, {"B", {{2.0, {}}}}};
  EXPECT_THROW(comparison_table(v), ConfigError);
  EXPECT_THROW(comparison_table({{"A", {{1.0, {}}}}}, {"RMSE"}), ConfigError);
  EXPECT_THROW(comparison_table({}), ConfigError);
}
