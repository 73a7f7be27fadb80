#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "mi2a/datagen.hpp"
#include "mi2a/errors.hpp"

using namespace mi2a;
using namespace mi2a::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mi2a_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read(const fs::path& p) { return json::parse(slurp(p)); }

GenDataOptions tiny_data(const fs::path& out) {
  return {"convection", "", {"solver.nx=32", "solver.nt=30", "train_params=[0.8,1.0,1.2]", "test_params=[0.9,1.1]"}, out};
}

TrainOptions tiny_train(const fs::path& data, const fs::path& out) {
  TrainOptions o;
  o.overrides = {"model.spatial=[32]", "model.hidden=5", "model.conv_filters=[4,3]", "model.dense_units=[8,6]",
                 "epochs=2", "batch_size=8", "loss.psi=0.6"};
  o.seed = 11;
  o.data = data;
  o.out = out;
  o.quiet = true;
  return o;
}

int run(const std::function<int(std::ostream&)>& body, std::string* err_out = nullptr) {
  std::ostringstream log, err;
  const int code = guarded([&] { return body(log); }, err);
  if (err_out) *err_out = err.str();
  return code;
}

}  // namespace

TEST(Cli, LmmVerifyWorkedExamplePasses) {
  LmmVerifyOptions o;
  o.out = scratch("lmm");
  std::ostringstream log;
  EXPECT_EQ(lmm_verify(o, log), kExitOk);
  EXPECT_EQ(log.str().substr(0, 4), "PASS");
  EXPECT_NE(log.str().find("gamma1=0.25 delta1=0.75 gamma2=0.25 delta2=0.25"), std::string::npos);
  const std::string csv = slurp(o.out / "ab2_equivalence.csv");
  EXPECT_EQ(csv.substr(0, 22), "step,max_abs_deviation");
  EXPECT_TRUE(fs::exists(o.out / "manifest.json"));
  fs::remove_all(o.out);
}

TEST(Cli, LmmVerifyReportsFailureAsNumeric) {
  LmmVerifyOptions o;
  o.tolerance = -1.0;
  std::ostringstream log;
  EXPECT_EQ(lmm_verify(o, log), kExitNumeric);
  EXPECT_EQ(log.str().substr(0, 4), "FAIL");
}

TEST(Cli, GradcheckAllPasses) {
  std::ostringstream log;
  EXPECT_EQ(gradcheck({}, log), kExitOk);
  EXPECT_NE(log.str().find("evolver_loss"), std::string::npos);
  EXPECT_NE(log.str().find(": PASS"), std::string::npos);
}

TEST(Cli, ErrorsMapToExitCodesAndJson) {
  std::string err;
  EXPECT_EQ(run([](std::ostream& log) { return gradcheck({"no_such_op"}, log); }, &err), kExitConfig);
  EXPECT_EQ(json::parse(err).at("error"), "config");

  LmmVerifyOptions bad;
  bad.dx = 0.0;
  bad.mu = -1.0;
  EXPECT_EQ(run([&](std::ostream& log) { return lmm_verify(bad, log); }, &err), kExitConfig);
  EXPECT_EQ(json::parse(err).at("problems").size(), 2u);

  EXPECT_EQ(run([](std::ostream&) -> int { throw NumericError("blew up"); }, &err), kExitNumeric);
  EXPECT_EQ(json::parse(err).at("message"), "blew up");
  EXPECT_EQ(run([](std::ostream&) -> int { throw FormatError("bad magic"); }, &err), kExitFailure);
}

TEST(Cli, ConfigErrorsListEveryKey) {
  const auto dir = scratch("cfgerr");
  ASSERT_EQ(run([&](std::ostream& log) { return gen_data(tiny_data(dir / "data"), log); }), kExitOk);
  TrainOptions o = tiny_train(dir / "data", dir / "run");
  o.overrides.push_back("epochs=0");
  o.overrides.push_back("adam.learning_rate=-1");
  o.overrides.push_back("loss.mode=fancy");
  std::string err;
  EXPECT_EQ(run([&](std::ostream& log) { return train(o, log); }, &err), kExitConfig);
  EXPECT_GE(json::parse(err).at("problems").size(), 3u) << err;

  // Spatial extent must match the data.
  TrainOptions wrong = tiny_train(dir / "data", dir / "run");
  wrong.overrides[0] = "model.spatial=[64]";
  EXPECT_EQ(run([&](std::ostream& log) { return train(wrong, log); }, &err), kExitConfig);
  EXPECT_NE(err.find("model.spatial"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, GenDataIsIdempotent) {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  std::ostringstream log;
  ASSERT_EQ(gen_data(tiny_data(a), log), kExitOk);
  ASSERT_EQ(gen_data(tiny_data(b), log), kExitOk);
  for (const char* f : {"train.mi2a", "train.mi2a.json", "test.mi2a", "test.mi2a.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const auto ds = datagen::load_dataset(a / "train.mi2a");
  EXPECT_EQ(ds.snapshots.shape(), (Shape{3, 30, 32}));
  json ma = read(a / "manifest.json"), mb = read(b / "manifest.json");
  ma.erase("created");
  mb.erase("created");
  EXPECT_EQ(ma, mb);
  EXPECT_EQ(ma.at("config").at("solver").at("nx"), 32);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, TrainEvaluateTableEndToEnd) {
  const auto dir = scratch("e2e");
  std::ostringstream log;
  ASSERT_EQ(gen_data(tiny_data(dir / "data"), log), kExitOk);
  ASSERT_EQ(train(tiny_train(dir / "data", dir / "run1"), log), kExitOk);
  ASSERT_EQ(train(tiny_train(dir / "data", dir / "run2"), log), kExitOk);

  // Same inputs and seed: byte-identical artifacts.
  EXPECT_EQ(slurp(dir / "run1/loss_history.csv"), slurp(dir / "run2/loss_history.csv"));
  for (const auto& e : fs::directory_iterator(dir / "run1/checkpoint")) {
    if (e.path().extension() == ".mi2a") EXPECT_EQ(slurp(e.path()), slurp(dir / "run2/checkpoint" / e.path().filename()));
  }

  // Overrides and the seed land in the manifest.
  const json m = read(dir / "run1/manifest.json");
  EXPECT_EQ(m.at("seed"), 11);
  EXPECT_EQ(m.at("config").at("loss").at("psi"), 0.6);
  EXPECT_EQ(m.at("config").at("epochs"), 2);
  EXPECT_EQ(m.at("config_hash"), read(dir / "run1/checkpoint/manifest.json").at("config_hash"));

  EvaluateOptions ev{dir / "run1/checkpoint", dir / "data", dir / "eval1"};
  ASSERT_EQ(evaluate(ev, log), kExitOk);
  const json s = read(dir / "eval1/summary.json");
  EXPECT_EQ(s.at("variant"), "MI2A_LossDecomp");
  ASSERT_EQ(s.at("results").size(), 2u);
  for (const auto& r : s.at("results")) EXPECT_TRUE(std::isfinite(r.at("mse").get<double>()));
  EXPECT_TRUE(fs::exists(dir / "eval1/metrics_0.9.csv"));
  EXPECT_TRUE(fs::exists(dir / "eval1/error_field_1.1.mi2a"));

  EvaluateOptions ev2{dir / "run2/checkpoint", dir / "data", dir / "eval2", "Copy"};
  ASSERT_EQ(evaluate(ev2, log), kExitOk);
  ASSERT_EQ(table({{dir / "eval1", dir / "eval2"}, dir / "table.csv"}, log), kExitOk);
  const std::string csv = slurp(dir / "table.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "param,metric,MI2A_LossDecomp,Copy,best");
  EXPECT_NE(csv.find("0.9,MSE,"), std::string::npos);
  EXPECT_EQ(csv.back(), '\n');
  EXPECT_EQ(csv[csv.size() - 2], ',');  // identical runs tie, so no best column
  EXPECT_TRUE(fs::exists(dir / "table.manifest.json"));
  fs::remove_all(dir);
}

TEST(Cli, ResumeContinuesToTheConfiguredEpoch) {
  const auto dir = scratch("resume");
  std::ostringstream log;
  ASSERT_EQ(gen_data(tiny_data(dir / "data"), log), kExitOk);
  TrainOptions straight = tiny_train(dir / "data", dir / "straight");
  straight.overrides.push_back("epochs=3");
  ASSERT_EQ(train(straight, log), kExitOk);

  TrainOptions part = tiny_train(dir / "data", dir / "part");
  part.overrides.push_back("epochs=3");
  part.overrides.push_back("checkpoint_every=1");
  ASSERT_EQ(train(part, log), kExitOk);
  EXPECT_EQ(slurp(dir / "part/loss_history.csv"), slurp(dir / "straight/loss_history.csv"));

  TrainOptions cont;
  cont.data = dir / "data";
  cont.out = dir / "cont";
  cont.resume = (dir / "part/checkpoint").string();
  cont.quiet = true;
  ASSERT_EQ(train(cont, log), kExitOk);
  EXPECT_EQ(read(dir / "cont/checkpoint/manifest.json").at("history").size(), 3u);
  fs::remove_all(dir);
}

TEST(Cli, DefaultRunConfigsMatchBenchmarks) {
  EXPECT_EQ(default_run_config("convection").model.spatial, (Shape{256}));
  const auto sw = default_run_config("shallow-water");
  EXPECT_EQ(sw.benchmark, "shallow_water");
  EXPECT_EQ(sw.model.spatial, (Shape{184, 184}));
  EXPECT_EQ(sw.model.latent, 8u);
  EXPECT_NO_THROW(sw.validate());
  EXPECT_EQ(resolve_run_config("", "burgers", {"model.evolver=cran", "loss.mode=plain"}).benchmark, "burgers");
  EXPECT_EQ(variant_name(resolve_run_config("", "burgers", {"model.evolver=cran", "loss.mode=plain"})), "CRAN");
}
