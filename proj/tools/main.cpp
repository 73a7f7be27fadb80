#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

using namespace mi2a::cli;

int main(int argc, char** argv) {
  CLI::App app{"MI2A latent-space surrogate pipeline. MI2A_THREADS caps internal parallelism."};
  app.require_subcommand(1);

  GenDataOptions gd;
  auto* gen = app.add_subcommand("gen-data", "Generate snapshot datasets (train.mi2a, test.mi2a) for a benchmark");
  gen->add_option("--benchmark", gd.benchmark, "convection | burgers | shallow-water")
      ->required()
      ->check(CLI::IsMember({"convection", "linear_convection", "burgers", "shallow-water", "shallow_water"}));
  gen->add_option("--config", gd.config_path, "JSON with optional solver, train_params, test_params")->check(CLI::ExistingFile);
  gen->add_option("--set", gd.overrides, "Override a config key: key.path=value (repeatable)");
  gen->add_option("--out", gd.out, "Output directory")->required();

  TrainOptions tr;
  auto* trn = app.add_subcommand("train", "Train encoder, decoder and evolver jointly");
  trn->add_option("--config", tr.config_path, "Run config JSON; benchmark defaults when omitted")->check(CLI::ExistingFile);
  trn->add_option("--set", tr.overrides, "Override a config key: key.path=value (repeatable)");
  trn->add_option("--seed", tr.seed, "Seed for weights, noise and shuffling");
  trn->add_option("--data", tr.data, "Directory written by gen-data")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--out", tr.out, "Run directory (checkpoint/, loss_history.csv, manifest.json)")->required();
  trn->add_option("--resume", tr.resume, "Continue from this checkpoint directory")->check(CLI::ExistingDirectory);
  trn->add_flag("--quiet", tr.quiet, "Suppress per-epoch progress");

  EvaluateOptions ev;
  auto* evl = app.add_subcommand("evaluate", "Roll a checkpoint out over the test trajectories");
  evl->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  evl->add_option("--data", ev.data, "Directory written by gen-data")->required()->check(CLI::ExistingDirectory);
  evl->add_option("--out", ev.out, "Output directory")->required();
  evl->add_option("--name", ev.name, "Column label for tables");
  evl->add_option("--horizons", ev.horizons, "Cap on rollout horizons");
  bool no_fields = false;
  evl->add_flag("--no-error-fields", no_fields, "Skip the space-time error tensors");

  TableOptions tb;
  auto* tbl = app.add_subcommand("table", "Compare evaluated runs");
  tbl->add_option("--runs", tb.runs, "Evaluate output directories, one column each")->required()->check(CLI::ExistingDirectory);
  tbl->add_option("--out", tb.out, "CSV destination")->required();
  tbl->add_option("--metrics", tb.metrics, "Rows per parameter: MSE, MAE, Linf")->capture_default_str();

  LmmVerifyOptions lv;
  auto* lmm = app.add_subcommand("lmm-verify", "Check that fixed attention reproduces Adams-Bashforth upwind stepping");
  lmm->add_option("--mu", lv.mu, "Wave speed")->capture_default_str();
  lmm->add_option("--dt", lv.dt, "Time step")->capture_default_str();
  lmm->add_option("--dx", lv.dx, "Grid spacing")->capture_default_str();
  lmm->add_option("--steps", lv.steps, "Steps to compare")->capture_default_str();
  lmm->add_option("--window", lv.window, "Attention window (>= 2)")->capture_default_str();
  lmm->add_option("--points", lv.points, "Grid points")->capture_default_str();
  lmm->add_option("--tolerance", lv.tolerance, "Max allowed deviation")->capture_default_str();
  lmm->add_option("--out", lv.out, "Directory for the deviation CSV");

  GradcheckOptions gc;
  auto* grd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grd->add_option("--module", gc.module, "all, or a substring of op names")->capture_default_str();
  grd->add_option("--tolerance", gc.tolerance, "Max relative error")->capture_default_str();
  grd->add_option("--seed", gc.seed, "Seed for the random inputs")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", "usage"}, {"message", e.what()}, {"exit_code", kExitConfig}}.dump() << "\n";
    return kExitConfig;
  }
  ev.export_fields = !no_fields;

  return guarded(
      [&] {
        if (*gen) return gen_data(gd, std::cout);
        if (*trn) return train(tr, std::cout);
        if (*evl) return evaluate(ev, std::cout);
        if (*tbl) return table(tb, std::cout);
        if (*lmm) return lmm_verify(lv, std::cout);
        return gradcheck(gc, std::cout);
      },
      std::cerr);
}
