#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mi2a/training.hpp"

namespace mi2a::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

struct GenDataOptions {
  std::string benchmark;
  std::string config_path;
  std::vector<std::string> overrides;
  std::filesystem::path out;
};

struct TrainOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string resume;  // checkpoint directory to continue from
  bool quiet = false;
};

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string name;  // column label; derived from the run config when empty
  std::optional<std::size_t> horizons;
  bool export_fields = true;
};

struct TableOptions {
  std::vector<std::filesystem::path> runs;
  std::filesystem::path out;
  std::vector<std::string> metrics{"MSE", "Linf"};
};

struct LmmVerifyOptions {
  double mu = 1.0;
  double dt = 0.1;
  double dx = 0.2;
  std::size_t steps = 50;
  std::size_t window = 2;
  std::size_t points = 200;
  double tolerance = 1e-12;
  std::filesystem::path out;  // optional CSV destination
};

struct GradcheckOptions {
  std::string module = "all";
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

/// Benchmark-specific starting point used when no config file is given.
training::RunConfig default_run_config(const std::string& benchmark);
/// Reads a RunConfig JSON file (or the benchmark default), applies overrides, validates.
training::RunConfig resolve_run_config(const std::string& path, const std::string& fallback_benchmark,
                                       const std::vector<std::string>& overrides);
/// Column label for tables: MI2A, Luong or CRAN, suffixed _LossDecomp for the decomposed loss.
std::string variant_name(const training::RunConfig& cfg);

/// Only the "created" field varies between identical runs.
void write_manifest(const std::filesystem::path& file, const std::string& subcommand, const nlohmann::json& config,
                    std::uint64_t config_hash, std::uint64_t seed, const std::vector<std::string>& artifacts);

int gen_data(const GenDataOptions& o, std::ostream& log);
int train(const TrainOptions& o, std::ostream& log);
int evaluate(const EvaluateOptions& o, std::ostream& log);
int table(const TableOptions& o, std::ostream& log);
int lmm_verify(const LmmVerifyOptions& o, std::ostream& log);
int gradcheck(const GradcheckOptions& o, std::ostream& log);

/// Runs `body`, mapping exceptions to exit codes and a one-line JSON error on `err`.
int guarded(const std::function<int()>& body, std::ostream& err);

}  // namespace mi2a::cli
