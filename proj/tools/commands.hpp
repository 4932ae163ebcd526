#pragma once

#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "experiment_config.hpp"

namespace varpred::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct GenDataOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> spec;  // bare FactorSpec file
  std::optional<Seed> seed;
  std::filesystem::path out;
  bool csv = false;
};

struct TrainOptions {
  std::optional<std::filesystem::path> config;
  std::optional<Seed> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> steps;
  bool resume = false;
  bool final_vp = false;
  bool verbose = false;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::string metric = "vp";  // vp | factorvae | fid-proxy
  std::optional<std::filesystem::path> config;
  std::optional<Seed> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> dataset;
};

struct TraverseOptions {
  std::filesystem::path checkpoint;
  std::vector<int> dims;  // empty = every latent dim
  double lo = -1.0;
  double hi = 1.0;
  int steps = 8;
  std::filesystem::path out;
  std::optional<Seed> seed;
};

struct CorrelateOptions {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> dataset;
  std::string exclude_tag;
};

struct ReproduceOptions {
  std::optional<std::filesystem::path> config;
  std::optional<Seed> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> steps;
  bool verbose = false;
};

// Each command writes its artifacts, a copy of the resolved config and its
// seeds, and returns a JSON summary.
nlohmann::json cmd_gen_data(const GenDataOptions& o);
nlohmann::json cmd_train(const TrainOptions& o);
nlohmann::json cmd_eval(const EvalOptions& o);
nlohmann::json cmd_traverse(const TraverseOptions& o);
nlohmann::json cmd_correlate(const CorrelateOptions& o);
nlohmann::json cmd_reproduce_correlation(const ReproduceOptions& o);

// Full command line: parses argv, runs the subcommand, prints its summary
// to `out` and diagnostics to `err`, and returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace varpred::cli
