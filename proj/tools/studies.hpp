#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "varpred/metrics.hpp"
#include "varpred/training.hpp"

namespace varpred::cli {

// One scored model of a correlation study.
struct ScoredModel {
  std::string id;
  std::string checkpoint;
  double beta = 0.0;
  double alpha = 0.0;
  std::vector<std::string> tags;
  std::optional<double> vp_score;
  std::optional<double> factorvae_score;
};

void to_json(nlohmann::json& j, const ScoredModel& m);
void from_json(const nlohmann::json& j, ScoredModel& m);

struct CorrelationResult {
  std::vector<ScoredModel> models;
  double pcc = 0.0;
  std::optional<double> pcc_excluding;  // without models carrying the excluded tag
  std::string excluded_tag;
  int excluded_count = 0;
};

void to_json(nlohmann::json& j, const CorrelationResult& r);

// Scores every model missing a VP or FactorVAE score (loading its checkpoint)
// and correlates the two columns. Throws ArgumentError for fewer than 3 models.
CorrelationResult correlate_models(std::vector<ScoredModel> models, const FactorDataset& data,
                                   const VpMetricConfig& vp, const FactorVaeConfig& fv,
                                   const std::string& exclude_tag = "");

// Writes correlation.csv (model id, beta, alpha, tags, VP score, FactorVAE
// score), scatter.dat (whitespace separated x y pairs) and correlation.json.
void write_correlation(const CorrelationResult& r, const std::filesystem::path& out_dir);

struct SweepConfig {
  TrainConfig train;  // template; model must be betavae or vae-vp
  std::vector<double> betas = {1, 2, 3, 5, 20, 30, 40};
  int seeds_per_beta = 2;
  double high_beta = 20.0;  // models with beta >= high_beta get the "high-beta" tag
  VpMetricConfig vp;
  FactorVaeConfig factorvae;
};

void to_json(nlohmann::json& j, const SweepConfig& c);
void from_json(const nlohmann::json& j, SweepConfig& c);

// Trains the sweep (one run directory per model under out_dir/runs), scores
// every model with both metrics and correlates them. Runs whose training
// aborts are skipped and listed in the result's json under "failed".
struct SweepResult {
  CorrelationResult correlation;
  std::vector<std::string> failed;
  double seconds = 0.0;
};

SweepResult run_beta_sweep(const SweepConfig& cfg, const std::filesystem::path& out_dir, bool verbose = false);

}  // namespace varpred::cli
