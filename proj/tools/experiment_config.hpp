#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "studies.hpp"
#include "varpred/data.hpp"
#include "varpred/metrics.hpp"
#include "varpred/training.hpp"

namespace varpred::cli {

struct FidProxyConfig {
  int samples = 1000;
  FeatureExtractorConfig extractor;
};

void to_json(nlohmann::json& j, const FidProxyConfig& c);
void from_json(const nlohmann::json& j, FidProxyConfig& c);

// Declarative document behind every command. Every section is optional and
// falls back to its defaults; unknown keys anywhere are rejected.
struct ExperimentConfig {
  TrainConfig train;
  VpMetricConfig vp_metric;
  FactorVaeConfig factorvae_metric;
  FidProxyConfig fid_proxy;
  FactorSpec dataset_spec = FactorSpec::desk_default();
  SweepConfig correlation;
  std::string out_dir = "runs";
  std::optional<Seed> seed;

  // Re-derives every seed from one experiment seed, one stream per purpose.
  void apply_seed(Seed s);
  // Throws ConfigError when any section is invalid.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Parses and validates a config file. Throws ConfigError with the offending
// key or value.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// JSON Schema (draft-07) describing ExperimentConfig files.
nlohmann::json experiment_schema();

}  // namespace varpred::cli
