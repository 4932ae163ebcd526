#include "experiment_config.hpp"

#include <fstream>
#include <set>

#include "varpred/error.hpp"

namespace varpred::cli {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

void to_json(nlohmann::json& j, const FidProxyConfig& c) {
  j = {{"samples", c.samples},
       {"extractor",
        {{"width", c.extractor.width},
         {"hidden", c.extractor.hidden},
         {"steps", c.extractor.steps},
         {"batch_size", c.extractor.batch_size},
         {"lr", c.extractor.lr},
         {"seed", c.extractor.seed}}}};
}

void from_json(const nlohmann::json& j, FidProxyConfig& c) {
  reject_unknown(j, {"samples", "extractor"}, "fid_proxy");
  c = FidProxyConfig{};
  try {
    c.samples = j.value("samples", c.samples);
    if (j.contains("extractor")) {
      const auto& e = j["extractor"];
      reject_unknown(e, {"width", "hidden", "steps", "batch_size", "lr", "seed"}, "fid_proxy.extractor");
      c.extractor.width = e.value("width", c.extractor.width);
      c.extractor.hidden = e.value("hidden", c.extractor.hidden);
      c.extractor.steps = e.value("steps", c.extractor.steps);
      c.extractor.batch_size = e.value("batch_size", c.extractor.batch_size);
      c.extractor.lr = e.value("lr", c.extractor.lr);
      c.extractor.seed = e.value("seed", c.extractor.seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid fid_proxy config: ") + e.what());
  }
}

void ExperimentConfig::apply_seed(Seed s) {
  seed = s;
  train.seed = s;
  vp_metric.seed = derive_seed(s, "metric/vp");
  factorvae_metric.seed = derive_seed(s, "metric/factorvae");
  fid_proxy.extractor.seed = derive_seed(s, "metric/fid-extractor");
  dataset_spec.seed = derive_seed(s, "data");
  correlation.train.seed = derive_seed(s, "correlation/train");
  correlation.vp.seed = derive_seed(s, "correlation/vp");
  correlation.factorvae.seed = derive_seed(s, "correlation/factorvae");
}

void ExperimentConfig::validate() const {
  train.validate();
  vp_metric.validate(train.latent_dims);
  dataset_spec.validate();
  if (fid_proxy.samples < 500) throw ConfigError("fid_proxy.samples must be >= 500");
  if (fid_proxy.extractor.steps < 1 || fid_proxy.extractor.batch_size < 1 || fid_proxy.extractor.width < 1 ||
      fid_proxy.extractor.hidden < 1 || !(fid_proxy.extractor.lr > 0.0)) {
    throw ConfigError("fid_proxy.extractor values must be positive");
  }
  if (factorvae_metric.train_votes < 1 || factorvae_metric.eval_votes < 1 || factorvae_metric.batch_size < 2) {
    throw ConfigError("factorvae_metric needs positive vote counts and batch_size >= 2");
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"train", c.train},
       {"vp_metric", c.vp_metric},
       {"factorvae_metric", c.factorvae_metric},
       {"fid_proxy", c.fid_proxy},
       {"dataset_spec", c.dataset_spec},
       {"correlation", c.correlation},
       {"out_dir", c.out_dir}};
  if (c.seed) j["seed"] = *c.seed;
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  reject_unknown(j,
                 {"train", "vp_metric", "factorvae_metric", "fid_proxy", "dataset_spec", "correlation", "out_dir",
                  "seed"},
                 "experiment config");
  c = ExperimentConfig{};
  if (j.contains("train")) c.train = j["train"].get<TrainConfig>();
  if (j.contains("vp_metric")) c.vp_metric = j["vp_metric"].get<VpMetricConfig>();
  if (j.contains("factorvae_metric")) c.factorvae_metric = j["factorvae_metric"].get<FactorVaeConfig>();
  if (j.contains("fid_proxy")) c.fid_proxy = j["fid_proxy"].get<FidProxyConfig>();
  if (j.contains("dataset_spec")) c.dataset_spec = j["dataset_spec"].get<FactorSpec>();
  if (j.contains("correlation")) c.correlation = j["correlation"].get<SweepConfig>();
  try {
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("seed")) c.apply_seed(j["seed"].get<Seed>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  ExperimentConfig c = j.get<ExperimentConfig>();
  c.validate();
  return c;
}

nlohmann::json experiment_schema() {
  using nlohmann::json;
  auto integer = [](int minimum) { return json{{"type", "integer"}, {"minimum", minimum}}; };
  auto number = [](double minimum) { return json{{"type", "number"}, {"minimum", minimum}}; };
  auto object = [](json properties, json required = json::array()) {
    return json{{"type", "object"}, {"additionalProperties", false}, {"properties", properties}, {"required", required}};
  };
  const json seed = integer(0);
  const json train = object({{"model", {{"enum", {"gan", "vpgan", "infogan", "betavae", "vae-vp"}}}},
                             {"latent_dims", integer(2)},
                             {"alpha", number(0)},
                             {"beta", number(0)},
                             {"lambda", number(0)},
                             {"info_dims", integer(0)},
                             {"lr_g", number(0)},
                             {"lr_d", number(0)},
                             {"lr_q", number(0)},
                             {"adam_beta1", number(0)},
                             {"adam_beta2", number(0)},
                             {"batch_size", integer(2)},
                             {"steps", integer(0)},
                             {"seed", seed},
                             {"dataset", {{"type", "string"}}},
                             {"input_mode", {{"enum", {"flat", "hierarchical"}}}},
                             {"prior", {{"enum", {"uniform", "normal"}}}},
                             {"width", integer(1)},
                             {"likelihood", {{"enum", {"bernoulli", "gaussian"}}}},
                             {"symmetric_pairs", {{"type", "boolean"}}},
                             {"checkpoint_every", integer(0)},
                             {"log_every", integer(1)}});
  const json vp = object({{"samples", integer(2)},
                          {"trials", integer(1)},
                          {"train_ratio", {{"type", "number"}, {"exclusiveMinimum", 0}, {"exclusiveMaximum", 1}}},
                          {"epochs", integer(1)},
                          {"lr", number(0)},
                          {"batch_size", integer(1)},
                          {"width", integer(1)},
                          {"seed", seed}});
  const json factorvae = object({{"train_votes", integer(1)},
                                 {"eval_votes", integer(1)},
                                 {"batch_size", integer(2)},
                                 {"prune_threshold", number(0)},
                                 {"std_samples", integer(1)},
                                 {"seed", seed}});
  const json fid = object({{"samples", integer(500)},
                           {"extractor", object({{"width", integer(1)},
                                                 {"hidden", integer(1)},
                                                 {"steps", integer(1)},
                                                 {"batch_size", integer(1)},
                                                 {"lr", number(0)},
                                                 {"seed", seed}})}});
  const json factor = object({{"name", {{"type", "string"}}},
                              {"cardinality", integer(1)},
                              {"role", {{"enum", {"shape", "scale", "orientation", "pos-x", "pos-y"}}}}},
                             {"name", "cardinality", "role"});
  const json spec = object({{"factors", {{"type", "array"}, {"items", factor}}},
                            {"image_size", integer(8)},
                            {"min_radius", number(0)},
                            {"max_radius", {{"type", "number"}, {"exclusiveMaximum", 0.5}}},
                            {"seed", seed}},
                           {"factors"});
  const json sweep = object({{"train", train},
                             {"betas", {{"type", "array"}, {"items", number(0)}, {"minItems", 1}}},
                             {"seeds_per_beta", integer(1)},
                             {"high_beta", number(0)},
                             {"vp_metric", vp},
                             {"factorvae_metric", factorvae}});
  json schema = object({{"train", train},
                        {"vp_metric", vp},
                        {"factorvae_metric", factorvae},
                        {"fid_proxy", fid},
                        {"dataset_spec", spec},
                        {"correlation", sweep},
                        {"out_dir", {{"type", "string"}, {"minLength", 1}}},
                        {"seed", seed}});
  schema["$schema"] = "http://json-schema.org/draft-07/schema#";
  schema["title"] = "varpred experiment config";
  return schema;
}

}  // namespace varpred::cli
