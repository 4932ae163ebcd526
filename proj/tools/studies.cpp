#include "studies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "loading.hpp"
#include "varpred/checkpoint.hpp"
#include "varpred/error.hpp"

namespace varpred::cli {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const ScoredModel& m) {
  j = {{"id", m.id}, {"checkpoint", m.checkpoint}, {"beta", m.beta}, {"alpha", m.alpha}, {"tags", m.tags}};
  j["vp_score"] = m.vp_score ? nlohmann::json(*m.vp_score) : nlohmann::json(nullptr);
  j["factorvae_score"] = m.factorvae_score ? nlohmann::json(*m.factorvae_score) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ScoredModel& m) {
  static const std::set<std::string> keys = {"id", "checkpoint", "beta", "alpha", "tags", "vp_score", "factorvae_score"};
  if (!j.is_object()) throw ConfigError("manifest entries must be JSON objects");
  for (const auto& [key, _] : j.items()) {
    if (!keys.count(key)) throw ConfigError("unknown key '" + key + "' in manifest entry");
  }
  try {
    m = ScoredModel{};
    m.id = j.value("id", std::string());
    m.checkpoint = j.value("checkpoint", std::string());
    m.beta = j.value("beta", 0.0);
    m.alpha = j.value("alpha", 0.0);
    m.tags = j.value("tags", std::vector<std::string>{});
    if (j.contains("vp_score") && !j["vp_score"].is_null()) m.vp_score = j["vp_score"].get<double>();
    if (j.contains("factorvae_score") && !j["factorvae_score"].is_null()) {
      m.factorvae_score = j["factorvae_score"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid manifest entry: ") + e.what());
  }
  if (m.id.empty()) m.id = m.checkpoint;
  if ((!m.vp_score || !m.factorvae_score) && m.checkpoint.empty()) {
    throw ConfigError("manifest entry '" + m.id + "' has neither both scores nor a checkpoint");
  }
}

void to_json(nlohmann::json& j, const CorrelationResult& r) {
  j = {{"models", r.models}, {"pcc", r.pcc}, {"n", r.models.size()}};
  if (!r.excluded_tag.empty()) {
    j["excluded_tag"] = r.excluded_tag;
    j["excluded_count"] = r.excluded_count;
    j["pcc_excluding"] = r.pcc_excluding ? nlohmann::json(*r.pcc_excluding) : nlohmann::json(nullptr);
  }
}

namespace {

bool has_tag(const ScoredModel& m, const std::string& tag) {
  return std::find(m.tags.begin(), m.tags.end(), tag) != m.tags.end();
}

double pcc_of(const std::vector<ScoredModel>& models) {
  std::vector<double> xs, ys;
  for (const auto& m : models) {
    xs.push_back(*m.vp_score);
    ys.push_back(*m.factorvae_score);
  }
  return pearson_correlation(xs, ys);
}

}  // namespace

CorrelationResult correlate_models(std::vector<ScoredModel> models, const FactorDataset& data,
                                   const VpMetricConfig& vp, const FactorVaeConfig& fv,
                                   const std::string& exclude_tag) {
  if (models.size() < 3) throw ArgumentError("correlation needs at least 3 models, got " + std::to_string(models.size()));
  for (auto& m : models) {
    if (!m.vp_score) {
      const LoadedGenerator lg = load_image_generator(m.checkpoint);
      m.vp_score = vp_metric(NetworkGenerator(lg.generator, lg.prior), vp).score;
    }
    if (!m.factorvae_score) {
      const EncoderDecoder<float> vae = load_encoder_decoder(m.checkpoint);
      m.factorvae_score = factorvae_metric(VaeMeanEncoder(vae), data, fv).score;
    }
  }
  CorrelationResult r;
  r.models = std::move(models);
  r.pcc = pcc_of(r.models);
  if (!exclude_tag.empty()) {
    r.excluded_tag = exclude_tag;
    std::vector<ScoredModel> kept;
    for (const auto& m : r.models) {
      if (has_tag(m, exclude_tag)) {
        ++r.excluded_count;
      } else {
        kept.push_back(m);
      }
    }
    try {
      r.pcc_excluding = pcc_of(kept);
    } catch (const ArgumentError&) {
      r.pcc_excluding.reset();
    }
  }
  return r;
}

void write_correlation(const CorrelationResult& r, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ostringstream csv, dat;
  csv.precision(10);
  dat.precision(10);
  csv << "model_id,beta,alpha,tags,vp_score,factorvae_score\n";
  dat << "# vp_score factorvae_score\n";
  for (const auto& m : r.models) {
    std::string tags;
    for (const auto& t : m.tags) tags += (tags.empty() ? "" : ";") + t;
    csv << m.id << ',' << m.beta << ',' << m.alpha << ',' << tags << ',' << *m.vp_score << ',' << *m.factorvae_score
        << '\n';
    dat << *m.vp_score << ' ' << *m.factorvae_score << '\n';
  }
  std::ofstream(out_dir / "correlation.csv") << csv.str();
  std::ofstream(out_dir / "scatter.dat") << dat.str();
  std::ofstream(out_dir / "correlation.json") << nlohmann::json(r).dump(2) << '\n';
}

void to_json(nlohmann::json& j, const SweepConfig& c) {
  j = {{"train", c.train},         {"betas", c.betas}, {"seeds_per_beta", c.seeds_per_beta},
       {"high_beta", c.high_beta}, {"vp_metric", c.vp}, {"factorvae_metric", c.factorvae}};
}

void from_json(const nlohmann::json& j, SweepConfig& c) {
  static const std::set<std::string> keys = {"train",     "betas",           "seeds_per_beta",
                                             "high_beta", "vp_metric",       "factorvae_metric"};
  if (!j.is_object()) throw ConfigError("sweep config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!keys.count(key)) throw ConfigError("unknown key '" + key + "' in sweep config");
  }
  c = SweepConfig{};
  c.train.model = ModelKind::betavae;
  if (j.contains("train")) {
    nlohmann::json t = j["train"];
    if (!t.contains("model")) t["model"] = "betavae";
    c.train = t.get<TrainConfig>();
  }
  try {
    c.betas = j.value("betas", c.betas);
    c.seeds_per_beta = j.value("seeds_per_beta", c.seeds_per_beta);
    c.high_beta = j.value("high_beta", c.high_beta);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid sweep config: ") + e.what());
  }
  if (j.contains("vp_metric")) c.vp = j["vp_metric"].get<VpMetricConfig>();
  if (j.contains("factorvae_metric")) c.factorvae = j["factorvae_metric"].get<FactorVaeConfig>();
  if (!c.train.is_vae()) throw ConfigError("the beta sweep trains betavae or vae-vp models");
  if (c.betas.empty() || c.seeds_per_beta < 1) throw ConfigError("the beta sweep needs betas and seeds");
}

SweepResult run_beta_sweep(const SweepConfig& cfg, const fs::path& out_dir, bool verbose) {
  cfg.train.validate();
  cfg.vp.validate(cfg.train.latent_dims);
  const auto start = std::chrono::steady_clock::now();
  auto data = std::make_shared<const FactorDataset>(resolve_dataset(cfg.train.dataset));
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "sweep_config.json") << nlohmann::json(cfg).dump(2) << '\n';

  SweepResult result;
  std::vector<ScoredModel> models;
  for (double beta : cfg.betas) {
    for (int s = 0; s < cfg.seeds_per_beta; ++s) {
      TrainConfig t = cfg.train;
      t.beta = beta;
      t.seed = derive_seed(cfg.train.seed, "sweep/seed", static_cast<std::uint64_t>(s));
      std::ostringstream id;
      id << "beta-" << beta << "-seed-" << s;
      RunOptions options;
      options.out_dir = out_dir / "runs" / id.str();
      options.resume = true;
      try {
        run_experiment(t, options, data);
      } catch (const NumericError& e) {
        result.failed.push_back(id.str() + ": " + e.what());
        continue;
      }
      ScoredModel m;
      m.id = id.str();
      m.checkpoint = (options.out_dir / "checkpoints" / "latest.vpck").string();
      m.beta = beta;
      m.alpha = t.model == ModelKind::vae_vp ? t.alpha : 0.0;
      if (beta >= cfg.high_beta) m.tags.push_back("high-beta");
      const EncoderDecoder<float> vae = load_encoder_decoder(m.checkpoint);
      m.vp_score = vp_metric(NetworkGenerator(vae.decoder(), Prior::normal), cfg.vp).score;
      try {
        m.factorvae_score = factorvae_metric(VaeMeanEncoder(vae), *data, cfg.factorvae).score;
      } catch (const DegenerateEncoderError& e) {
        result.failed.push_back(id.str() + ": " + e.what());
        continue;
      }
      if (verbose) {
        std::cerr << m.id << " vp=" << *m.vp_score << " factorvae=" << *m.factorvae_score << '\n';
      }
      models.push_back(std::move(m));
    }
  }
  result.correlation = correlate_models(std::move(models), *data, cfg.vp, cfg.factorvae, "high-beta");
  write_correlation(result.correlation, out_dir);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace varpred::cli
