#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

#include "loading.hpp"
#include "varpred/checkpoint.hpp"
#include "varpred/error.hpp"
#include "varpred/image_io.hpp"

namespace varpred::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ExperimentConfig resolve_config(const std::optional<fs::path>& path, const std::optional<Seed>& seed) {
  ExperimentConfig cfg = path ? load_experiment_config(*path) : ExperimentConfig{};
  if (seed) cfg.apply_seed(*seed);
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw PersistenceError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

fs::path sidecar(const fs::path& output) { return fs::path(output.string() + ".config.json"); }

json provenance(const std::string& command, const ExperimentConfig& cfg, json extra = json::object()) {
  json j = {{"command", command}, {"config", cfg}};
  j.update(extra);
  return j;
}

FactorDataset dataset_for(const ExperimentConfig& cfg, const std::optional<std::string>& override_id) {
  return resolve_dataset(override_id.value_or(cfg.train.dataset));
}

std::vector<ScoredModel> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read manifest '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  const json& list = j.is_object() && j.contains("models") ? j["models"] : j;
  if (!list.is_array()) throw ConfigError("manifest must be an array of models or an object with \"models\"");
  std::vector<ScoredModel> models;
  try {
    for (const auto& m : list) {
      ScoredModel s = m.get<ScoredModel>();
      if (!s.checkpoint.empty() && fs::path(s.checkpoint).is_relative()) {
        s.checkpoint = (path.parent_path() / s.checkpoint).string();
      }
      models.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid manifest entry: ") + e.what());
  }
  return models;
}

}  // namespace

json cmd_gen_data(const GenDataOptions& o) {
  ExperimentConfig cfg = resolve_config(o.config, o.seed);
  if (o.spec) {
    std::ifstream in(*o.spec);
    if (!in) throw ConfigError("cannot read spec file '" + o.spec->string() + "'");
    try {
      cfg.dataset_spec = json::parse(in).get<FactorSpec>();
    } catch (const json::exception& e) {
      throw ConfigError("invalid dataset spec '" + o.spec->string() + "': " + e.what());
    }
    if (o.seed) cfg.dataset_spec.seed = derive_seed(*o.seed, "data");
    cfg.dataset_spec.validate();
  }
  if (o.out.empty()) throw ArgumentError("gen-data needs --out");
  const FactorDataset data = generate_factor_dataset(cfg.dataset_spec);
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  save_dataset(data, o.out);
  json summary = {{"dataset", o.out.string()},
                  {"images", data.size()},
                  {"image_size", cfg.dataset_spec.image_size},
                  {"factors", cfg.dataset_spec.factors.size()}};
  if (o.csv) {
    const fs::path csv = fs::path(o.out.string() + ".factors.csv");
    export_factor_csv(data, csv);
    summary["factor_csv"] = csv.string();
  }
  write_json(sidecar(o.out), provenance("gen-data", cfg, {{"spec", cfg.dataset_spec}}));
  return summary;
}

json cmd_train(const TrainOptions& o) {
  ExperimentConfig cfg = resolve_config(o.config, o.seed);
  if (o.steps) {
    cfg.train.steps = *o.steps;
    cfg.train.validate();
  }
  const fs::path out = o.out.value_or(fs::path(cfg.out_dir) / (to_string(cfg.train.model) + "-seed-" +
                                                                std::to_string(cfg.train.seed)));
  RunOptions ro;
  ro.out_dir = out;
  ro.resume = o.resume;
  ro.verbose = o.verbose;
  if (o.final_vp) ro.final_vp_metric = cfg.vp_metric;
  write_json(out / "experiment.json", provenance("train", cfg));
  const RunRecord rec = run_experiment(cfg.train, ro);
  json summary = {{"out_dir", out.string()},
                  {"status", rec.status},
                  {"steps_completed", rec.steps_completed},
                  {"resumed_from", rec.resumed_from},
                  {"checkpoint", (out / "checkpoints" / "latest.vpck").string()},
                  {"wall_clock_seconds", rec.wall_clock_seconds},
                  {"final_metrics", rec.final_metrics}};
  return summary;
}

json cmd_eval(const EvalOptions& o) {
  ExperimentConfig cfg = resolve_config(o.config, o.seed);
  const fs::path out = o.out.value_or(fs::path(cfg.out_dir) / "eval");
  json report;
  if (o.metric == "vp") {
    const LoadedGenerator lg = load_image_generator(o.checkpoint);
    cfg.vp_metric.validate(lg.generator.latent_dims());
    const MetricReport r = vp_metric(NetworkGenerator(lg.generator, lg.prior), cfg.vp_metric);
    report = r;
  } else if (o.metric == "factorvae") {
    if (checkpoint_kind(o.checkpoint) == kKindGenerator) {
      throw CapabilityError("the FactorVAE metric needs an encoder; '" + o.checkpoint.string() +
                            "' holds only a generator");
    }
    const EncoderDecoder<float> vae = [&] {
      try {
        return load_encoder_decoder(o.checkpoint);
      } catch (const ModelKindError& e) {
        throw CapabilityError(std::string("the FactorVAE metric needs an encoder: ") + e.what());
      }
    }();
    const FactorDataset data = dataset_for(cfg, o.dataset);
    const FactorVaeReport r = factorvae_metric(VaeMeanEncoder(vae), data, cfg.factorvae_metric);
    report = {{"metric", "factorvae"},
              {"score", r.score},
              {"active_dims", r.active_dims},
              {"majority", r.majority},
              {"counts", r.counts},
              {"config", cfg.factorvae_metric},
              {"seeds", {cfg.factorvae_metric.seed}}};
  } else if (o.metric == "fid-proxy") {
    const LoadedGenerator lg = load_image_generator(o.checkpoint);
    const FactorDataset data = dataset_for(cfg, o.dataset);
    const FeatureExtractor fx = FeatureExtractor::train(data, cfg.fid_proxy.extractor);
    const Seed sample_seed = derive_seed(cfg.fid_proxy.extractor.seed, "fid-proxy/samples");
    const double value =
        fid_proxy(NetworkGenerator(lg.generator, lg.prior), data, fx, cfg.fid_proxy.samples, sample_seed);
    report = {{"metric", "fid-proxy"},
              {"value", value},
              {"note", "FID-proxy on a rotation-prediction feature network; not comparable to Inception FID"},
              {"extractor_final_loss", fx.final_loss()},
              {"config", cfg.fid_proxy},
              {"seeds", {cfg.fid_proxy.extractor.seed, sample_seed}}};
  } else {
    throw ArgumentError("unknown metric '" + o.metric + "' (expected vp, factorvae or fid-proxy)");
  }
  report["checkpoint"] = o.checkpoint.string();
  const fs::path file = out / ("eval-" + o.metric + ".json");
  write_json(file, report);
  write_json(sidecar(file), provenance("eval", cfg, {{"metric", o.metric}, {"checkpoint", o.checkpoint.string()}}));
  return report;
}

json cmd_traverse(const TraverseOptions& o) {
  if (o.out.empty()) throw ArgumentError("traverse needs --out");
  if (o.steps < 2) throw ArgumentError("traverse needs --steps >= 2");
  if (!(o.lo < o.hi)) throw ArgumentError("traverse needs --range LO,HI with LO < HI");
  const LoadedGenerator lg = load_image_generator(o.checkpoint);
  const int k = lg.generator.latent_dims();
  std::vector<int> dims = o.dims;
  if (dims.empty()) {
    dims.resize(static_cast<std::size_t>(k));
    std::iota(dims.begin(), dims.end(), 0);
  }
  for (int d : dims) {
    if (d < 0 || d >= k) throw ArgumentError("latent dim " + std::to_string(d) + " out of range [0, " +
                                             std::to_string(k) + ")");
  }
  const Seed seed = o.seed.value_or(0);
  const Seed base_seed = derive_seed(seed, "traverse/base");
  const LatentBatch base = sample_prior(1, k, lg.prior, base_seed);
  const std::vector<float> z(base.values.data(), base.values.data() + k);
  const NetworkGenerator g(lg.generator, lg.prior);
  const TraversalGrid grid = latent_traversal_grid(g, z, dims, o.lo, o.hi, o.steps);
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  write_png(o.out, grid.mosaic());
  json summary = {{"image", o.out.string()},
                  {"checkpoint", o.checkpoint.string()},
                  {"dims", dims},
                  {"range", {o.lo, o.hi}},
                  {"steps", o.steps},
                  {"prior", to_string(lg.prior)},
                  {"seed", seed},
                  {"base_seed", base_seed},
                  {"base_z", z}};
  write_json(sidecar(o.out), summary);
  return summary;
}

json cmd_correlate(const CorrelateOptions& o) {
  const ExperimentConfig cfg = resolve_config(o.config, std::nullopt);
  std::vector<ScoredModel> models = read_manifest(o.manifest);
  const bool needs_data = std::any_of(models.begin(), models.end(),
                                      [](const ScoredModel& m) { return !m.factorvae_score; });
  const FactorDataset data = needs_data ? dataset_for(cfg, o.dataset) : FactorDataset{};
  const CorrelationResult r = correlate_models(std::move(models), data, cfg.vp_metric, cfg.factorvae_metric,
                                               o.exclude_tag);
  const fs::path out = o.out.value_or(fs::path(cfg.out_dir) / "correlation");
  write_correlation(r, out);
  write_json(out / "experiment.json",
             provenance("correlate", cfg, {{"manifest", o.manifest.string()}, {"exclude_tag", o.exclude_tag}}));
  json summary = r;
  summary["out_dir"] = out.string();
  return summary;
}

json cmd_reproduce_correlation(const ReproduceOptions& o) {
  ExperimentConfig cfg = resolve_config(o.config, o.seed);
  if (o.steps) {
    cfg.correlation.train.steps = *o.steps;
    cfg.correlation.train.validate();
  }
  const fs::path out = o.out.value_or(fs::path(cfg.out_dir) / "reproduce-correlation");
  write_json(out / "experiment.json", provenance("reproduce-correlation", cfg));
  const SweepResult r = run_beta_sweep(cfg.correlation, out, o.verbose);
  json summary = r.correlation;
  summary["failed"] = r.failed;
  summary["seconds"] = r.seconds;
  summary["out_dir"] = out.string();
  return summary;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variation predictability: train, evaluate and compare disentangled generators", "vpctl"};
  app.require_subcommand(1);

  std::optional<fs::path> config;
  std::optional<Seed> seed;
  std::optional<fs::path> out_dir;
  std::optional<int> steps;
  std::optional<std::string> dataset;
  bool verbose = false;

  auto add_config = [&](CLI::App* c) { c->add_option("--config", config, "Experiment config JSON"); };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", seed, "Experiment seed; re-derives every stream"); };

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render the factor dataset into a container file");
  add_config(gen_cmd);
  add_seed(gen_cmd);
  gen_cmd->add_option("--spec", gen.spec, "Bare dataset spec JSON, overrides the config's dataset_spec");
  gen_cmd->add_option("--out", gen.out, "Output container path")->required();
  gen_cmd->add_flag("--csv", gen.csv, "Also export the factor table as CSV");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  add_config(train_cmd);
  add_seed(train_cmd);
  train_cmd->add_option("--out", out_dir, "Run directory");
  train_cmd->add_option("--steps", steps, "Override the number of training steps");
  train_cmd->add_flag("--resume", train.resume, "Continue from the run directory's latest checkpoint");
  train_cmd->add_flag("--final-vp", train.final_vp, "Score the trained model with the VP metric");
  train_cmd->add_flag("-v,--verbose", verbose, "Print losses while training");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint");
  add_config(eval_cmd);
  add_seed(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--metric", eval.metric, "vp, factorvae or fid-proxy")
      ->check(CLI::IsMember({"vp", "factorvae", "fid-proxy"}));
  eval_cmd->add_option("--out", out_dir, "Report directory");
  eval_cmd->add_option("--dataset", dataset, "Dataset id or container path");

  TraverseOptions trav;
  std::vector<double> range;
  auto* trav_cmd = app.add_subcommand("traverse", "Render a latent traversal grid as PNG");
  trav_cmd->add_option("--checkpoint", trav.checkpoint, "Checkpoint file")->required();
  trav_cmd->add_option("--dims", trav.dims, "Latent dims, comma separated (default: all)")->delimiter(',');
  trav_cmd->add_option("--range", range, "LO,HI")->delimiter(',')->expected(2);
  trav_cmd->add_option("--steps", trav.steps, "Columns per row");
  trav_cmd->add_option("--out", trav.out, "Output PNG")->required();
  add_seed(trav_cmd);

  CorrelateOptions corr;
  auto* corr_cmd = app.add_subcommand("correlate", "Correlate VP and FactorVAE scores of a model manifest");
  add_config(corr_cmd);
  corr_cmd->add_option("--manifest", corr.manifest, "Manifest JSON")->required();
  corr_cmd->add_option("--exclude-tag", corr.exclude_tag, "Also report the PCC without models carrying this tag");
  corr_cmd->add_option("--out", out_dir, "Output directory");
  corr_cmd->add_option("--dataset", dataset, "Dataset id or container path");

  ReproduceOptions repro;
  auto* repro_cmd = app.add_subcommand("reproduce-correlation", "Train the beta sweep and correlate the metrics");
  add_config(repro_cmd);
  add_seed(repro_cmd);
  repro_cmd->add_option("--out", out_dir, "Output directory");
  repro_cmd->add_option("--steps", steps, "Override training steps per model");
  repro_cmd->add_flag("-v,--verbose", verbose, "Print progress");

  auto* schema_cmd = app.add_subcommand("schema", "Print the experiment config JSON Schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    json summary;
    if (gen_cmd->parsed()) {
      gen.config = config;
      gen.seed = seed;
      summary = cmd_gen_data(gen);
    } else if (train_cmd->parsed()) {
      train.config = config;
      train.seed = seed;
      train.out = out_dir;
      train.steps = steps;
      train.verbose = verbose;
      summary = cmd_train(train);
    } else if (eval_cmd->parsed()) {
      eval.config = config;
      eval.seed = seed;
      eval.out = out_dir;
      eval.dataset = dataset;
      summary = cmd_eval(eval);
    } else if (trav_cmd->parsed()) {
      if (range.size() == 2) {
        trav.lo = range[0];
        trav.hi = range[1];
      }
      trav.seed = seed;
      summary = cmd_traverse(trav);
    } else if (corr_cmd->parsed()) {
      corr.config = config;
      corr.out = out_dir;
      corr.dataset = dataset;
      summary = cmd_correlate(corr);
    } else if (repro_cmd->parsed()) {
      repro.config = config;
      repro.seed = seed;
      repro.out = out_dir;
      repro.steps = steps;
      repro.verbose = verbose;
      summary = cmd_reproduce_correlation(repro);
    } else if (schema_cmd->parsed()) {
      summary = experiment_schema();
    }
    out << summary.dump(2) << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArgumentError& e) {
    err << "argument error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace varpred::cli
