#include "varpred/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "varpred/container.hpp"
#include "varpred/error.hpp"
#include "varpred/nn/adam.hpp"
#include "varpred/vp_objective.hpp"

namespace varpred {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

// One Adam step of softmax cross-entropy on a batch; returns the mean loss.
double classifier_step(Recognizer<float>& net, nn::Adam<float>& opt, const Tensor<float>& x,
                       std::span<const int> labels) {
  auto params = net.parameters();
  nn::zero_grads(params);
  const Tensor<float> scores = net.forward_train(x);
  Tensor<float> grad;
  const VpLossValue v = vp_bound_from_scores(scores, labels, net.classes(), &grad);
  for (auto& g : grad.values()) g = -g;
  net.backward(grad);
  opt.step(params);
  return -v.log_likelihood_term;
}

}  // namespace

int argmax_lowest(std::span<const float> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

void VpMetricConfig::validate(int latent_dims) const {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("VP metric eta must lie in (0, 1)");
  if (trials < 1) throw ConfigError("VP metric needs at least one trial");
  if (samples < 2) throw ConfigError("VP metric needs at least two samples");
  if (samples * train_ratio < latent_dims) {
    throw ConfigError("VP metric needs N * eta >= K (" + std::to_string(samples * train_ratio) + " < " +
                      std::to_string(latent_dims) + ")");
  }
  if (budget.epochs < 1 || budget.batch_size < 1 || !(budget.lr > 0.0) || budget.width < 1) {
    throw ConfigError("VP metric recognizer budget must be positive");
  }
}

void to_json(nlohmann::json& j, const VpMetricConfig& c) {
  j = {{"samples", c.samples},
       {"trials", c.trials},
       {"train_ratio", c.train_ratio},
       {"epochs", c.budget.epochs},
       {"lr", c.budget.lr},
       {"batch_size", c.budget.batch_size},
       {"width", c.budget.width},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, VpMetricConfig& c) {
  reject_unknown(j, {"samples", "trials", "train_ratio", "epochs", "lr", "batch_size", "width", "seed"}, "vp_metric");
  c = VpMetricConfig{};
  try {
    c.samples = j.value("samples", c.samples);
    c.trials = j.value("trials", c.trials);
    c.train_ratio = j.value("train_ratio", c.train_ratio);
    c.budget.epochs = j.value("epochs", c.budget.epochs);
    c.budget.lr = j.value("lr", c.budget.lr);
    c.budget.batch_size = j.value("batch_size", c.budget.batch_size);
    c.budget.width = j.value("width", c.budget.width);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid vp_metric config: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const FactorVaeConfig& c) {
  j = {{"train_votes", c.train_votes}, {"eval_votes", c.eval_votes}, {"batch_size", c.batch_size},
       {"prune_threshold", c.prune_threshold}, {"std_samples", c.std_samples}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, FactorVaeConfig& c) {
  reject_unknown(j, {"train_votes", "eval_votes", "batch_size", "prune_threshold", "std_samples", "seed"},
                 "factorvae_metric");
  c = FactorVaeConfig{};
  try {
    c.train_votes = j.value("train_votes", c.train_votes);
    c.eval_votes = j.value("eval_votes", c.eval_votes);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.prune_threshold = j.value("prune_threshold", c.prune_threshold);
    c.std_samples = j.value("std_samples", c.std_samples);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid factorvae_metric config: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  j = {{"metric", r.metric},         {"accuracies", r.accuracies}, {"failed_trials", r.failed_trials},
       {"score", r.score},           {"complete", r.complete},     {"fingerprint", r.fingerprint},
       {"seeds", r.seeds},           {"config", r.config}};
}

// --- VP metric ---------------------------------------------------------------

VpTrial vp_metric_trial(const ImageGenerator& g, const VpMetricConfig& cfg, Seed trial_seed) {
  const int n = cfg.samples, k = g.latent_dims();
  // Steps 1-2: dimension indices and pairs differing only there.
  const PairedLatentBatch pair = sample_paired_codes(n, k, g.prior(), trial_seed);
  // Step 3: image differences.
  Tensor<float> delta = generate_batched(g, pair.z1);
  const Tensor<float> x2 = generate_batched(g, pair.z2);
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= x2[i];

  // Step 4: random split.
  Rng split(derive_seed(trial_seed, "split"));
  const std::vector<int> order = split.permutation(n);
  const int n_train = std::clamp(static_cast<int>(std::lround(cfg.train_ratio * n)), 1, n - 1);
  std::vector<int> train_rows(order.begin(), order.begin() + n_train);
  std::vector<int> test_rows(order.begin() + n_train, order.end());

  // Step 5: fresh difference-mode recognizer.
  RecognizerConfig rc;
  rc.mode = RecognizerMode::difference;
  rc.classes = k;
  rc.image = g.image_shape();
  rc.width = cfg.budget.width;
  rc.seed = derive_seed(trial_seed, "recognizer");
  Recognizer<float> q(rc);
  nn::Adam<float> opt(q.parameters(), {cfg.budget.lr, 0.9, 0.999, 1e-8});
  Rng shuffle(derive_seed(trial_seed, "epochs"));

  VpTrial trial;
  trial.train_size = n_train;
  trial.test_size = n - n_train;
  for (int epoch = 0; epoch < cfg.budget.epochs && !trial.failed; ++epoch) {
    shuffle.shuffle(train_rows.begin(), train_rows.end());
    for (int begin = 0; begin < n_train; begin += cfg.budget.batch_size) {
      const int end = std::min(n_train, begin + cfg.budget.batch_size);
      const std::vector<int> rows(train_rows.begin() + begin, train_rows.begin() + end);
      std::vector<int> labels;
      for (int r : rows) labels.push_back(pair.d[static_cast<std::size_t>(r)]);
      double loss = 0.0;
      try {
        loss = classifier_step(q, opt, gather_rows(delta, rows), labels);
      } catch (const NumericError&) {
        loss = NAN;
      }
      if (!std::isfinite(loss)) {
        trial.failed = true;
        break;
      }
    }
  }
  if (trial.failed) return trial;

  int correct = 0;
  constexpr int kChunk = 512;
  for (int begin = 0; begin < static_cast<int>(test_rows.size()); begin += kChunk) {
    const int end = std::min(static_cast<int>(test_rows.size()), begin + kChunk);
    const std::vector<int> rows(test_rows.begin() + begin, test_rows.begin() + end);
    const Tensor<float> scores = q.forward(gather_rows(delta, rows));
    for (int i = 0; i < end - begin; ++i) {
      const std::span<const float> row(scores.data() + static_cast<std::size_t>(i) * k, static_cast<std::size_t>(k));
      if (argmax_lowest(row) == pair.d[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])]) ++correct;
    }
  }
  trial.accuracy = static_cast<double>(correct) / static_cast<double>(test_rows.size());
  return trial;
}

MetricReport vp_metric(const ImageGenerator& g, const VpMetricConfig& cfg) {
  cfg.validate(g.latent_dims());
  MetricReport report;
  report.metric = "vp";
  report.config = cfg;
  report.config["latent_dims"] = g.latent_dims();
  report.config["prior"] = to_string(g.prior());
  report.fingerprint = fingerprint(report.config);
  // Steps 6-7: repeat and average.
  for (int s = 0; s < cfg.trials; ++s) {
    const Seed trial_seed = derive_seed(cfg.seed, "vp-metric/trial", static_cast<std::uint64_t>(s));
    report.seeds.push_back(trial_seed);
    const VpTrial t = vp_metric_trial(g, cfg, trial_seed);
    if (t.failed) {
      report.failed_trials.push_back(s);
    } else {
      report.accuracies.push_back(t.accuracy);
    }
  }
  report.complete = report.failed_trials.empty();
  double sum = 0.0;
  for (double a : report.accuracies) sum += a;
  report.score = report.accuracies.empty() ? 0.0 : sum / static_cast<double>(report.accuracies.size());
  return report;
}

// --- FactorVAE metric --------------------------------------------------------

FactorVaeReport factorvae_metric(const LatentEncoder& encoder, const FactorDataset& data, const FactorVaeConfig& cfg) {
  if (!data.has_factors || data.num_factors() == 0) {
    throw CapabilityError("the FactorVAE metric needs ground-truth factors; dataset has none");
  }
  if (cfg.train_votes < 1 || cfg.eval_votes < 1 || cfg.batch_size < 2) {
    throw ConfigError("FactorVAE metric needs positive vote counts and batch size >= 2");
  }
  const int k = encoder.code_dims();
  const int f = data.num_factors();
  Rng rng(derive_seed(cfg.seed, "factorvae"));

  // Per-dimension scale over a dataset sample.
  const int m = std::min(cfg.std_samples, data.size());
  std::vector<int> rows = rng.permutation(data.size());
  rows.resize(static_cast<std::size_t>(m));
  const Tensor<float> codes = encode_batched(encoder, data.batch(rows));
  std::vector<double> stddev(static_cast<std::size_t>(k), 0.0);
  for (int j = 0; j < k; ++j) {
    double mean = 0.0, sq = 0.0;
    for (int i = 0; i < m; ++i) mean += codes.at(i, j);
    mean /= m;
    for (int i = 0; i < m; ++i) sq += (codes.at(i, j) - mean) * (codes.at(i, j) - mean);
    stddev[static_cast<std::size_t>(j)] = std::sqrt(sq / m);
  }
  double mean_std = 0.0;
  for (double s : stddev) mean_std += s;
  mean_std /= k;

  FactorVaeReport report;
  for (int j = 0; j < k; ++j) {
    if (mean_std > 0.0 && stddev[static_cast<std::size_t>(j)] >= cfg.prune_threshold * mean_std) {
      report.active_dims.push_back(j);
    }
  }
  if (report.active_dims.empty()) throw DegenerateEncoderError("every latent dimension collapsed; nothing to vote on");

  std::vector<int> varying;
  for (int i = 0; i < f; ++i) {
    if (data.spec.factors[static_cast<std::size_t>(i)].cardinality > 1) varying.push_back(i);
  }
  if (varying.empty()) throw CapabilityError("no factor takes more than one value");

  auto vote = [&](int& factor) {
    factor = varying[rng.index(varying.size())];
    const int value = static_cast<int>(rng.index(static_cast<std::uint64_t>(data.spec.factors[static_cast<std::size_t>(factor)].cardinality)));
    std::vector<int> batch_rows;
    std::vector<int> coords(static_cast<std::size_t>(f));
    for (int b = 0; b < cfg.batch_size; ++b) {
      for (int i = 0; i < f; ++i) {
        coords[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(static_cast<std::uint64_t>(data.spec.factors[static_cast<std::size_t>(i)].cardinality)));
      }
      coords[static_cast<std::size_t>(factor)] = value;
      batch_rows.push_back(data.index_of(coords));
    }
    const Tensor<float> z = encoder.encode(data.batch(batch_rows));
    int best = report.active_dims.front();
    double best_var = INFINITY;
    for (int j : report.active_dims) {
      double mean = 0.0, sq = 0.0;
      const double s = stddev[static_cast<std::size_t>(j)];
      for (int b = 0; b < cfg.batch_size; ++b) mean += z.at(b, j) / s;
      mean /= cfg.batch_size;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const double v = z.at(b, j) / s - mean;
        sq += v * v;
      }
      const double var = sq / cfg.batch_size;
      if (var < best_var) {
        best_var = var;
        best = j;
      }
    }
    return best;
  };

  report.counts.assign(static_cast<std::size_t>(k), std::vector<int>(static_cast<std::size_t>(f), 0));
  for (int v = 0; v < cfg.train_votes; ++v) {
    int factor = 0;
    const int dim = vote(factor);
    ++report.counts[static_cast<std::size_t>(dim)][static_cast<std::size_t>(factor)];
  }
  report.majority.assign(static_cast<std::size_t>(k), 0);
  for (int j = 0; j < k; ++j) {
    const auto& row = report.counts[static_cast<std::size_t>(j)];
    report.majority[static_cast<std::size_t>(j)] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  int correct = 0;
  for (int v = 0; v < cfg.eval_votes; ++v) {
    int factor = 0;
    const int dim = vote(factor);
    if (report.majority[static_cast<std::size_t>(dim)] == factor) ++correct;
  }
  report.score = static_cast<double>(correct) / cfg.eval_votes;
  return report;
}

// --- FID proxy ---------------------------------------------------------------

Tensor<float> rotate_quarter_turns(const Tensor<float>& images, std::span<const int> turns) {
  const int n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (h != w) throw ShapeError("quarter-turn rotation needs square images");
  Tensor<float> out(images.shape());
  for (int i = 0; i < n; ++i) {
    const int t = ((turns[static_cast<std::size_t>(i)] % 4) + 4) % 4;
    for (int ch = 0; ch < c; ++ch) {
      const float* src = images.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
      float* dst = out.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          int sy = y, sx = x;
          switch (t) {
            case 1: sy = x; sx = w - 1 - y; break;
            case 2: sy = h - 1 - y; sx = w - 1 - x; break;
            case 3: sy = h - 1 - x; sx = y; break;
            default: break;
          }
          dst[y * w + x] = src[sy * w + sx];
        }
      }
    }
  }
  return out;
}

FeatureExtractor FeatureExtractor::train(const FactorDataset& real, const FeatureExtractorConfig& cfg) {
  const ImageShape shape = real.image_shape();
  RecognizerConfig rc;
  rc.mode = RecognizerMode::single;
  rc.classes = 4;
  rc.image = shape;
  rc.width = cfg.width;
  rc.hidden = cfg.hidden;
  rc.seed = derive_seed(cfg.seed, "fid-features");
  Recognizer<float> net(rc);
  nn::Adam<float> opt(net.parameters(), {cfg.lr, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(cfg.seed, "fid-batches"));
  double loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<int> rows(static_cast<std::size_t>(cfg.batch_size));
    std::vector<int> turns(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i] = static_cast<int>(rng.index(static_cast<std::uint64_t>(real.size())));
      turns[i] = static_cast<int>(rng.index(4));
    }
    loss = classifier_step(net, opt, rotate_quarter_turns(real.batch(rows), turns), turns);
  }
  FeatureExtractor fx(ConvNet<float>(recognizer_body(rc)));
  // Copy the trained weights into the bare conv net used for features.
  auto dst = fx.net_.parameters();
  auto src = net.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].param->value = src[i].param->value;
  fx.final_loss_ = loss;
  return fx;
}

Tensor<double> FeatureExtractor::features(const Tensor<float>& images) const {
  Tensor<float> out;
  const int n = images.dim(0);
  constexpr int kChunk = 256;
  std::vector<float> values;
  int width = 0;
  for (int begin = 0; begin < n; begin += kChunk) {
    const Tensor<float> part = net_.features(images.slice_rows(begin, std::min(n, begin + kChunk)));
    width = part.dim(1);
    values.insert(values.end(), part.storage().begin(), part.storage().end());
  }
  return Tensor<float>({n, width}, std::move(values)).cast<double>();
}

double frechet_distance(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) throw ShapeError("feature sets must be [n, p] with equal p");
  if (a.dim(0) < 2 || b.dim(0) < 2) throw ArgumentError("need at least two feature vectors per set");
  using Mat = Eigen::MatrixXd;
  auto fit = [](const Tensor<double>& x, Eigen::VectorXd& mu, Mat& cov) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(x.data(), x.dim(0), x.dim(1));
    mu = m.colwise().mean().transpose();
    const Mat centered = m.rowwise() - mu.transpose();
    cov = (centered.transpose() * centered) / static_cast<double>(x.dim(0) - 1);
  };
  Eigen::VectorXd mu1, mu2;
  Mat s1, s2;
  fit(a, mu1, s1);
  fit(b, mu2, s2);
  const int p = a.dim(1);
  const double mean_term = (mu1 - mu2).squaredNorm();

  double jitter = 0.0;
  for (int attempt = 0; attempt < 4; ++attempt) {
    const Mat c1 = s1 + jitter * Mat::Identity(p, p);
    const Mat c2 = s2 + jitter * Mat::Identity(p, p);
    Eigen::SelfAdjointEigenSolver<Mat> e1(0.5 * (c1 + c1.transpose()));
    const Eigen::VectorXd d1 = e1.eigenvalues();
    const double scale = std::max(1.0, d1.cwiseAbs().maxCoeff());
    if (d1.minCoeff() >= -1e-9 * scale) {
      const Mat root1 = e1.eigenvectors() * d1.cwiseMax(0.0).cwiseSqrt().asDiagonal() * e1.eigenvectors().transpose();
      const Mat inner = root1 * c2 * root1;
      Eigen::SelfAdjointEigenSolver<Mat> e2(0.5 * (inner + inner.transpose()));
      const Eigen::VectorXd d2 = e2.eigenvalues();
      const double scale2 = std::max(1.0, d2.cwiseAbs().maxCoeff());
      if (d2.minCoeff() >= -1e-9 * scale2) {
        const double tr_root = d2.cwiseMax(0.0).cwiseSqrt().sum();
        const double d = mean_term + c1.trace() + c2.trace() - 2.0 * tr_root;
        return std::max(0.0, d);
      }
    }
    jitter = jitter == 0.0 ? 1e-6 * std::max(1e-12, (s1.trace() + s2.trace()) / (2.0 * p)) : jitter * 100.0;
  }
  throw NumericError("covariance not positive semi-definite after symmetrization and jitter retries");
}

double fid_proxy(const ImageGenerator& g, const FactorDataset& real, const FeatureExtractor& features, int n_samples,
                 Seed seed) {
  if (n_samples < 500) throw ArgumentError("FID proxy needs n_samples >= 500");
  if (!(g.image_shape() == real.image_shape())) throw ShapeError("generator and dataset image shapes differ");
  Rng rng(derive_seed(seed, "fid-real"));
  std::vector<int> rows(static_cast<std::size_t>(n_samples));
  for (auto& r : rows) r = static_cast<int>(rng.index(static_cast<std::uint64_t>(real.size())));
  const Tensor<double> fr = features.features(real.batch(rows));
  const LatentBatch z = sample_prior(n_samples, g.latent_dims(), g.prior(), derive_seed(seed, "fid-fake"));
  const Tensor<double> ff = features.features(generate_batched(g, z.values));
  return frechet_distance(fr, ff);
}

// --- Correlation -------------------------------------------------------------

double pearson_correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ArgumentError("correlation inputs differ in length");
  if (xs.size() < 3) throw ArgumentError("correlation needs at least 3 points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ArgumentError("correlation undefined: an input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace varpred
