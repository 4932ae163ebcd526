#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "varpred/data.hpp"
#include "varpred/interfaces.hpp"

namespace varpred {

// Training budget of the metric's recognizer. Fixed, no early stopping, a
// fresh network for every trial.
struct RecognizerBudget {
  int epochs = 20;
  double lr = 1e-3;
  int batch_size = 64;
  int width = 8;
};

struct VpMetricConfig {
  int samples = 10000;        // N
  int trials = 3;             // S
  double train_ratio = 0.01;  // eta
  RecognizerBudget budget;
  Seed seed = 0;

  // Throws ConfigError unless 0 < eta < 1, S >= 1 and N * eta >= K.
  void validate(int latent_dims) const;
};

void to_json(nlohmann::json& j, const VpMetricConfig& c);
void from_json(const nlohmann::json& j, VpMetricConfig& c);

struct MetricReport {
  std::string metric;
  std::vector<double> accuracies;   // completed trials, in trial order
  std::vector<int> failed_trials;   // trials whose recognizer diverged
  double score = 0.0;               // mean of `accuracies`
  bool complete = true;
  std::string fingerprint;
  std::vector<Seed> seeds;
  nlohmann::json config;
};

void to_json(nlohmann::json& j, const MetricReport& r);

// Few-shot variation-predictability score. Per trial: sample N dimension
// indices and N latent pairs differing only there, form (x1 - x2, d),
// split eta*N / (1-eta)*N, train a difference-mode recognizer on the first
// part and report accuracy on the rest. Score is the mean over trials.
MetricReport vp_metric(const ImageGenerator& g, const VpMetricConfig& cfg);

// Test accuracy of one trial, exposed for diagnostics and benchmarks.
struct VpTrial {
  double accuracy = 0.0;
  bool failed = false;
  int train_size = 0;
  int test_size = 0;
};
VpTrial vp_metric_trial(const ImageGenerator& g, const VpMetricConfig& cfg, Seed trial_seed);

struct FactorVaeConfig {
  int train_votes = 800;
  int eval_votes = 200;
  int batch_size = 64;
  double prune_threshold = 0.05;  // relative to the mean per-dim std
  int std_samples = 10000;
  Seed seed = 0;
};

void to_json(nlohmann::json& j, const FactorVaeConfig& c);
void from_json(const nlohmann::json& j, FactorVaeConfig& c);

struct FactorVaeReport {
  double score = 0.0;
  std::vector<int> active_dims;
  std::vector<int> majority;                // factor assigned to each latent dim
  std::vector<std::vector<int>> counts;     // [latent dim][factor] training votes
};

// FactorVAE disentanglement score via majority vote over the
// least-variant normalized latent dimension. Throws CapabilityError when the
// dataset has no factor table and DegenerateEncoderError when every latent
// dimension is pruned.
FactorVaeReport factorvae_metric(const LatentEncoder& encoder, const FactorDataset& data, const FactorVaeConfig& cfg);

// Feature network for the FID proxy: a small conv classifier trained on the
// real images to predict which multiple of 90 degrees they were rotated by.
struct FeatureExtractorConfig {
  int width = 8;
  int hidden = 32;
  int steps = 300;
  int batch_size = 64;
  double lr = 1e-3;
  Seed seed = 0;
};

class FeatureExtractor {
 public:
  static FeatureExtractor train(const FactorDataset& real, const FeatureExtractorConfig& cfg);
  // Penultimate activations, [n, hidden], in double precision.
  Tensor<double> features(const Tensor<float>& images) const;
  double final_loss() const { return final_loss_; }

 private:
  explicit FeatureExtractor(ConvNet<float> net) : net_(std::move(net)) {}
  ConvNet<float> net_;
  double final_loss_ = 0.0;
};

// Rotates each [c, h, w] image of a batch by quarter turns (counterclockwise).
Tensor<float> rotate_quarter_turns(const Tensor<float>& images, std::span<const int> turns);

// Frechet distance between Gaussian fits of two feature sets [n, p]:
// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)), unbiased covariances.
double frechet_distance(const Tensor<double>& a, const Tensor<double>& b);

// Frechet distance between extractor features of n_samples real images and
// n_samples generated images. Labelled "FID-proxy": not comparable to
// Inception-based FID.
double fid_proxy(const ImageGenerator& g, const FactorDataset& real, const FeatureExtractor& features, int n_samples,
                 Seed seed);

// Pearson correlation coefficient; throws ArgumentError for fewer than 3
// points, unequal lengths or zero variance.
double pearson_correlation(std::span<const double> xs, std::span<const double> ys);

// Index of the largest entry, lowest index on ties.
int argmax_lowest(std::span<const float> values);

}  // namespace varpred
