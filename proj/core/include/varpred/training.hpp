#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "varpred/data.hpp"
#include "varpred/metrics.hpp"
#include "varpred/models.hpp"
#include "varpred/nn/adam.hpp"

namespace varpred {

enum class ModelKind { gan, vpgan, infogan, betavae, vae_vp };
enum class Likelihood { bernoulli, gaussian };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);
std::string to_string(Likelihood likelihood);
Likelihood parse_likelihood(const std::string& name);

// Built-in dataset ids; anything else is treated as a container path.
inline constexpr const char* kDatasetDefault = "synthetic-default";
inline constexpr const char* kDatasetSmall = "synthetic-small";

struct TrainConfig {
  ModelKind model = ModelKind::vpgan;
  int latent_dims = 6;
  double alpha = 0.1;    // VP weight
  double beta = 4.0;     // KL weight
  double lambda = 0.01;  // InfoGAN weight
  int info_dims = 0;     // InfoGAN regressed code dims, 0 = all
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double lr_q = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 64;
  int steps = 2000;
  Seed seed = 0;
  std::string dataset = kDatasetDefault;
  InputMode input_mode = InputMode::flat;
  Prior prior = Prior::uniform;
  int width = 8;
  Likelihood likelihood = Likelihood::bernoulli;
  bool symmetric_pairs = true;
  int checkpoint_every = 0;  // 0 = only the final checkpoint
  int log_every = 10;

  bool is_vae() const { return model == ModelKind::betavae || model == ModelKind::vae_vp; }
  bool has_vp() const { return model == ModelKind::vpgan || model == ModelKind::vae_vp; }
  // Throws ConfigError on invalid weights, sizes or an unknown dataset id.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Loads a built-in dataset or a container file. Throws ConfigError for an
// id that is neither.
FactorDataset resolve_dataset(const std::string& id);
FactorSpec small_spec();

struct GanLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double vp_value = 0.0;  // VP bound, nats; vpgan only
  double aux_loss = 0.0;  // InfoGAN only
};

struct VaeLosses {
  double reconstruction = 0.0;  // negative log-likelihood per image
  double kl = 0.0;
  double elbo = 0.0;
  double vp_value = 0.0;
};

// Adversarial models and optimizers. Q is a pair-concat recognizer for
// vpgan and a single-image code regressor for infogan.
struct GanState {
  Generator<float> g;
  Discriminator<float> d;
  std::optional<Recognizer<float>> q;
  nn::Adam<float> opt_g;
  nn::Adam<float> opt_d;
  nn::Adam<float> opt_q;

  static GanState create(const TrainConfig& cfg, const ImageShape& image);
};

struct VaeState {
  EncoderDecoder<float> vae;
  std::optional<Recognizer<float>> q;
  nn::Adam<float> opt_vae;
  nn::Adam<float> opt_q;

  static VaeState create(const TrainConfig& cfg, const ImageShape& image);
};

// Mean binary cross-entropy with logits, and its gradient wrt the logits
// (already divided by the batch size).
double bce_with_logits(const Tensor<float>& logits, float target, Tensor<float>* grad);

// One discriminator update on (real, G(z)), then one generator update with
// the non-saturating loss.
GanLosses gan_step(GanState& s, const Tensor<float>& real, const Tensor<float>& z);

// Discriminator update on (real, G(z1)), then a joint (G, Q) update on the
// adversarial loss plus alpha * VP loss on (G(z1), G(z2), d). With alpha = 0
// G and D follow gan_step exactly; Q still learns on detached images.
GanLosses vpgan_step(GanState& s, const Tensor<float>& real, const PairedLatentBatch& pair, double alpha,
                     bool symmetric);

// gan_step plus lambda * MSE of Q regressing the first code dims of z.
GanLosses infogan_step(GanState& s, const Tensor<float>& real, const Tensor<float>& z, double lambda, int info_dims);

// KL(N(mean, exp(logvar)) || N(0, I)) summed over dims, averaged over rows.
double kl_closed_form(const Tensor<float>& mean, const Tensor<float>& logvar);

// One update on reconstruction + beta * KL. `eps` holds the reparameterization
// noise [n, K].
VaeLosses betavae_step(VaeState& s, const Tensor<float>& real, const Tensor<float>& eps, double beta,
                       Likelihood likelihood);

// betavae_step plus alpha * VP loss on decoder images of the pair; with
// alpha = 0 the VAE follows betavae_step exactly.
VaeLosses vae_vp_step(VaeState& s, const Tensor<float>& real, const Tensor<float>& eps, const PairedLatentBatch& pair,
                      double beta, double alpha, Likelihood likelihood, bool symmetric);

struct LossEntry {
  long step = 0;
  std::string name;
  double value = 0.0;
};

// A training run over a dataset. Every step draws its data from streams
// derived from (seed, step), so a session restored from a checkpoint
// continues exactly where the saved one stopped.
class TrainingSession {
 public:
  TrainingSession(TrainConfig cfg, std::shared_ptr<const FactorDataset> data);

  const TrainConfig& config() const { return cfg_; }
  long step() const { return step_; }
  // Runs one step and returns its named losses. Throws NumericError on a
  // non-finite loss.
  std::vector<std::pair<std::string, double>> advance();

  void save(const std::filesystem::path& path) const;
  // Restores parameters, optimizer state and the step counter.
  void load(const std::filesystem::path& path);

  // Frozen views for evaluation.
  const Generator<float>& generator() const;
  const EncoderDecoder<float>* vae() const { return vae_ ? &vae_->vae : nullptr; }
  const GanState* gan_state() const { return gan_ ? &*gan_ : nullptr; }
  const VaeState* vae_state() const { return vae_ ? &*vae_ : nullptr; }
  GanState* gan_state() { return gan_ ? &*gan_ : nullptr; }
  VaeState* vae_state() { return vae_ ? &*vae_ : nullptr; }
  Prior sampling_prior() const;

 private:
  TrainConfig cfg_;
  std::shared_ptr<const FactorDataset> data_;
  mutable std::optional<GanState> gan_;
  mutable std::optional<VaeState> vae_;
  long step_ = 0;
};

struct RunOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  std::optional<VpMetricConfig> final_vp_metric;
  bool verbose = false;
};

struct RunRecord {
  std::string fingerprint;
  nlohmann::json config;
  std::string status;  // "completed" or "aborted"
  std::string error;
  long steps_completed = 0;
  long resumed_from = -1;
  std::vector<LossEntry> losses;
  std::vector<std::string> checkpoints;
  double wall_clock_seconds = 0.0;
  nlohmann::json final_metrics = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const RunRecord& r);

// Trains to cfg.steps, writing under out_dir:
//   config.json          resolved configuration and seeds
//   losses.csv           step,name,value
//   checkpoints/step-N.vpck, checkpoints/latest.vpck
//   run.json             the RunRecord
// With resume, continues from checkpoints/latest.vpck when present. A
// non-finite loss persists an aborted RunRecord and rethrows.
RunRecord run_experiment(const TrainConfig& cfg, const RunOptions& options);
// Same, reusing an already loaded dataset.
RunRecord run_experiment(const TrainConfig& cfg, const RunOptions& options,
                         std::shared_ptr<const FactorDataset> data);

}  // namespace varpred
