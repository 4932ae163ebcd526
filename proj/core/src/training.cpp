#include "varpred/training.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "varpred/checkpoint.hpp"
#include "varpred/container.hpp"
#include "varpred/error.hpp"
#include "varpred/interfaces.hpp"
#include "varpred/vp_objective.hpp"

namespace varpred {

namespace fs = std::filesystem;

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gan: return "gan";
    case ModelKind::vpgan: return "vpgan";
    case ModelKind::infogan: return "infogan";
    case ModelKind::betavae: return "betavae";
    case ModelKind::vae_vp: return "vae-vp";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::gan, ModelKind::vpgan, ModelKind::infogan, ModelKind::betavae, ModelKind::vae_vp}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown model kind '" + name + "' (expected gan, vpgan, infogan, betavae or vae-vp)");
}

std::string to_string(Likelihood likelihood) {
  return likelihood == Likelihood::bernoulli ? "bernoulli" : "gaussian";
}

Likelihood parse_likelihood(const std::string& name) {
  if (name == "bernoulli") return Likelihood::bernoulli;
  if (name == "gaussian") return Likelihood::gaussian;
  throw ConfigError("unknown likelihood '" + name + "' (expected bernoulli or gaussian)");
}

FactorSpec small_spec() {
  FactorSpec s;
  s.factors = {{"shape", 3, FactorRole::shape},
               {"scale", 2, FactorRole::scale},
               {"orientation", 2, FactorRole::orientation},
               {"pos_x", 6, FactorRole::pos_x},
               {"pos_y", 6, FactorRole::pos_y}};
  return s;
}

FactorDataset resolve_dataset(const std::string& id) {
  if (id == kDatasetDefault) return generate_factor_dataset(FactorSpec::desk_default());
  if (id == kDatasetSmall) return generate_factor_dataset(small_spec());
  if (fs::is_regular_file(id)) return load_dataset(id);
  throw ConfigError("unknown dataset '" + id + "': not a built-in id (" + kDatasetDefault + ", " + kDatasetSmall +
                    ") and not an existing file");
}

void TrainConfig::validate() const {
  if (latent_dims < 2) throw ConfigError("latent_dims must be >= 2");
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(lambda >= 0.0)) throw ConfigError("alpha, beta and lambda must be >= 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(lr_g > 0.0) || !(lr_d > 0.0) || !(lr_q > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam moment decays must lie in [0, 1)");
  }
  if (width < 1) throw ConfigError("width must be >= 1");
  if (info_dims < 0 || info_dims > latent_dims) throw ConfigError("info_dims must lie in [0, latent_dims]");
  if (checkpoint_every < 0 || log_every < 1) throw ConfigError("checkpoint_every must be >= 0 and log_every >= 1");
  if (is_vae() && input_mode != InputMode::flat) throw ConfigError("VAE decoders use flat latent input");
  if (dataset != kDatasetDefault && dataset != kDatasetSmall && !fs::is_regular_file(dataset)) {
    throw ConfigError("unknown dataset '" + dataset + "': not a built-in id (" + kDatasetDefault + ", " +
                      kDatasetSmall + ") and not an existing file");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"model", to_string(c.model)},
       {"latent_dims", c.latent_dims},
       {"alpha", c.alpha},
       {"beta", c.beta},
       {"lambda", c.lambda},
       {"info_dims", c.info_dims},
       {"lr_g", c.lr_g},
       {"lr_d", c.lr_d},
       {"lr_q", c.lr_q},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"batch_size", c.batch_size},
       {"steps", c.steps},
       {"seed", c.seed},
       {"dataset", c.dataset},
       {"input_mode", to_string(c.input_mode)},
       {"prior", to_string(c.prior)},
       {"width", c.width},
       {"likelihood", to_string(c.likelihood)},
       {"symmetric_pairs", c.symmetric_pairs},
       {"checkpoint_every", c.checkpoint_every},
       {"log_every", c.log_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> keys = {
      "model", "latent_dims", "alpha",  "beta",       "lambda",     "info_dims",      "lr_g",
      "lr_d",  "lr_q",        "adam_beta1", "adam_beta2", "batch_size", "steps",   "seed",
      "dataset", "input_mode", "prior", "width",      "likelihood", "symmetric_pairs", "checkpoint_every",
      "log_every"};
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!keys.count(key)) throw ConfigError("unknown key '" + key + "' in train config");
  }
  c = TrainConfig{};
  try {
    if (j.contains("model")) c.model = parse_model_kind(j["model"].get<std::string>());
    c.latent_dims = j.value("latent_dims", c.latent_dims);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.lambda = j.value("lambda", c.lambda);
    c.info_dims = j.value("info_dims", c.info_dims);
    c.lr_g = j.value("lr_g", c.lr_g);
    c.lr_d = j.value("lr_d", c.lr_d);
    c.lr_q = j.value("lr_q", c.lr_q);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.seed = j.value("seed", c.seed);
    c.dataset = j.value("dataset", c.dataset);
    if (j.contains("input_mode")) c.input_mode = parse_input_mode(j["input_mode"].get<std::string>());
    if (j.contains("prior")) c.prior = parse_prior(j["prior"].get<std::string>());
    c.width = j.value("width", c.width);
    if (j.contains("likelihood")) c.likelihood = parse_likelihood(j["likelihood"].get<std::string>());
    c.symmetric_pairs = j.value("symmetric_pairs", c.symmetric_pairs);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.log_every = j.value("log_every", c.log_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid train config: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

// --- Model state ---------------------------------------------------------------

namespace {

nn::AdamConfig adam(const TrainConfig& cfg, double lr) { return {lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8}; }

int regressed_dims(const TrainConfig& cfg) { return cfg.info_dims == 0 ? cfg.latent_dims : cfg.info_dims; }

}  // namespace

GanState GanState::create(const TrainConfig& cfg, const ImageShape& image) {
  GeneratorConfig gc;
  gc.latent_dims = cfg.latent_dims;
  gc.input_mode = cfg.input_mode;
  gc.image = image;
  gc.width = cfg.width;
  gc.seed = derive_seed(cfg.seed, "init/G");
  DiscriminatorConfig dc;
  dc.image = image;
  dc.width = cfg.width;
  dc.seed = derive_seed(cfg.seed, "init/D");
  GanState s{Generator<float>(gc), Discriminator<float>(dc), std::nullopt, {}, {}, {}};
  if (cfg.model == ModelKind::vpgan || cfg.model == ModelKind::infogan) {
    RecognizerConfig qc;
    qc.mode = cfg.model == ModelKind::vpgan ? RecognizerMode::pair_concat : RecognizerMode::single;
    qc.classes = cfg.model == ModelKind::vpgan ? cfg.latent_dims : regressed_dims(cfg);
    qc.image = image;
    qc.width = cfg.width;
    qc.seed = derive_seed(cfg.seed, "init/Q");
    s.q.emplace(qc);
    s.opt_q = nn::Adam<float>(s.q->parameters(), adam(cfg, cfg.lr_q));
  }
  s.opt_g = nn::Adam<float>(s.g.parameters(), adam(cfg, cfg.lr_g));
  s.opt_d = nn::Adam<float>(s.d.parameters(), adam(cfg, cfg.lr_d));
  return s;
}

VaeState VaeState::create(const TrainConfig& cfg, const ImageShape& image) {
  EncoderDecoderConfig ec;
  ec.latent_dims = cfg.latent_dims;
  ec.image = image;
  ec.width = cfg.width;
  ec.seed = derive_seed(cfg.seed, "init/VAE");
  VaeState s{EncoderDecoder<float>(ec), std::nullopt, {}, {}};
  if (cfg.model == ModelKind::vae_vp) {
    RecognizerConfig qc;
    qc.mode = RecognizerMode::pair_concat;
    qc.classes = cfg.latent_dims;
    qc.image = image;
    qc.width = cfg.width;
    qc.seed = derive_seed(cfg.seed, "init/Q");
    s.q.emplace(qc);
    s.opt_q = nn::Adam<float>(s.q->parameters(), adam(cfg, cfg.lr_q));
  }
  s.opt_vae = nn::Adam<float>(s.vae.parameters(), adam(cfg, cfg.lr_g));
  return s;
}

// --- Losses --------------------------------------------------------------------

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// D update on real (target 1) and fake (target 0) rows in a single pass.
double discriminator_update(GanState& s, const Tensor<float>& real, const Tensor<float>& fake) {
  auto params = s.d.parameters();
  nn::zero_grads(params);
  const int n_real = real.dim(0), n_fake = fake.dim(0);
  const Tensor<float> logits = s.d.forward_train(concat_rows(real, fake));
  Tensor<float> grad(logits.shape());
  double loss_real = 0.0, loss_fake = 0.0;
  for (int i = 0; i < n_real; ++i) {
    const double l = logits[static_cast<std::size_t>(i)];
    loss_real += softplus(-l);
    grad[static_cast<std::size_t>(i)] = static_cast<float>((sigmoid(l) - 1.0) / n_real);
  }
  for (int i = n_real; i < n_real + n_fake; ++i) {
    const double l = logits[static_cast<std::size_t>(i)];
    loss_fake += softplus(l);
    grad[static_cast<std::size_t>(i)] = static_cast<float>(sigmoid(l) / n_fake);
  }
  s.d.backward(grad);
  s.opt_d.step(params);
  return loss_real / n_real + loss_fake / n_fake;
}

// Non-saturating generator loss -log D(x); returns the loss and fills the
// gradient wrt x.
double generator_adversarial(GanState& s, const Tensor<float>& fake, Tensor<float>& grad_x) {
  nn::zero_grads(s.d.parameters());
  const Tensor<float> logits = s.d.forward_train(fake);
  Tensor<float> grad;
  const double loss = bce_with_logits(logits, 1.0f, &grad);
  grad_x = s.d.backward(grad);
  return loss;
}

void add_into(Tensor<float>& a, const Tensor<float>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

double train_q_detached(Recognizer<float>& q, nn::Adam<float>& opt, const Tensor<float>& x1, const Tensor<float>& x2,
                        const PairedLatentBatch& pair, bool symmetric) {
  auto params = q.parameters();
  nn::zero_grads(params);
  const VpGradient<float> vg = vp_loss_backward(q, x1, x2, pair.d, pair.dims(), 1.0, symmetric);
  opt.step(params);
  return vg.value.total;
}

}  // namespace

double bce_with_logits(const Tensor<float>& logits, float target, Tensor<float>* grad) {
  const std::size_t n = logits.size();
  if (grad) *grad = Tensor<float>(logits.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = logits[i];
    loss += softplus(l) - target * l;
    if (grad) (*grad)[i] = static_cast<float>((sigmoid(l) - target) / static_cast<double>(n));
  }
  return loss / static_cast<double>(n);
}

GanLosses gan_step(GanState& s, const Tensor<float>& real, const Tensor<float>& z) {
  auto gparams = s.g.parameters();
  const Tensor<float> fake = s.g.forward_train(z);
  GanLosses out;
  out.d_loss = discriminator_update(s, real, fake);
  nn::zero_grads(gparams);
  Tensor<float> grad;
  out.g_loss = generator_adversarial(s, fake, grad);
  s.g.backward(grad);
  s.opt_g.step(gparams);
  return out;
}

GanLosses vpgan_step(GanState& s, const Tensor<float>& real, const PairedLatentBatch& pair, double alpha,
                     bool symmetric) {
  if (!s.q || s.q->config().mode != RecognizerMode::pair_concat) {
    throw ArgumentError("vpgan_step needs a pair-concat recognizer");
  }
  if (alpha < 0.0) throw ArgumentError("alpha must be >= 0");
  if (alpha == 0.0) {
    GanLosses out = gan_step(s, real, pair.z1);
    out.vp_value = train_q_detached(*s.q, s.opt_q, s.g.forward(pair.z1), s.g.forward(pair.z2), pair, symmetric);
    return out;
  }
  const int n = pair.size();
  auto gparams = s.g.parameters();
  auto qparams = s.q->parameters();
  const Tensor<float> both = s.g.forward_train(concat_rows(pair.z1, pair.z2));
  const Tensor<float> x1 = both.slice_rows(0, n);
  const Tensor<float> x2 = both.slice_rows(n, 2 * n);

  GanLosses out;
  out.d_loss = discriminator_update(s, real, x1);

  nn::zero_grads(gparams);
  nn::zero_grads(qparams);
  Tensor<float> grad_adv;
  out.g_loss = generator_adversarial(s, x1, grad_adv);
  VpGradient<float> vg = vp_loss_backward(*s.q, x1, x2, pair.d, pair.dims(), alpha, symmetric);
  add_into(vg.grad_x1, grad_adv);
  s.g.backward(concat_rows(vg.grad_x1, vg.grad_x2));
  s.opt_g.step(gparams);
  s.opt_q.step(qparams);
  out.vp_value = vg.value.total;
  return out;
}

GanLosses infogan_step(GanState& s, const Tensor<float>& real, const Tensor<float>& z, double lambda, int info_dims) {
  if (!s.q || s.q->config().mode != RecognizerMode::single) throw ArgumentError("infogan_step needs a code regressor");
  const int n = z.dim(0), k = z.dim(1);
  const int m = info_dims == 0 ? k : info_dims;
  if (s.q->classes() != m) throw ArgumentError("regressor output size does not match info_dims");
  Tensor<float> codes({n, m});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) codes.at(i, j) = z.at(i, j);
  }
  auto gparams = s.g.parameters();
  auto qparams = s.q->parameters();
  const Tensor<float> fake = s.g.forward_train(z);
  GanLosses out;
  out.d_loss = discriminator_update(s, real, fake);
  nn::zero_grads(gparams);
  nn::zero_grads(qparams);
  Tensor<float> grad;
  out.g_loss = generator_adversarial(s, fake, grad);
  const AuxGradient<float> aux = infogan_aux_backward(*s.q, fake, codes, lambda);
  add_into(grad, aux.grad_x);
  s.g.backward(grad);
  s.opt_g.step(gparams);
  s.opt_q.step(qparams);
  out.aux_loss = aux.loss;
  return out;
}

double kl_closed_form(const Tensor<float>& mean, const Tensor<float>& logvar) {
  if (mean.shape() != logvar.shape() || mean.rank() != 2) throw ShapeError("mean and logvar must both be [n, K]");
  double kl = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double mu = mean[i], lv = logvar[i];
    kl += 0.5 * (mu * mu + std::exp(lv) - lv - 1.0);
  }
  return kl / mean.dim(0);
}

namespace {

// Reconstruction + beta * KL backward into the VAE; leaves the Adam step to
// the caller.
VaeLosses vae_backward(VaeState& s, const Tensor<float>& real, const Tensor<float>& eps, double beta,
                       Likelihood likelihood) {
  const int n = real.dim(0);
  auto [mean, logvar] = s.vae.encode_train(real);
  if (eps.shape() != mean.shape()) throw ShapeError("eps must be " + shape_string(mean.shape()));
  const Tensor<float> z = reparameterize(mean, logvar, eps);
  Generator<float>& dec = s.vae.decoder();
  const Tensor<float> recon_images = dec.forward_train(z);

  VaeLosses out;
  double nll = 0.0;
  Tensor<float> grad_z;
  if (likelihood == Likelihood::bernoulli) {
    // Pixel probability sigmoid(2 * pre) = (tanh(pre) + 1) / 2.
    const Tensor<float>& pre = dec.logits();
    Tensor<float> grad(pre.shape());
    for (std::size_t i = 0; i < pre.size(); ++i) {
      const double a = 2.0 * pre[i];
      const double t = 0.5 * (static_cast<double>(real[i]) + 1.0);
      nll += softplus(a) - t * a;
      grad[i] = static_cast<float>(2.0 * (sigmoid(a) - t) / n);
    }
    grad_z = dec.backward_logits(grad);
  } else {
    Tensor<float> grad(recon_images.shape());
    for (std::size_t i = 0; i < recon_images.size(); ++i) {
      const double e = static_cast<double>(recon_images[i]) - static_cast<double>(real[i]);
      nll += 0.5 * e * e;
      grad[i] = static_cast<float>(e / n);
    }
    grad_z = dec.backward(grad);
  }
  out.reconstruction = nll / n;
  out.kl = kl_closed_form(mean, logvar);
  out.elbo = -(out.reconstruction + out.kl);

  Tensor<float> grad_mean(mean.shape()), grad_logvar(logvar.shape());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double sd = std::exp(0.5 * static_cast<double>(logvar[i]));
    grad_mean[i] = static_cast<float>(grad_z[i] + beta * mean[i] / n);
    grad_logvar[i] = static_cast<float>(grad_z[i] * eps[i] * 0.5 * sd + beta * 0.5 * (sd * sd - 1.0) / n);
  }
  s.vae.backward_encoder(grad_mean, grad_logvar);
  return out;
}

}  // namespace

VaeLosses betavae_step(VaeState& s, const Tensor<float>& real, const Tensor<float>& eps, double beta,
                       Likelihood likelihood) {
  if (beta < 0.0) throw ArgumentError("beta must be >= 0");
  auto params = s.vae.parameters();
  nn::zero_grads(params);
  const VaeLosses out = vae_backward(s, real, eps, beta, likelihood);
  s.opt_vae.step(params);
  return out;
}

VaeLosses vae_vp_step(VaeState& s, const Tensor<float>& real, const Tensor<float>& eps, const PairedLatentBatch& pair,
                      double beta, double alpha, Likelihood likelihood, bool symmetric) {
  if (!s.q) throw ArgumentError("vae_vp_step needs a pair-concat recognizer");
  if (alpha < 0.0) throw ArgumentError("alpha must be >= 0");
  if (alpha == 0.0) {
    VaeLosses out = betavae_step(s, real, eps, beta, likelihood);
    const Generator<float>& dec = s.vae.decoder();
    out.vp_value = train_q_detached(*s.q, s.opt_q, dec.forward(pair.z1), dec.forward(pair.z2), pair, symmetric);
    return out;
  }
  auto params = s.vae.parameters();
  auto qparams = s.q->parameters();
  nn::zero_grads(params);
  nn::zero_grads(qparams);
  VaeLosses out = vae_backward(s, real, eps, beta, likelihood);
  const int n = pair.size();
  Generator<float>& dec = s.vae.decoder();
  const Tensor<float> both = dec.forward_train(concat_rows(pair.z1, pair.z2));
  const VpGradient<float> vg =
      vp_loss_backward(*s.q, both.slice_rows(0, n), both.slice_rows(n, 2 * n), pair.d, pair.dims(), alpha, symmetric);
  dec.backward(concat_rows(vg.grad_x1, vg.grad_x2));
  s.opt_vae.step(params);
  s.opt_q.step(qparams);
  out.vp_value = vg.value.total;
  return out;
}

// --- Session -------------------------------------------------------------------

TrainingSession::TrainingSession(TrainConfig cfg, std::shared_ptr<const FactorDataset> data)
    : cfg_(std::move(cfg)), data_(std::move(data)) {
  cfg_.validate();
  if (!data_ || data_->size() == 0) throw ConfigError("training needs a non-empty dataset");
  const ImageShape image = data_->image_shape();
  if (cfg_.is_vae()) {
    vae_.emplace(VaeState::create(cfg_, image));
  } else {
    gan_.emplace(GanState::create(cfg_, image));
  }
}

Prior TrainingSession::sampling_prior() const { return cfg_.is_vae() ? Prior::normal : cfg_.prior; }

const Generator<float>& TrainingSession::generator() const {
  return gan_ ? gan_->g : vae_->vae.decoder();
}

std::vector<std::pair<std::string, double>> TrainingSession::advance() {
  const auto t = static_cast<std::uint64_t>(step_);
  const int n = cfg_.batch_size, k = cfg_.latent_dims;
  Rng batch_rng(derive_seed(cfg_.seed, "train/batch", t));
  std::vector<int> rows(static_cast<std::size_t>(n));
  for (auto& r : rows) r = static_cast<int>(batch_rng.index(static_cast<std::uint64_t>(data_->size())));
  const Tensor<float> real = data_->batch(rows);
  const Seed latent_seed = derive_seed(cfg_.seed, "train/latent", t);

  std::vector<std::pair<std::string, double>> losses;
  switch (cfg_.model) {
    case ModelKind::gan: {
      const GanLosses l = gan_step(*gan_, real, sample_prior(n, k, cfg_.prior, latent_seed).values);
      losses = {{"d_loss", l.d_loss}, {"g_loss", l.g_loss}};
      break;
    }
    case ModelKind::vpgan: {
      const GanLosses l =
          vpgan_step(*gan_, real, sample_paired_codes(n, k, cfg_.prior, latent_seed), cfg_.alpha, cfg_.symmetric_pairs);
      losses = {{"d_loss", l.d_loss}, {"g_loss", l.g_loss}, {"vp_bound", l.vp_value}};
      break;
    }
    case ModelKind::infogan: {
      const GanLosses l =
          infogan_step(*gan_, real, sample_prior(n, k, cfg_.prior, latent_seed).values, cfg_.lambda, cfg_.info_dims);
      losses = {{"d_loss", l.d_loss}, {"g_loss", l.g_loss}, {"aux_loss", l.aux_loss}};
      break;
    }
    case ModelKind::betavae:
    case ModelKind::vae_vp: {
      const Tensor<float> eps = sample_prior(n, k, Prior::normal, derive_seed(cfg_.seed, "train/eps", t)).values;
      VaeLosses l;
      if (cfg_.model == ModelKind::betavae) {
        l = betavae_step(*vae_, real, eps, cfg_.beta, cfg_.likelihood);
      } else {
        l = vae_vp_step(*vae_, real, eps, sample_paired_codes(n, k, Prior::normal, latent_seed), cfg_.beta, cfg_.alpha,
                        cfg_.likelihood, cfg_.symmetric_pairs);
      }
      losses = {{"recon_nll", l.reconstruction}, {"kl", l.kl}, {"elbo", l.elbo}};
      if (cfg_.model == ModelKind::vae_vp) losses.emplace_back("vp_bound", l.vp_value);
      break;
    }
  }
  ++step_;
  for (const auto& [name, value] : losses) {
    if (!std::isfinite(value)) {
      throw NumericError("non-finite " + name + " at step " + std::to_string(step_) + " (" + to_string(cfg_.model) +
                         ")");
    }
  }
  return losses;
}

namespace {

// Schedule fields may change between a run and its resumption.
std::string resume_fingerprint(const TrainConfig& cfg) {
  nlohmann::json j = cfg;
  for (const char* key : {"steps", "checkpoint_every", "log_every"}) j.erase(key);
  return fingerprint(j);
}

}  // namespace

void TrainingSession::save(const fs::path& path) const {
  Container c;
  const nlohmann::json cfg = cfg_;
  nlohmann::json models = nlohmann::json::object();
  auto add_q = [&](Recognizer<float>& q, const nn::Adam<float>& opt) {
    models["Q"] = {{"config", q.config()}};
    put_parameters(c, "Q/param/", q.parameters());
    put_optimizer(c, "Q/adam/", opt);
  };
  if (gan_) {
    models["G"] = {{"config", gan_->g.config()}};
    models["D"] = {{"config", gan_->d.config()}};
    put_parameters(c, "G/param/", gan_->g.parameters());
    put_optimizer(c, "G/adam/", gan_->opt_g);
    put_parameters(c, "D/param/", gan_->d.parameters());
    put_optimizer(c, "D/adam/", gan_->opt_d);
    if (gan_->q) add_q(*gan_->q, gan_->opt_q);
  } else {
    models["VAE"] = {{"config", vae_->vae.config()}};
    put_parameters(c, "VAE/param/", vae_->vae.parameters());
    put_optimizer(c, "VAE/adam/", vae_->opt_vae);
    if (vae_->q) add_q(*vae_->q, vae_->opt_q);
  }
  c.meta = {{"kind", kKindTrainingState},
            {"config", cfg},
            {"fingerprint", resume_fingerprint(cfg_)},
            {"step", step_},
            {"prior", to_string(sampling_prior())},
            {"rng", {{"seed", cfg_.seed}, {"streams", "derive_seed(seed, purpose, step)"}}},
            {"models", models}};
  write_container(path, kCheckpointMagic, c);
}

void TrainingSession::load(const fs::path& path) {
  const Container c = read_container(path, kCheckpointMagic);
  if (c.meta.value("kind", "") != kKindTrainingState) {
    throw ModelKindError("'" + path.string() + "' is not a training-state checkpoint");
  }
  const std::string fp = resume_fingerprint(cfg_);
  if (c.meta.value("fingerprint", "") != fp) {
    throw PersistenceError("checkpoint '" + path.string() + "' was written for a different configuration (" +
                           c.meta.value("fingerprint", "") + " vs " + fp + ")");
  }
  if (gan_) {
    get_parameters(c, "G/param/", gan_->g.parameters());
    get_optimizer(c, "G/adam/", gan_->opt_g);
    get_parameters(c, "D/param/", gan_->d.parameters());
    get_optimizer(c, "D/adam/", gan_->opt_d);
    if (gan_->q) {
      get_parameters(c, "Q/param/", gan_->q->parameters());
      get_optimizer(c, "Q/adam/", gan_->opt_q);
    }
  } else {
    get_parameters(c, "VAE/param/", vae_->vae.parameters());
    get_optimizer(c, "VAE/adam/", vae_->opt_vae);
    if (vae_->q) {
      get_parameters(c, "Q/param/", vae_->q->parameters());
      get_optimizer(c, "Q/adam/", vae_->opt_q);
    }
  }
  step_ = c.meta.at("step").get<long>();
}

// --- Experiment ----------------------------------------------------------------

void to_json(nlohmann::json& j, const RunRecord& r) {
  nlohmann::json curves = nlohmann::json::object();
  for (const auto& e : r.losses) {
    curves[e.name]["step"].push_back(e.step);
    curves[e.name]["value"].push_back(e.value);
  }
  j = {{"fingerprint", r.fingerprint},
       {"config", r.config},
       {"status", r.status},
       {"error", r.error},
       {"steps_completed", r.steps_completed},
       {"resumed_from", r.resumed_from},
       {"loss_curves", curves},
       {"checkpoints", r.checkpoints},
       {"wall_clock_seconds", r.wall_clock_seconds},
       {"final_metrics", r.final_metrics}};
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PersistenceError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw PersistenceError("write failed for '" + path.string() + "'");
}

void write_losses(const fs::path& path, const std::vector<LossEntry>& losses) {
  std::ostringstream s;
  s.precision(17);
  s << "step,name,value\n";
  for (const auto& e : losses) s << e.step << ',' << e.name << ',' << e.value << '\n';
  write_text(path, s.str());
}

std::vector<LossEntry> read_losses(const fs::path& path, long up_to) {
  std::vector<LossEntry> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string step, name, value;
    if (!std::getline(row, step, ',') || !std::getline(row, name, ',') || !std::getline(row, value)) continue;
    LossEntry e{std::stol(step), name, std::stod(value)};
    if (e.step <= up_to) out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

RunRecord run_experiment(const TrainConfig& cfg, const RunOptions& options) {
  cfg.validate();
  return run_experiment(cfg, options, std::make_shared<const FactorDataset>(resolve_dataset(cfg.dataset)));
}

RunRecord run_experiment(const TrainConfig& cfg, const RunOptions& options, std::shared_ptr<const FactorDataset> data) {
  cfg.validate();
  if (options.out_dir.empty()) throw ConfigError("run_experiment needs an output directory");
  const auto start = std::chrono::steady_clock::now();
  const fs::path ckpt_dir = options.out_dir / "checkpoints";
  fs::create_directories(ckpt_dir);

  RunRecord record;
  record.config = cfg;
  record.fingerprint = fingerprint(record.config);
  write_text(options.out_dir / "config.json",
             nlohmann::json{{"train", record.config},
                            {"fingerprint", record.fingerprint},
                            {"seeds",
                             {{"experiment", cfg.seed},
                              {"init/G", derive_seed(cfg.seed, "init/G")},
                              {"init/D", derive_seed(cfg.seed, "init/D")},
                              {"init/Q", derive_seed(cfg.seed, "init/Q")},
                              {"init/VAE", derive_seed(cfg.seed, "init/VAE")}}}}
                 .dump(2));

  TrainingSession session(cfg, std::move(data));
  const fs::path latest = ckpt_dir / "latest.vpck";
  if (options.resume && fs::exists(latest)) {
    session.load(latest);
    record.resumed_from = session.step();
    record.losses = read_losses(options.out_dir / "losses.csv", session.step());
  }

  auto checkpoint = [&]() {
    const fs::path path = ckpt_dir / ("step-" + std::to_string(session.step()) + ".vpck");
    session.save(path);
    fs::copy_file(path, latest, fs::copy_options::overwrite_existing);
    record.checkpoints.push_back(path.string());
  };
  auto finish = [&](const std::string& status) {
    record.status = status;
    record.steps_completed = session.step();
    record.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_losses(options.out_dir / "losses.csv", record.losses);
    write_text(options.out_dir / "run.json", nlohmann::json(record).dump(2));
  };

  try {
    while (session.step() < cfg.steps) {
      const auto losses = session.advance();
      const long step = session.step();
      if (step % cfg.log_every == 0 || step == cfg.steps) {
        for (const auto& [name, value] : losses) record.losses.push_back({step, name, value});
        if (options.verbose) {
          std::cerr << "step " << step;
          for (const auto& [name, value] : losses) std::cerr << ' ' << name << '=' << value;
          std::cerr << '\n';
        }
      }
      if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) checkpoint();
    }
    checkpoint();
    if (options.final_vp_metric) {
      const NetworkGenerator g(session.generator(), session.sampling_prior());
      record.final_metrics["vp"] = vp_metric(g, *options.final_vp_metric);
    }
  } catch (const NumericError& e) {
    record.error = e.what();
    finish("aborted");
    throw;
  }
  finish("completed");
  return record;
}

}  // namespace varpred
