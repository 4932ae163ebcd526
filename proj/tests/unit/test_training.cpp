#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "varpred/checkpoint.hpp"
#include "varpred/error.hpp"
#include "varpred/random.hpp"
#include "varpred/training.hpp"

using namespace varpred;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("VARPRED_TEST_TMP");
  fs::path dir = fs::path(root ? root : fs::temp_directory_path().string() + "/varpred-unit") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::shared_ptr<const FactorDataset> small_data() {
  static const auto data = std::make_shared<const FactorDataset>(resolve_dataset(kDatasetSmall));
  return data;
}

TrainConfig tiny(ModelKind kind) {
  TrainConfig cfg;
  cfg.model = kind;
  cfg.width = 2;
  cfg.batch_size = 8;
  cfg.steps = 4;
  cfg.dataset = kDatasetSmall;
  cfg.seed = 31;
  cfg.log_every = 1;
  return cfg;
}

bool same_values(nn::ParameterList<float> a, nn::ParameterList<float> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].param->value == b[i].param->value)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("binary cross-entropy with logits") {
  const Tensor<float> zero({4}, 0.0f);
  Tensor<float> grad;
  CHECK(bce_with_logits(zero, 1.0f, &grad) == doctest::Approx(std::log(2.0)));
  for (float g : grad.values()) CHECK(g == doctest::Approx(-0.5 / 4));
  const Tensor<float> logits({2}, std::vector<float>{2.0f, -1.0f});
  const double want = 0.5 * (std::log1p(std::exp(2.0)) + std::log1p(std::exp(-1.0)));
  CHECK(bce_with_logits(logits, 0.0f, &grad) == doctest::Approx(want).epsilon(1e-6));
  CHECK(grad[0] == doctest::Approx(0.5 / (1.0 + std::exp(-2.0))).epsilon(1e-6));
}

TEST_CASE("untrained discriminator starts near chance") {
  GanState s = GanState::create(tiny(ModelKind::gan), small_data()->image_shape());
  const Tensor<float> real = small_data()->batch({0, 1, 2, 3, 4, 5, 6, 7});
  const GanLosses l = gan_step(s, real, sample_prior(8, 6, Prior::uniform, 1).values);
  CHECK(l.d_loss == doctest::Approx(2 * std::log(2.0)).epsilon(0.15));
}

TEST_CASE("discriminator loss falls on separable data with a frozen generator") {
  const TrainConfig cfg = tiny(ModelKind::gan);
  GanState s = GanState::create(cfg, small_data()->image_shape());
  auto params = s.d.parameters();
  const Tensor<float> fake = s.g.forward(sample_prior(16, 6, Prior::uniform, 2).values);
  std::vector<double> losses;
  Rng rng(5);
  for (int step = 0; step < 200; ++step) {
    std::vector<int> rows(16);
    for (auto& r : rows) r = static_cast<int>(rng.index(static_cast<std::uint64_t>(small_data()->size())));
    nn::zero_grads(params);
    Tensor<float> g_real, g_fake;
    const double lr = bce_with_logits(s.d.forward_train(small_data()->batch(rows)), 1.0f, &g_real);
    s.d.backward(g_real);
    const double lf = bce_with_logits(s.d.forward_train(fake), 0.0f, &g_fake);
    s.d.backward(g_fake);
    s.opt_d.step(params);
    losses.push_back(lr + lf);
  }
  auto window_mean = [&](int begin) {
    double sum = 0.0;
    for (int i = begin; i < begin + 40; ++i) sum += losses[static_cast<std::size_t>(i)];
    return sum / 40;
  };
  CHECK(window_mean(160) < window_mean(80));
  CHECK(window_mean(80) < window_mean(0));
}

TEST_CASE("VP weight zero leaves the GAN trajectory unchanged") {
  TrainConfig a = tiny(ModelKind::gan);
  TrainConfig b = tiny(ModelKind::vpgan);
  b.alpha = 0.0;
  TrainingSession ga(a, small_data()), gb(b, small_data());
  for (int i = 0; i < 4; ++i) {
    const auto la = ga.advance();
    const auto lb = gb.advance();
    CHECK(la[0].second == lb[0].second);
    CHECK(la[1].second == lb[1].second);
  }
  CHECK(same_values(ga.gan_state()->g.parameters(), gb.gan_state()->g.parameters()));
  CHECK(same_values(ga.gan_state()->d.parameters(), gb.gan_state()->d.parameters()));
}

TEST_CASE("VP bound never exceeds log K during VPGAN training") {
  TrainConfig cfg = tiny(ModelKind::vpgan);
  TrainingSession s(cfg, small_data());
  for (int i = 0; i < 6; ++i) {
    for (const auto& [name, value] : s.advance()) {
      if (name == "vp_bound") CHECK(value <= std::log(6.0));
    }
  }
}

TEST_CASE("KL closed form") {
  CHECK(kl_closed_form(Tensor<float>({2, 3}, 0.0f), Tensor<float>({2, 3}, 0.0f)) == 0.0);
  CHECK(kl_closed_form(Tensor<float>({1, 1}, 1.0f), Tensor<float>({1, 1}, 0.0f)) == doctest::Approx(0.5));
}

TEST_CASE("KL closed form matches a Monte-Carlo estimate") {
  Rng rng(77);
  for (int t = 0; t < 4; ++t) {
    const double mu = rng.uniform(-1.5, 1.5), logvar = rng.uniform(-1.0, 1.0);
    const double sd = std::exp(0.5 * logvar);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = rng.normal();
      const double z = mu + sd * e;
      // log q(z) - log p(z), normalizers cancel except log sd.
      sum += -0.5 * e * e - std::log(sd) + 0.5 * z * z;
    }
    const double closed = kl_closed_form(Tensor<float>({1, 1}, float(mu)), Tensor<float>({1, 1}, float(logvar)));
    CHECK(std::fabs(sum / n - closed) <= 0.02 * closed + 2e-3);
  }
}

TEST_CASE("VAE step with VP weight zero equals the plain VAE step") {
  for (Likelihood lik : {Likelihood::bernoulli, Likelihood::gaussian}) {
    TrainConfig a = tiny(ModelKind::betavae);
    a.likelihood = lik;
    TrainConfig b = a;
    b.model = ModelKind::vae_vp;
    b.alpha = 0.0;
    TrainingSession sa(a, small_data()), sb(b, small_data());
    for (int i = 0; i < 3; ++i) {
      const auto la = sa.advance();
      const auto lb = sb.advance();
      for (int k = 0; k < 3; ++k) CHECK(la[static_cast<std::size_t>(k)].second == lb[static_cast<std::size_t>(k)].second);
    }
    CHECK(same_values(sa.vae_state()->vae.parameters(), sb.vae_state()->vae.parameters()));
  }
}

TEST_CASE("every model kind trains and reports its losses") {
  const std::vector<std::pair<ModelKind, std::vector<std::string>>> expected = {
      {ModelKind::gan, {"d_loss", "g_loss"}},
      {ModelKind::vpgan, {"d_loss", "g_loss", "vp_bound"}},
      {ModelKind::infogan, {"d_loss", "g_loss", "aux_loss"}},
      {ModelKind::betavae, {"recon_nll", "kl", "elbo"}},
      {ModelKind::vae_vp, {"recon_nll", "kl", "elbo", "vp_bound"}}};
  for (const auto& [kind, names] : expected) {
    CAPTURE(to_string(kind));
    TrainingSession s(tiny(kind), small_data());
    const auto losses = s.advance();
    REQUIRE(losses.size() == names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
      CHECK(losses[i].first == names[i]);
      CHECK(std::isfinite(losses[i].second));
    }
    CHECK(parse_model_kind(to_string(kind)) == kind);
  }
}

TEST_CASE("a restored session continues bit for bit") {
  for (ModelKind kind : {ModelKind::vpgan, ModelKind::vae_vp, ModelKind::infogan}) {
    const fs::path dir = scratch_dir("resume-" + to_string(kind));
    const TrainConfig cfg = tiny(kind);
    TrainingSession straight(cfg, small_data());
    for (int i = 0; i < 6; ++i) straight.advance();

    TrainingSession first(cfg, small_data());
    for (int i = 0; i < 3; ++i) first.advance();
    first.save(dir / "mid.vpck");
    TrainingSession resumed(cfg, small_data());
    resumed.load(dir / "mid.vpck");
    CHECK(resumed.step() == 3);
    for (int i = 0; i < 3; ++i) resumed.advance();
    if (kind == ModelKind::vae_vp) {
      CHECK(same_values(straight.vae_state()->vae.parameters(), resumed.vae_state()->vae.parameters()));
    } else {
      CHECK(same_values(straight.gan_state()->g.parameters(), resumed.gan_state()->g.parameters()));
      CHECK(same_values(straight.gan_state()->d.parameters(), resumed.gan_state()->d.parameters()));
    }
  }
}

TEST_CASE("loading a state saved under another config fails") {
  const fs::path dir = scratch_dir("fingerprint");
  TrainingSession s(tiny(ModelKind::vpgan), small_data());
  s.advance();
  s.save(dir / "s.vpck");
  TrainConfig other = tiny(ModelKind::vpgan);
  other.alpha = 0.5;
  TrainingSession t(other, small_data());
  CHECK_THROWS_AS(t.load(dir / "s.vpck"), PersistenceError);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.alpha = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.dataset = "no-such-dataset";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.latent_dims = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  nlohmann::json j = TrainConfig{};
  CHECK(j.get<TrainConfig>().alpha == TrainConfig{}.alpha);
  j["unknown"] = 1;
  CHECK_THROWS_AS(j.get<TrainConfig>(), ConfigError);
  nlohmann::json bad = {{"model", "transformer"}};
  CHECK_THROWS_AS(bad.get<TrainConfig>(), ConfigError);
}

TEST_CASE("run_experiment rejects an unknown dataset before any compute") {
  const fs::path dir = scratch_dir("bad-dataset");
  TrainConfig cfg = tiny(ModelKind::gan);
  cfg.dataset = "missing.vpds";
  RunOptions ro;
  ro.out_dir = dir / "run";
  CHECK_THROWS_AS(run_experiment(cfg, ro), ConfigError);
  CHECK_FALSE(fs::exists(dir / "run" / "checkpoints"));
}

TEST_CASE("run_experiment writes its artifacts and resumes") {
  const fs::path dir = scratch_dir("run");
  TrainConfig cfg = tiny(ModelKind::vpgan);
  cfg.steps = 4;
  cfg.checkpoint_every = 2;
  RunOptions ro;
  ro.out_dir = dir;
  const RunRecord first = run_experiment(cfg, ro, small_data());
  CHECK(first.status == "completed");
  CHECK(first.steps_completed == 4);
  for (const char* f : {"config.json", "losses.csv", "run.json", "checkpoints/latest.vpck", "checkpoints/step-2.vpck",
                        "checkpoints/step-4.vpck"}) {
    CHECK(fs::exists(dir / f));
  }
  std::ifstream csv(dir / "losses.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "step,name,value");

  cfg.steps = 6;
  ro.resume = true;
  const RunRecord second = run_experiment(cfg, ro, small_data());
  CHECK(second.resumed_from == 4);
  CHECK(second.steps_completed == 6);

  RunOptions fresh;
  fresh.out_dir = dir / "straight";
  run_experiment(cfg, fresh, small_data());
  CHECK(same_values(load_generator(dir / "checkpoints/latest.vpck").parameters(),
                    load_generator(dir / "straight/checkpoints/latest.vpck").parameters()));
}

TEST_CASE("plain GAN logs carry no VP term") {
  const fs::path dir = scratch_dir("gan-log");
  RunOptions ro;
  ro.out_dir = dir;
  const RunRecord r = run_experiment(tiny(ModelKind::gan), ro, small_data());
  for (const auto& e : r.losses) CHECK(e.name != "vp_bound");
}

TEST_CASE("a diverging run aborts with a persisted record") {
  const fs::path dir = scratch_dir("diverge");
  TrainConfig cfg = tiny(ModelKind::gan);
  cfg.lr_d = 1e30;
  cfg.lr_g = 1e30;
  cfg.steps = 50;
  RunOptions ro;
  ro.out_dir = dir;
  CHECK_THROWS_AS(run_experiment(cfg, ro, small_data()), NumericError);
  std::ifstream in(dir / "run.json");
  REQUIRE(in.good());
  const nlohmann::json rec = nlohmann::json::parse(in);
  CHECK(rec["status"] == "aborted");
  CHECK_FALSE(rec["error"].get<std::string>().empty());
}
