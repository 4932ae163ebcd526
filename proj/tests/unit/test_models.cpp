#include <doctest.h>

#include <cmath>

#include "varpred/error.hpp"
#include "varpred/models.hpp"
#include "varpred/random.hpp"

using namespace varpred;

namespace {

template <class T>
Tensor<T> random_tensor(Shape shape, Seed seed, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <class T>
bool same_parameters(nn::ParameterList<T> a, nn::ParameterList<T> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !(a[i].param->value == b[i].param->value)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("flat generator maps a batch to images in [-1, 1]") {
  GeneratorConfig cfg;
  cfg.latent_dims = 6;
  cfg.width = 4;
  Generator<float> g(cfg);
  const Tensor<float> x = g.forward(random_tensor<float>({8, 6}, 1, -3.0, 3.0));
  CHECK(x.shape() == Shape{8, 1, 32, 32});
  for (float v : x.values()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("hierarchical generator validates its latent blocks") {
  GeneratorConfig cfg;
  cfg.latent_dims = 6;
  cfg.width = 4;
  cfg.input_mode = InputMode::hierarchical;
  cfg.blocks = {2, 2, 2};
  CHECK(generator_stages(cfg.image) == 3);
  Generator<float> g(cfg);
  CHECK(g.forward(random_tensor<float>({3, 6}, 2)).shape() == Shape{3, 1, 32, 32});
  cfg.blocks = {4, 4};
  CHECK_THROWS_AS(Generator<float>{cfg}, ConfigError);
}

TEST_CASE("flat and hierarchical generators expose the same latent size and depth") {
  GeneratorConfig flat;
  flat.latent_dims = 6;
  flat.width = 4;
  GeneratorConfig hier = flat;
  hier.input_mode = InputMode::hierarchical;
  Generator<float> a(flat), b(hier);
  CHECK(a.latent_dims() == b.latent_dims());
  CHECK(a.trainable_layers() == b.trainable_layers());
}

TEST_CASE("initialization is deterministic given the seed") {
  GeneratorConfig gc;
  gc.width = 4;
  gc.seed = 9;
  Generator<float> g1(gc), g2(gc);
  CHECK(same_parameters(g1.parameters(), g2.parameters()));
  gc.seed = 10;
  Generator<float> g3(gc);
  CHECK_FALSE(same_parameters(g1.parameters(), g3.parameters()));

  DiscriminatorConfig dc;
  dc.width = 4;
  dc.seed = 3;
  Discriminator<float> d1(dc), d2(dc);
  CHECK(same_parameters(d1.parameters(), d2.parameters()));
}

TEST_CASE("discriminator returns one finite logit per image") {
  DiscriminatorConfig dc;
  dc.width = 4;
  Discriminator<float> d(dc);
  const Tensor<float> logits = d.forward(random_tensor<float>({8, 1, 32, 32}, 4));
  CHECK(logits.shape() == Shape{8});
  const Tensor<float> zeros = d.forward(Tensor<float>({8, 1, 32, 32}));
  for (float v : zeros.values()) CHECK(std::isfinite(v));
}

TEST_CASE("recognizer input contracts") {
  RecognizerConfig rc;
  rc.classes = 6;
  rc.width = 4;
  rc.mode = RecognizerMode::pair_concat;
  Recognizer<float> pair(rc);
  CHECK(pair.input_channels() == 2);
  CHECK(pair.forward(random_tensor<float>({5, 2, 32, 32}, 5)).shape() == Shape{5, 6});
  CHECK_THROWS_AS(pair.forward(random_tensor<float>({5, 1, 32, 32}, 5)), ShapeError);

  rc.mode = RecognizerMode::difference;
  Recognizer<float> diff(rc);
  CHECK(diff.input_channels() == 1);
  CHECK(diff.forward(random_tensor<float>({5, 1, 32, 32}, 6)).shape() == Shape{5, 6});
  CHECK_THROWS_AS(diff.forward(random_tensor<float>({5, 2, 32, 32}, 6)), ShapeError);
}

TEST_CASE("encoder-decoder shapes and reparameterization") {
  EncoderDecoderConfig ec;
  ec.width = 4;
  ec.latent_dims = 5;
  EncoderDecoder<float> vae(ec);
  const auto [mean, logvar] = vae.encode(random_tensor<float>({3, 1, 32, 32}, 7));
  CHECK(mean.shape() == Shape{3, 5});
  CHECK(logvar.shape() == Shape{3, 5});
  CHECK(vae.decoder().forward(mean).shape() == Shape{3, 1, 32, 32});

  const Tensor<double> mu({1, 2}, std::vector<double>{1.0, -2.0});
  const Tensor<double> lv({1, 2}, std::vector<double>{0.0, std::log(4.0)});
  const Tensor<double> eps({1, 2}, std::vector<double>{0.5, 0.5});
  const Tensor<double> z = reparameterize(mu, lv, eps);
  CHECK(z[0] == doctest::Approx(1.5));
  CHECK(z[1] == doctest::Approx(-1.0));
}

// Central differences of the scalar sum(w * G(z)) against the analytic
// backward pass, in double precision.
TEST_CASE("generator backward matches finite differences") {
  for (InputMode mode : {InputMode::flat, InputMode::hierarchical}) {
    GeneratorConfig cfg;
    cfg.latent_dims = 4;
    cfg.width = 2;
    cfg.image = {1, 8, 8};
    cfg.input_mode = mode;
    cfg.seed = 12;
    Generator<double> g(cfg);
    const Tensor<double> z = random_tensor<double>({2, 4}, 13);
    const Tensor<double> w = random_tensor<double>({2, 1, 8, 8}, 14);
    auto objective = [&](const Tensor<double>& zz) {
      const Tensor<double> x = g.forward(zz);
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
      return s;
    };
    auto params = g.parameters();
    nn::zero_grads(params);
    g.forward_train(z);
    const Tensor<double> gz = g.backward(w);
    const double h = 1e-4;
    double worst = 0.0;
    auto rel = [](double a, double b) { return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6}); };
    for (auto& p : params) {
      for (std::size_t i = 0; i < p.param->value.size(); i += 3) {
        double& v = p.param->value[i];
        const double saved = v;
        v = saved + h;
        const double up = objective(z);
        v = saved - h;
        const double down = objective(z);
        v = saved;
        worst = std::max(worst, rel(p.param->grad[i], (up - down) / (2 * h)));
      }
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
      Tensor<double> zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      worst = std::max(worst, rel(gz[i], (objective(zp) - objective(zm)) / (2 * h)));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("mode and input names round trip") {
  for (auto m : {RecognizerMode::pair_concat, RecognizerMode::difference, RecognizerMode::single}) {
    CHECK(parse_recognizer_mode(to_string(m)) == m);
  }
  for (auto m : {InputMode::flat, InputMode::hierarchical}) CHECK(parse_input_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_input_mode("nope"), ConfigError);
}
