#include <doctest.h>

#include <cmath>

#include "varpred/error.hpp"
#include "varpred/metrics.hpp"
#include "varpred/random.hpp"
#include "varpred/reference_generators.hpp"

using namespace varpred;

namespace {

// A factor grid whose image pixel j stores the normalized coordinate of
// factor j, so an encoder can read the factors back exactly.
FactorDataset coordinate_dataset() {
  FactorDataset data;
  data.spec.factors = {{"a", 3, FactorRole::shape},
                       {"b", 4, FactorRole::scale},
                       {"c", 2, FactorRole::orientation},
                       {"d", 5, FactorRole::pos_x}};
  data.spec.image_size = 8;
  const int m = 3 * 4 * 2 * 5;
  data.images = Tensor<float>({m, 1, 8, 8});
  const int f = 4;
  for (int row = 0; row < m; ++row) {
    int rest = row;
    std::vector<int> coords(f);
    for (int j = f - 1; j >= 0; --j) {
      const int card = data.spec.factors[static_cast<std::size_t>(j)].cardinality;
      coords[static_cast<std::size_t>(j)] = rest % card;
      rest /= card;
    }
    for (int j = 0; j < f; ++j) {
      data.factors.push_back(coords[static_cast<std::size_t>(j)]);
      data.images[static_cast<std::size_t>(row) * 64 + static_cast<std::size_t>(j)] =
          float(coords[static_cast<std::size_t>(j)]) / 4.0f;
    }
  }
  return data;
}

class CopyEncoder final : public LatentEncoder {
 public:
  int code_dims() const override { return 4; }
  Tensor<float> encode(const Tensor<float>& images) const override {
    Tensor<float> z({images.dim(0), 4});
    for (int i = 0; i < images.dim(0); ++i) {
      for (int j = 0; j < 4; ++j) z.at(i, j) = images[static_cast<std::size_t>(i) * 64 + static_cast<std::size_t>(j)];
    }
    return z;
  }
};

class NoiseEncoder final : public LatentEncoder {
 public:
  int code_dims() const override { return 4; }
  Tensor<float> encode(const Tensor<float>& images) const override {
    Tensor<float> z({images.dim(0), 4});
    for (auto& v : z.values()) v = static_cast<float>(rng_.normal());
    return z;
  }

 private:
  mutable Rng rng_{123};
};

class ConstantEncoder final : public LatentEncoder {
 public:
  int code_dims() const override { return 3; }
  Tensor<float> encode(const Tensor<float>& images) const override { return Tensor<float>({images.dim(0), 3}, 0.5f); }
};

Tensor<double> gaussian_features(int n, const std::vector<double>& mean, const std::vector<double>& sd, Seed seed) {
  Tensor<double> t({n, static_cast<int>(mean.size())});
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < mean.size(); ++j) t.at(i, static_cast<int>(j)) = mean[j] + sd[j] * rng.normal();
  }
  return t;
}

}  // namespace

TEST_CASE("metric config validation") {
  VpMetricConfig cfg;
  CHECK_NOTHROW(cfg.validate(6));
  cfg.train_ratio = 0.0;
  CHECK_THROWS_AS(cfg.validate(6), ConfigError);
  cfg.train_ratio = 1.0;
  CHECK_THROWS_AS(cfg.validate(6), ConfigError);
  cfg = VpMetricConfig{};
  cfg.samples = 100;
  CHECK_THROWS_AS(cfg.validate(6), ConfigError);
  cfg = VpMetricConfig{};
  cfg.trials = 0;
  CHECK_THROWS_AS(cfg.validate(6), ConfigError);
  nlohmann::json j = VpMetricConfig{};
  j["extra"] = true;
  CHECK_THROWS_AS(j.get<VpMetricConfig>(), ConfigError);
}

TEST_CASE("constant generator scores at chance") {
  const ConstantGenerator g(4, {1, 32, 32}, 0.25f);
  VpMetricConfig cfg;
  cfg.samples = 2000;
  cfg.train_ratio = 0.1;
  cfg.seed = 4;
  const MetricReport r = vp_metric(g, cfg);
  CHECK(std::fabs(r.score - 0.25) <= 0.05);
  CHECK(r.accuracies.size() == 3);
  CHECK(r.complete);
}

TEST_CASE("block oracle is predicted almost perfectly") {
  const BlockOracleGenerator g(4, {1, 32, 32});
  VpMetricConfig cfg;
  cfg.samples = 2000;
  cfg.train_ratio = 0.1;
  cfg.seed = 5;
  const MetricReport r = vp_metric(g, cfg);
  CHECK(r.score >= 0.95);
  CHECK(r.score <= 1.0);
}

TEST_CASE("metric is deterministic given its seed") {
  const RotatedBlockGenerator g(4, {1, 16, 16}, 3);
  VpMetricConfig cfg;
  cfg.samples = 600;
  cfg.train_ratio = 0.1;
  cfg.trials = 2;
  cfg.seed = 8;
  const MetricReport a = vp_metric(g, cfg);
  const MetricReport b = vp_metric(g, cfg);
  CHECK(a.accuracies == b.accuracies);
  CHECK(a.seeds == b.seeds);
  CHECK(a.score >= 0.0);
  CHECK(a.score <= 1.0);
  CHECK(a.fingerprint == b.fingerprint);
}

TEST_CASE("block oracle rows differ only inside their block") {
  const BlockOracleGenerator g(4, {1, 16, 16});
  Tensor<float> z({2, 4}, std::vector<float>{0.1f, -0.2f, 0.3f, 0.4f, 0.1f, -0.2f, -0.9f, 0.4f});
  const Tensor<float> x = g.generate(z);
  for (int y = 0; y < 16; ++y) {
    for (int c = 0; c < 16; ++c) {
      const std::size_t i = static_cast<std::size_t>(y) * 16 + c;
      const bool differs = x[i] != x[256 + i];
      CHECK(differs == (g.block_of(y, c) == 2));
    }
  }
}

TEST_CASE("FactorVAE score of an encoder that copies the factors is 1") {
  const FactorDataset data = coordinate_dataset();
  FactorVaeConfig cfg;
  cfg.train_votes = 200;
  cfg.eval_votes = 100;
  cfg.batch_size = 16;
  cfg.std_samples = 120;
  const FactorVaeReport r = factorvae_metric(CopyEncoder(), data, cfg);
  CHECK(r.score == 1.0);
  CHECK(r.active_dims.size() == 4);
  for (int j = 0; j < 4; ++j) CHECK(r.majority[static_cast<std::size_t>(j)] == j);
}

TEST_CASE("FactorVAE score of a noise encoder is near chance") {
  const FactorDataset data = coordinate_dataset();
  FactorVaeConfig cfg;
  cfg.train_votes = 400;
  cfg.eval_votes = 400;
  cfg.batch_size = 16;
  cfg.std_samples = 120;
  const FactorVaeReport r = factorvae_metric(NoiseEncoder(), data, cfg);
  CHECK(r.score > 0.1);
  CHECK(r.score < 0.4);
}

TEST_CASE("FactorVAE metric errors") {
  FactorDataset data = coordinate_dataset();
  FactorVaeConfig cfg;
  cfg.std_samples = 100;
  cfg.train_votes = 10;
  cfg.eval_votes = 10;
  cfg.batch_size = 8;
  CHECK_THROWS_AS(factorvae_metric(ConstantEncoder(), data, cfg), DegenerateEncoderError);
  data.has_factors = false;
  data.factors.clear();
  CHECK_THROWS_AS(factorvae_metric(CopyEncoder(), data, cfg), CapabilityError);
}

TEST_CASE("Frechet distance closed forms") {
  const Tensor<double> a = gaussian_features(200, {0.3, -1.0, 2.0}, {1.0, 0.5, 2.0}, 1);
  CHECK(std::fabs(frechet_distance(a, a)) < 1e-6);

  const double r = std::sqrt(0.5);
  const Tensor<double> x({2, 1}, std::vector<double>{-r, r});
  const Tensor<double> y({2, 1}, std::vector<double>{1 - r, 1 + r});
  CHECK(frechet_distance(x, y) == doctest::Approx(1.0).epsilon(1e-12));

  // Diagonal covariances: sum of squared mean gaps plus squared sd gaps.
  const std::vector<double> m1 = {0.0, 1.0, -0.5, 2.0}, s1 = {1.0, 0.5, 2.0, 1.5};
  const std::vector<double> m2 = {1.0, 0.0, 0.5, 2.5}, s2 = {2.0, 1.0, 1.0, 0.5};
  double want = 0.0;
  for (std::size_t j = 0; j < m1.size(); ++j) want += (m1[j] - m2[j]) * (m1[j] - m2[j]) + (s1[j] - s2[j]) * (s1[j] - s2[j]);
  const double got = frechet_distance(gaussian_features(10000, m1, s1, 2), gaussian_features(10000, m2, s2, 3));
  CHECK(std::fabs(got - want) <= 0.02 * want);

  CHECK_THROWS_AS(frechet_distance(Tensor<double>({1, 2}), Tensor<double>({3, 2})), ArgumentError);
  CHECK_THROWS_AS(frechet_distance(Tensor<double>({3, 2}), Tensor<double>({3, 3})), ShapeError);
}

TEST_CASE("FID proxy needs enough samples") {
  FactorDataset data = coordinate_dataset();
  const ConstantGenerator g(4, {1, 8, 8});
  FeatureExtractorConfig fc;
  fc.steps = 1;
  fc.width = 1;
  fc.hidden = 2;
  CHECK_THROWS_AS(fid_proxy(g, data, FeatureExtractor::train(data, fc), 100, 0), ArgumentError);
}

TEST_CASE("Pearson correlation") {
  const std::vector<double> xs = {1, 2, 3, 4}, ys = {2, 1, 4, 3};
  // Covariance 3 over variances 5 and 5.
  CHECK(pearson_correlation(xs, ys) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(pearson_correlation(xs, xs) == doctest::Approx(1.0));
  const std::vector<double> neg = {-1, -2, -3, -4};
  CHECK(pearson_correlation(xs, neg) == doctest::Approx(-1.0));
  std::vector<double> scaled;
  for (double y : ys) scaled.push_back(3.0 * y + 7.0);
  CHECK(pearson_correlation(xs, scaled) == doctest::Approx(0.6));
  CHECK(pearson_correlation(ys, xs) == doctest::Approx(0.6));
  const std::vector<double> flat = {1, 1, 1, 1};
  CHECK_THROWS_AS(pearson_correlation(xs, flat), ArgumentError);
  const std::vector<double> two = {1, 2};
  CHECK_THROWS_AS(pearson_correlation(two, two), ArgumentError);
}

TEST_CASE("quarter-turn rotation") {
  Tensor<float> img({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const std::vector<int> one = {1}, four = {4};
  // Counterclockwise: the top-right pixel moves to the top-left.
  CHECK(rotate_quarter_turns(img, one) == Tensor<float>({1, 1, 2, 2}, std::vector<float>{2, 4, 1, 3}));
  CHECK(rotate_quarter_turns(img, four) == img);
}

TEST_CASE("argmax picks the lowest index on ties") {
  const std::vector<float> v = {0.1f, 0.7f, 0.7f, 0.2f};
  CHECK(argmax_lowest(v) == 1);
}
