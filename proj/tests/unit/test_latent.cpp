#include <doctest.h>

#include <cmath>
#include <numeric>

#include "varpred/error.hpp"
#include "varpred/latent.hpp"

using namespace varpred;

TEST_CASE("sample_prior is deterministic under a fixed seed") {
  const LatentBatch a = sample_prior(4, 6, Prior::uniform, 7);
  const LatentBatch b = sample_prior(4, 6, Prior::uniform, 7);
  CHECK(a.values == b.values);
  CHECK(a.size() == 4);
  CHECK(a.dims() == 6);
  CHECK_FALSE(sample_prior(4, 6, Prior::uniform, 8).values == a.values);
}

TEST_CASE("uniform prior sample mean stays near zero") {
  const int n = 100000;
  const LatentBatch z = sample_prior(n, 2, Prior::uniform, 11);
  // 3 sigma of the mean of Uniform(-1, 1): 3 * sqrt(1/3) / sqrt(n) ~= 0.0055.
  for (int j = 0; j < 2; ++j) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += z.values.at(i, j);
    CHECK(std::fabs(sum / n) < 0.02);
  }
}

TEST_CASE("prior samples stay inside the support") {
  const LatentBatch u = sample_prior(2000, 5, Prior::uniform, 3);
  for (float v : u.values.values()) CHECK(in_support(Prior::uniform, v));
  const LatentBatch g = sample_prior(2000, 5, Prior::normal, 3);
  double sq = 0.0;
  for (float v : g.values.values()) sq += double(v) * v;
  CHECK(sq / g.values.size() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("sampling rejects degenerate sizes") {
  CHECK_THROWS_AS(sample_prior(1, 1, Prior::uniform, 0), ArgumentError);
  CHECK_THROWS_AS(sample_prior(0, 4, Prior::uniform, 0), ArgumentError);
  CHECK_THROWS_AS(sample_dim_indices(3, 1, 0), ArgumentError);
  CHECK_THROWS_AS(sample_paired_codes(3, 4, Prior::uniform, 0, 4), ArgumentError);
}

TEST_CASE("dimension indices are in range and uniform") {
  for (int d : sample_dim_indices(3, 5, 1)) {
    CHECK(d >= 0);
    CHECK(d < 5);
  }
  const std::vector<int> single = sample_dim_indices(1, 2, 1);
  REQUIRE(single.size() == 1);
  CHECK((single[0] == 0 || single[0] == 1));

  const int n = 50000;
  const std::vector<int> d = sample_dim_indices(n, 4, 99);
  std::vector<int> counts(4, 0);
  for (int v : d) ++counts[v];
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  for (int c : counts) CHECK(std::fabs(double(c) / n - 0.25) <= 3 * sigma);
}

TEST_CASE("paired codes differ in exactly the sampled dimension") {
  const PairedLatentBatch p = sample_paired_codes(500, 6, Prior::uniform, 5);
  for (int i = 0; i < p.size(); ++i) {
    int differing = 0;
    for (int j = 0; j < p.dims(); ++j) {
      if (p.z1.at(i, j) != p.z2.at(i, j)) {
        ++differing;
        CHECK(j == p.d[static_cast<std::size_t>(i)]);
      }
      CHECK(in_support(Prior::uniform, p.z2.at(i, j)));
    }
    CHECK(differing == 1);
  }
}

TEST_CASE("paired codes share z1 with sample_prior") {
  const PairedLatentBatch p = sample_paired_codes(32, 6, Prior::normal, 17);
  CHECK(p.z1 == sample_prior(32, 6, Prior::normal, 17).values);
}

TEST_CASE("fixed dimension is honoured") {
  const PairedLatentBatch p = sample_paired_codes(64, 4, Prior::uniform, 2, 2);
  const Tensor<float> hot = onehot_delta(p);
  for (int i = 0; i < 64; ++i) {
    CHECK(p.d[static_cast<std::size_t>(i)] == 2);
    CHECK(hot.at(i, 2) == 1.0f);
  }
}

TEST_CASE("varied dimension passes a chi-square uniformity test") {
  const int n = 10000, k = 6;
  const PairedLatentBatch p = sample_paired_codes(n, k, Prior::uniform, 123);
  std::vector<int> counts(k, 0);
  for (int d : p.d) ++counts[d];
  const double expected = double(n) / k;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 1% point of chi-square with 5 degrees of freedom.
  CHECK(chi2 < 15.086);
}

TEST_CASE("onehot_delta builds the expected matrix") {
  PairedLatentBatch p;
  p.z1 = Tensor<float>({2, 4}, std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f});
  p.z2 = p.z1;
  p.z2.at(0, 0) = -0.9f;
  p.z2.at(1, 3) = -0.9f;
  p.d = {0, 3};
  const Tensor<float> hot = onehot_delta(p);
  CHECK(hot == Tensor<float>({2, 4}, std::vector<float>{1, 0, 0, 0, 0, 0, 0, 1}));

  const PairedLatentBatch sampled = sample_paired_codes(200, 5, Prior::uniform, 4);
  const Tensor<float> h = onehot_delta(sampled);
  for (int i = 0; i < 200; ++i) {
    float row_sum = 0.0f;
    int arg = 0;
    for (int j = 0; j < 5; ++j) {
      row_sum += h.at(i, j);
      if (h.at(i, j) > h.at(i, arg)) arg = j;
    }
    CHECK(row_sum == 1.0f);
    CHECK(arg == sampled.d[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("onehot_delta rejects broken pairs") {
  PairedLatentBatch p;
  p.z1 = Tensor<float>({1, 3}, std::vector<float>{0.1f, 0.2f, 0.3f});
  p.z2 = p.z1;
  p.d = {1};
  CHECK_THROWS_AS(onehot_delta(p), InvariantError);
  p.z2.at(0, 0) = 0.5f;
  p.z2.at(0, 1) = 0.5f;
  CHECK_THROWS_AS(onehot_delta(p), InvariantError);
  p.z2 = p.z1;
  p.z2.at(0, 2) = 0.9f;
  CHECK_THROWS_AS(onehot_delta(p), InvariantError);
}
