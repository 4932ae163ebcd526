#include <doctest.h>

#include <cmath>
#include <limits>

#include "varpred/error.hpp"
#include "varpred/random.hpp"
#include "varpred/vp_objective.hpp"

using namespace varpred;

namespace {

Tensor<double> rows_of(int n, const std::vector<double>& row) {
  Tensor<double> t({n, static_cast<int>(row.size())});
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < row.size(); ++j) t.at(i, static_cast<int>(j)) = row[j];
  }
  return t;
}

Tensor<double> random_images(int n, int c, int s, Seed seed) {
  Tensor<double> t({n, c, s, s});
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

}  // namespace

TEST_CASE("perfect recognizer reaches log K") {
  const Tensor<double> scores = rows_of(3, {200.0, 0.0, 0.0, 0.0});
  const std::vector<int> d = {0, 0, 0};
  const VpLossValue v = vp_bound_from_scores(scores, d, 4);
  CHECK(v.log_likelihood_term == doctest::Approx(0.0));
  CHECK(v.total == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("uniform recognizer sits at zero") {
  for (int k : {2, 3, 6, 11}) {
    const Tensor<double> scores = rows_of(5, std::vector<double>(static_cast<std::size_t>(k), 0.7));
    std::vector<int> d(5);
    for (int i = 0; i < 5; ++i) d[static_cast<std::size_t>(i)] = i % k;
    CHECK(std::fabs(vp_bound_from_scores(scores, d, k).total) < 1e-12);
  }
}

TEST_CASE("frozen distribution gives ln 0.7 + ln 4") {
  const Tensor<double> scores = rows_of(4, {std::log(0.7), std::log(0.1), std::log(0.1), std::log(0.1)});
  const std::vector<int> d = {0, 0, 0, 0};
  const VpLossValue v = vp_bound_from_scores(scores, d, 4);
  CHECK(std::fabs(v.total - (std::log(0.7) + std::log(4.0))) < 1e-12);
  CHECK(std::fabs(v.entropy_term - std::log(4.0)) < 1e-12);
}

TEST_CASE("score gradient is (onehot - softmax) / n") {
  Rng rng(3);
  const int n = 5, k = 4;
  Tensor<double> scores({n, k});
  for (auto& v : scores.values()) v = rng.normal();
  const std::vector<int> d = {0, 3, 2, 1, 3};
  Tensor<double> grad;
  vp_bound_from_scores(scores, d, k, &grad);
  for (int i = 0; i < n; ++i) {
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(scores.at(i, j));
    for (int j = 0; j < k; ++j) {
      const double want = ((j == d[static_cast<std::size_t>(i)]) - std::exp(scores.at(i, j)) / z) / n;
      CHECK(grad.at(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("bound evaluation rejects bad labels and scores") {
  const Tensor<double> scores = rows_of(2, {0.0, 1.0, 2.0});
  const std::vector<int> bad = {0, 3};
  CHECK_THROWS_AS(vp_bound_from_scores(scores, bad, 3), ArgumentError);
  Tensor<double> nan_scores = scores;
  nan_scores[1] = std::numeric_limits<double>::quiet_NaN();
  const std::vector<int> ok = {0, 1};
  CHECK_THROWS_AS(vp_bound_from_scores(nan_scores, ok, 3), NumericError);
}

TEST_CASE("VP bound of a random recognizer never exceeds log K") {
  RecognizerConfig rc;
  rc.classes = 6;
  rc.image = {1, 16, 16};
  rc.width = 2;
  Recognizer<double> q(rc);
  const std::vector<int> d = {0, 1, 2, 3, 4, 5, 0, 1};
  for (bool symmetric : {false, true}) {
    const VpLossValue v = vp_loss(q, random_images(8, 1, 16, 1), random_images(8, 1, 16, 2), d, 6, symmetric);
    CHECK(v.total <= std::log(6.0));
    CHECK(v.log_likelihood_term <= 0.0);
  }
}

TEST_CASE("symmetric presentation averages both orders") {
  RecognizerConfig rc;
  rc.classes = 3;
  rc.image = {1, 8, 8};
  rc.width = 2;
  Recognizer<double> q(rc);
  const Tensor<double> a = random_images(4, 1, 8, 4), b = random_images(4, 1, 8, 5);
  const std::vector<int> d = {0, 1, 2, 1};
  const double forward = vp_loss(q, a, b, d, 3).log_likelihood_term;
  const double swapped = vp_loss(q, b, a, d, 3).log_likelihood_term;
  CHECK(vp_loss(q, a, b, d, 3, true).log_likelihood_term == doctest::Approx(0.5 * (forward + swapped)));
}

TEST_CASE("VP loss needs a pair-concat recognizer") {
  RecognizerConfig rc;
  rc.classes = 3;
  rc.image = {1, 8, 8};
  rc.width = 2;
  rc.mode = RecognizerMode::difference;
  Recognizer<double> q(rc);
  const std::vector<int> d = {0};
  CHECK_THROWS_AS(vp_loss(q, random_images(1, 1, 8, 1), random_images(1, 1, 8, 2), d, 3), ArgumentError);
}

TEST_CASE("mutual information oracle: independence") {
  DiscreteJoint j;
  const std::vector<double> px = {0.2, 0.5, 0.3}, py = {0.6, 0.4};
  for (double a : px) {
    j.p.push_back({a * py[0], a * py[1]});
    j.q.push_back(py);
  }
  const MiBound r = mi_oracle(j);
  CHECK(std::fabs(r.mi) < 1e-12);
  CHECK(std::fabs(r.bound) < 1e-12);
}

TEST_CASE("mutual information oracle: 2x2 example") {
  DiscreteJoint j;
  j.p = {{0.4, 0.1}, {0.1, 0.4}};
  j.q = {{0.8, 0.2}, {0.2, 0.8}};
  // Direct summation over the four outcomes with uniform marginals.
  const double want = 2 * 0.4 * std::log(0.4 / 0.25) + 2 * 0.1 * std::log(0.1 / 0.25);
  const MiBound r = mi_oracle(j);
  CHECK(std::fabs(r.mi - want) < 1e-12);
  CHECK(std::fabs(r.bound - want) < 1e-12);
  CHECK(r.mi == doctest::Approx(0.1927).epsilon(1e-3));
}

TEST_CASE("bound is tight at the posterior and below it elsewhere") {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const int nx = 2 + static_cast<int>(rng.index(4)), ny = 2 + static_cast<int>(rng.index(4));
    DiscreteJoint j;
    double total = 0.0;
    j.p.assign(static_cast<std::size_t>(nx), std::vector<double>(static_cast<std::size_t>(ny)));
    for (auto& row : j.p) {
      for (auto& v : row) total += (v = rng.uniform(0.01, 1.0));
    }
    for (auto& row : j.p) {
      for (auto& v : row) v /= total;
    }
    j.q = exact_posterior(j.p);
    const MiBound tight = mi_oracle(j);
    CHECK(std::fabs(tight.bound - tight.mi) < 1e-12);
    for (auto& row : j.q) {
      double s = 0.0;
      for (auto& v : row) s += (v = rng.uniform(0.01, 1.0));
      for (auto& v : row) v /= s;
    }
    const MiBound loose = mi_oracle(j);
    CHECK(loose.bound <= loose.mi + 1e-12);
  }
}

TEST_CASE("mutual information oracle rejects malformed tables") {
  DiscreteJoint j;
  j.p = {{0.5, 0.6}};
  j.q = {{0.5, 0.5}};
  CHECK_THROWS_AS(mi_oracle(j), ArgumentError);
  j.p = {{0.5, 0.5}};
  j.q = {{0.5, 0.5, 0.0}};
  CHECK_THROWS_AS(mi_oracle(j), ArgumentError);
}

TEST_CASE("InfoGAN auxiliary loss is weight times mean squared error") {
  RecognizerConfig rc;
  rc.mode = RecognizerMode::single;
  rc.classes = 2;
  rc.image = {1, 8, 8};
  rc.width = 2;
  Recognizer<double> reg(rc);
  const Tensor<double> x = random_images(3, 1, 8, 9);
  const Tensor<double> pred = reg.forward(x);
  Tensor<double> codes({3, 2});
  Rng rng(10);
  for (auto& v : codes.values()) v = rng.uniform(-1, 1);
  double mse = 0.0;
  for (std::size_t i = 0; i < codes.size(); ++i) mse += (pred[i] - codes[i]) * (pred[i] - codes[i]);
  mse /= static_cast<double>(codes.size());
  CHECK(infogan_aux_loss(reg, x, codes, 0.01) == doctest::Approx(0.01 * mse).epsilon(1e-12));
  CHECK(infogan_aux_loss(reg, x, codes, 0.0) == 0.0);
  CHECK(infogan_aux_loss(reg, x, pred, 1.0) == 0.0);
  CHECK_THROWS_AS(infogan_aux_loss(reg, x, Tensor<double>({3, 3}), 1.0), ArgumentError);
}
