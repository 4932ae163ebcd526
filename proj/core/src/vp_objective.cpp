#include "varpred/vp_objective.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "varpred/error.hpp"

namespace varpred {

namespace {

void check_labels(std::span<const int> d, int n, int classes) {
  if (static_cast<int>(d.size()) != n) {
    throw ArgumentError("label count " + std::to_string(d.size()) + " does not match batch size " + std::to_string(n));
  }
  for (int v : d) {
    if (v < 0 || v >= classes) {
      throw ArgumentError("dimension label " + std::to_string(v) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

template <class T>
void check_pair_inputs(const Recognizer<T>& q, const Tensor<T>& x1, const Tensor<T>& x2, int classes) {
  if (q.config().mode != RecognizerMode::pair_concat) {
    throw ArgumentError("VP loss needs a pair-concat recognizer, got " + to_string(q.config().mode));
  }
  if (q.classes() != classes) {
    throw ArgumentError("recognizer predicts " + std::to_string(q.classes()) + " classes, VP loss expects " +
                        std::to_string(classes));
  }
  if (x1.shape() != x2.shape()) {
    throw ShapeError("image pair batches differ: " + shape_string(x1.shape()) + " vs " + shape_string(x2.shape()));
  }
}

// Pair-concat input; with `symmetric` the swapped presentations follow the
// original rows.
template <class T>
Tensor<T> pair_input(const Tensor<T>& x1, const Tensor<T>& x2, bool symmetric) {
  Tensor<T> forward = concat_channels(x1, x2);
  if (!symmetric) return forward;
  return concat_rows(forward, concat_channels(x2, x1));
}

std::vector<int> repeat_labels(std::span<const int> d, bool symmetric) {
  std::vector<int> out(d.begin(), d.end());
  if (symmetric) out.insert(out.end(), d.begin(), d.end());
  return out;
}

}  // namespace

template <class T>
VpLossValue vp_bound_from_scores(const Tensor<T>& scores, std::span<const int> d, int classes, Tensor<T>* grad_total) {
  if (scores.rank() != 2 || scores.dim(1) != classes) {
    throw ShapeError("scores must be [n," + std::to_string(classes) + "], got " + shape_string(scores.shape()));
  }
  const int n = scores.dim(0);
  check_labels(d, n, classes);
  if (grad_total) *grad_total = Tensor<T>(scores.shape());
  double sum = 0.0;
  std::vector<double> prob(static_cast<std::size_t>(classes));
  for (int i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (int k = 0; k < classes; ++k) {
      const double s = static_cast<double>(scores.at(i, k));
      if (!std::isfinite(s)) throw NumericError("non-finite recognizer score in row " + std::to_string(i));
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (int k = 0; k < classes; ++k) {
      prob[k] = std::exp(static_cast<double>(scores.at(i, k)) - mx);
      z += prob[k];
    }
    const double log_z = mx + std::log(z);
    const int label = d[static_cast<std::size_t>(i)];
    sum += static_cast<double>(scores.at(i, label)) - log_z;
    if (grad_total) {
      for (int k = 0; k < classes; ++k) {
        const double target = k == label ? 1.0 : 0.0;
        grad_total->at(i, k) = static_cast<T>((target - prob[k] / z) / n);
      }
    }
  }
  VpLossValue v;
  v.log_likelihood_term = sum / n;
  v.entropy_term = std::log(static_cast<double>(classes));
  v.total = v.log_likelihood_term + v.entropy_term;
  return v;
}

template <class T>
VpLossValue vp_loss(const Recognizer<T>& q, const Tensor<T>& x1, const Tensor<T>& x2, std::span<const int> d,
                    int classes, bool symmetric) {
  check_pair_inputs(q, x1, x2, classes);
  check_labels(d, x1.dim(0), classes);
  const std::vector<int> labels = repeat_labels(d, symmetric);
  return vp_bound_from_scores(q.forward(pair_input(x1, x2, symmetric)), labels, classes);
}

template <class T>
VpGradient<T> vp_loss_backward(Recognizer<T>& q, const Tensor<T>& x1, const Tensor<T>& x2, std::span<const int> d,
                               int classes, double weight, bool symmetric) {
  check_pair_inputs(q, x1, x2, classes);
  check_labels(d, x1.dim(0), classes);
  const std::vector<int> labels = repeat_labels(d, symmetric);
  const Tensor<T> scores = q.forward_train(pair_input(x1, x2, symmetric));
  Tensor<T> grad;
  VpGradient<T> out;
  out.value = vp_bound_from_scores(scores, labels, classes, &grad);
  // Loss is -total; scale by the caller's weight.
  const T factor = static_cast<T>(-weight);
  for (auto& g : grad.values()) g *= factor;
  const Tensor<T> gin = q.backward(grad);
  const int n = x1.dim(0);
  const int c = x1.dim(1);
  if (!symmetric) {
    std::tie(out.grad_x1, out.grad_x2) = split_channels(gin, c);
    return out;
  }
  auto [ga1, ga2] = split_channels(gin.slice_rows(0, n), c);
  auto [gb2, gb1] = split_channels(gin.slice_rows(n, 2 * n), c);
  for (std::size_t k = 0; k < ga1.size(); ++k) {
    ga1[k] += gb1[k];
    ga2[k] += gb2[k];
  }
  out.grad_x1 = std::move(ga1);
  out.grad_x2 = std::move(ga2);
  return out;
}

std::vector<std::vector<double>> exact_posterior(const std::vector<std::vector<double>>& p) {
  std::vector<std::vector<double>> q = p;
  for (auto& row : q) {
    double px = 0.0;
    for (double v : row) px += v;
    for (auto& v : row) v = px > 0.0 ? v / px : 1.0 / static_cast<double>(row.size());
  }
  return q;
}

MiBound mi_oracle(const DiscreteJoint& joint) {
  const auto& p = joint.p;
  const auto& q = joint.q;
  if (p.empty() || p[0].empty()) throw ArgumentError("joint table is empty");
  const std::size_t nx = p.size(), ny = p[0].size();
  if (q.size() != nx) throw ArgumentError("conditional table has wrong number of rows");
  double total = 0.0;
  std::vector<double> px(nx, 0.0), py(ny, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    if (p[x].size() != ny || q[x].size() != ny) throw ArgumentError("tables are not rectangular");
    double qsum = 0.0;
    for (std::size_t y = 0; y < ny; ++y) {
      if (!(p[x][y] >= 0.0) || !(q[x][y] >= 0.0)) throw ArgumentError("probabilities must be non-negative");
      total += p[x][y];
      px[x] += p[x][y];
      py[y] += p[x][y];
      qsum += q[x][y];
    }
    if (std::fabs(qsum - 1.0) > 1e-9) {
      throw ArgumentError("q(.|x=" + std::to_string(x) + ") sums to " + std::to_string(qsum));
    }
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ArgumentError("joint sums to " + std::to_string(total));

  MiBound r;
  double entropy = 0.0;
  for (double v : py) {
    if (v > 0.0) entropy -= v * std::log(v);
  }
  double expected_log_q = 0.0;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      const double pxy = p[x][y];
      if (pxy <= 0.0) continue;
      r.mi += pxy * std::log(pxy / (px[x] * py[y]));
      expected_log_q += pxy * std::log(q[x][y]);
    }
  }
  r.bound = entropy + expected_log_q;
  return r;
}

template <class T>
double infogan_aux_loss(const Recognizer<T>& regressor, const Tensor<T>& x, const Tensor<T>& codes, double weight) {
  const Tensor<T> pred = regressor.forward(x);
  if (pred.shape() != codes.shape()) {
    throw ArgumentError("regressor output " + shape_string(pred.shape()) + " does not match codes " +
                        shape_string(codes.shape()));
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred[i]) - static_cast<double>(codes[i]);
    sse += e * e;
  }
  return weight * sse / static_cast<double>(pred.size());
}

template <class T>
AuxGradient<T> infogan_aux_backward(Recognizer<T>& regressor, const Tensor<T>& x, const Tensor<T>& codes,
                                    double weight) {
  const Tensor<T> pred = regressor.forward_train(x);
  if (pred.shape() != codes.shape()) {
    throw ArgumentError("regressor output " + shape_string(pred.shape()) + " does not match codes " +
                        shape_string(codes.shape()));
  }
  AuxGradient<T> out;
  Tensor<T> g(pred.shape());
  const double scale = 2.0 * weight / static_cast<double>(pred.size());
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred[i]) - static_cast<double>(codes[i]);
    sse += e * e;
    g[i] = static_cast<T>(scale * e);
  }
  out.loss = weight * sse / static_cast<double>(pred.size());
  out.grad_x = regressor.backward(g);
  return out;
}

#define VARPRED_INSTANTIATE(T)                                                                                   \
  template VpLossValue vp_bound_from_scores(const Tensor<T>&, std::span<const int>, int, Tensor<T>*);           \
  template VpLossValue vp_loss(const Recognizer<T>&, const Tensor<T>&, const Tensor<T>&, std::span<const int>,  \
                               int, bool);                                                                       \
  template VpGradient<T> vp_loss_backward(Recognizer<T>&, const Tensor<T>&, const Tensor<T>&,                   \
                                          std::span<const int>, int, double, bool);                             \
  template double infogan_aux_loss(const Recognizer<T>&, const Tensor<T>&, const Tensor<T>&, double);           \
  template AuxGradient<T> infogan_aux_backward(Recognizer<T>&, const Tensor<T>&, const Tensor<T>&, double);

VARPRED_INSTANTIATE(float)
VARPRED_INSTANTIATE(double)
#undef VARPRED_INSTANTIATE

}  // namespace varpred
