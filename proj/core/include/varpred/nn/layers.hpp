#pragma once

// Minimal layer library with explicit forward/backward passes.
//
// Every layer offers a pure `forward` (const, safe to call concurrently on a
// frozen network) and a `forward_train` that additionally caches what the
// following `backward` call needs. `backward` accumulates parameter gradients
// and returns the gradient with respect to the layer input.

#include <Eigen/Core>
#include <algorithm>
#include <numeric>
#include <cmath>
#include <string>
#include <vector>

#include "varpred/random.hpp"
#include "varpred/tensor.hpp"

namespace varpred::nn {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <class T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  explicit Parameter(Shape shape) : value(shape), grad(shape) {}
  void zero_grad() { grad.fill(T(0)); }
};

template <class T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

template <class T>
using ParameterList = std::vector<NamedParameter<T>>;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
template <class T>
void init_uniform(Tensor<T>& t, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng) : in_(in), out_(out), weight({out, in}), bias({out}) {
    init_uniform(weight.value, in, rng);
    init_uniform(bias.value, in, rng);
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  // x: [n, ...] with in_features trailing elements per row; returns [n, out].
  Tensor<T> forward(const Tensor<T>& x) const {
    const int n = x.dim(0);
    if (x.stride0() != static_cast<std::size_t>(in_)) {
      throw ShapeError("Linear expects " + std::to_string(in_) + " features per row, got " +
                       shape_string(x.shape()));
    }
    Tensor<T> y({n, out_});
    ConstMatrixMap<T> xm(x.data(), n, in_);
    ConstMatrixMap<T> wm(weight.value.data(), out_, in_);
    MatrixMap<T> ym(y.data(), n, out_);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i) {
      for (int o = 0; o < out_; ++o) ym(i, o) += bias.value[o];
    }
    return y;
  }

  Tensor<T> forward_train(const Tensor<T>& x) {
    input_ = x;
    return forward(x);
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = input_.dim(0);
    ConstMatrixMap<T> gm(gy.data(), n, out_);
    ConstMatrixMap<T> xm(input_.data(), n, in_);
    MatrixMap<T> dw(weight.grad.data(), out_, in_);
    dw.noalias() += gm.transpose() * xm;
    for (int i = 0; i < n; ++i) {
      for (int o = 0; o < out_; ++o) bias.grad[o] += gm(i, o);
    }
    Tensor<T> gx(input_.shape());
    ConstMatrixMap<T> wm(weight.value.data(), out_, in_);
    MatrixMap<T> gxm(gx.data(), n, in_);
    gxm.noalias() = gm * wm;
    return gx;
  }

  void collect(ParameterList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight});
    out.push_back({prefix + ".bias", &bias});
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  int in_ = 0;
  int out_ = 0;
  Tensor<T> input_;
};

// 2-D convolution via im2col and a single GEMM over the whole batch.
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, int pad, Rng& rng)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad),
        weight({out, in * kernel * kernel}), bias({out}) {
    init_uniform(weight.value, in * kernel * kernel, rng);
    init_uniform(bias.value, in * kernel * kernel, rng);
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int out_size(int size) const { return (size + 2 * pad_ - k_) / stride_ + 1; }

  // Images are processed one at a time so the column buffer stays small.
  Tensor<T> forward(const Tensor<T>& x) const {
    check_input(x);
    const int n = x.dim(0), ho = out_size(x.dim(2)), wo = out_size(x.dim(3));
    const int p = ho * wo;
    const std::size_t in_stride = x.stride0();
    RowMatrix<T>& cols = scratch();
    cols.resize(in_ * k_ * k_, p);
    ConstMatrixMap<T> wm(weight.value.data(), out_, in_ * k_ * k_);
    Tensor<T> y({n, out_, ho, wo});
    for (int i = 0; i < n; ++i) {
      im2col(x.data() + i * in_stride, x.dim(2), x.dim(3), ho, wo, cols.data());
      MatrixMap<T> yi(y.data() + static_cast<std::size_t>(i) * out_ * p, out_, p);
      yi.noalias() = wm * cols;
      for (int o = 0; o < out_; ++o) yi.row(o).array() += bias.value[o];
    }
    return y;
  }

  Tensor<T> forward_train(const Tensor<T>& x) {
    input_ = x;
    return forward(x);
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = input_.dim(0), h = input_.dim(2), w = input_.dim(3), ho = gy.dim(2), wo = gy.dim(3);
    const int p = ho * wo;
    const std::size_t in_stride = input_.stride0();
    RowMatrix<T>& cols = scratch();
    cols.resize(in_ * k_ * k_, p);
    RowMatrix<T> dcols(in_ * k_ * k_, p);
    MatrixMap<T> dw(weight.grad.data(), out_, in_ * k_ * k_);
    ConstMatrixMap<T> wm(weight.value.data(), out_, in_ * k_ * k_);
    Tensor<T> gx(input_.shape());
    for (int i = 0; i < n; ++i) {
      ConstMatrixMap<T> gi(gy.data() + static_cast<std::size_t>(i) * out_ * p, out_, p);
      im2col(input_.data() + i * in_stride, h, w, ho, wo, cols.data());
      dw.noalias() += gi * cols.transpose();
      const T* g = gy.data() + static_cast<std::size_t>(i) * out_ * p;
      for (int o = 0; o < out_; ++o) bias.grad[o] += std::accumulate(g + o * p, g + (o + 1) * p, T(0));
      dcols.noalias() = wm.transpose() * gi;
      col2im(dcols.data(), h, w, ho, wo, gx.data() + i * in_stride);
    }
    return gx;
  }

  void collect(ParameterList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight});
    out.push_back({prefix + ".bias", &bias});
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != in_) {
      throw ShapeError("Conv2d expects [n," + std::to_string(in_) + ",h,w], got " + shape_string(x.shape()));
    }
  }

  static RowMatrix<T>& scratch() {
    thread_local RowMatrix<T> buffer;
    return buffer;
  }

  // One image [in, h, w] -> columns [in * k * k, ho * wo].
  void im2col(const T* img, int h, int w, int ho, int wo, T* cols) const {
    const int p = ho * wo;
    for (int c = 0; c < in_; ++c) {
      const T* plane = img + static_cast<std::size_t>(c) * h * w;
      for (int ki = 0; ki < k_; ++ki) {
        for (int kj = 0; kj < k_; ++kj) {
          T* dst = cols + static_cast<std::size_t>((c * k_ + ki) * k_ + kj) * p;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ki;
            T* row = dst + oy * wo;
            if (iy < 0 || iy >= h) {
              std::fill_n(row, wo, T(0));
              continue;
            }
            const T* src = plane + iy * w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kj;
              row[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }

  // Adjoint of im2col for one image, accumulating into `img`.
  void col2im(const T* cols, int h, int w, int ho, int wo, T* img) const {
    const int p = ho * wo;
    for (int c = 0; c < in_; ++c) {
      T* plane = img + static_cast<std::size_t>(c) * h * w;
      for (int ki = 0; ki < k_; ++ki) {
        for (int kj = 0; kj < k_; ++kj) {
          const T* src = cols + static_cast<std::size_t>((c * k_ + ki) * k_ + kj) * p;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ki;
            if (iy < 0 || iy >= h) continue;
            T* row = plane + iy * w;
            const T* s = src + oy * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kj;
              if (ix >= 0 && ix < w) row[ix] += s[ox];
            }
          }
        }
      }
    }
  }

  int in_ = 0, out_ = 0, k_ = 3, stride_ = 1, pad_ = 1;
  Tensor<T> input_;
};

// Nearest-neighbour 2x upsampling.
template <class T>
class Upsample2x {
 public:
  Tensor<T> forward(const Tensor<T>& x) const {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y({n, c, 2 * h, 2 * w});
    for (int nc = 0; nc < n * c; ++nc) {
      const T* src = x.data() + static_cast<std::size_t>(nc) * h * w;
      T* dst = y.data() + static_cast<std::size_t>(nc) * 4 * h * w;
      for (int yy = 0; yy < 2 * h; ++yy) {
        for (int xx = 0; xx < 2 * w; ++xx) dst[yy * 2 * w + xx] = src[(yy / 2) * w + xx / 2];
      }
    }
    return y;
  }
  Tensor<T> forward_train(const Tensor<T>& x) { return forward(x); }
  Tensor<T> backward(const Tensor<T>& gy) const {
    const int n = gy.dim(0), c = gy.dim(1), h = gy.dim(2) / 2, w = gy.dim(3) / 2;
    Tensor<T> gx({n, c, h, w});
    for (int nc = 0; nc < n * c; ++nc) {
      const T* src = gy.data() + static_cast<std::size_t>(nc) * 4 * h * w;
      T* dst = gx.data() + static_cast<std::size_t>(nc) * h * w;
      for (int yy = 0; yy < 2 * h; ++yy) {
        for (int xx = 0; xx < 2 * w; ++xx) dst[(yy / 2) * w + xx / 2] += src[yy * 2 * w + xx];
      }
    }
    return gx;
  }
};

template <class T>
class LeakyRelu {
 public:
  explicit LeakyRelu(T slope = T(0.2)) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> y = x;
    for (auto& v : y.values()) v = v > T(0) ? v : slope_ * v;
    return y;
  }
  Tensor<T> forward_train(const Tensor<T>& x) {
    input_ = x;
    return forward(x);
  }
  Tensor<T> backward(const Tensor<T>& gy) const {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (!(input_[i] > T(0))) gx[i] *= slope_;
    }
    return gx;
  }

 private:
  T slope_;
  Tensor<T> input_;
};

template <class T>
class Tanh {
 public:
  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> y = x;
    for (auto& v : y.values()) v = std::tanh(v);
    return y;
  }
  Tensor<T> forward_train(const Tensor<T>& x) {
    output_ = forward(x);
    return output_;
  }
  Tensor<T> backward(const Tensor<T>& gy) const {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= T(1) - output_[i] * output_[i];
    return gx;
  }

 private:
  Tensor<T> output_;
};

// Per-sample, per-channel normalization over the spatial axes; no batch
// statistics are involved, so outputs for one sample never depend on the
// rest of the batch. Optional learned per-channel scale and shift.
template <class T>
class InstanceNorm {
 public:
  InstanceNorm() = default;
  InstanceNorm(int channels, bool affine) : channels_(channels), affine_(affine) {
    if (affine_) {
      scale = Parameter<T>({channels});
      shift = Parameter<T>({channels});
      scale.value.fill(T(1));
    }
  }

  bool affine() const { return affine_; }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> y(x.shape());
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t p = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const T* src = x.data() + (static_cast<std::size_t>(i) * c + ch) * p;
        T* dst = y.data() + (static_cast<std::size_t>(i) * c + ch) * p;
        const auto [mean, inv_std] = moments(src, p);
        const T g = affine_ ? scale.value[ch] : T(1);
        const T b = affine_ ? shift.value[ch] : T(0);
        for (std::size_t j = 0; j < p; ++j) dst[j] = (src[j] - mean) * inv_std * g + b;
      }
    }
    return y;
  }

  Tensor<T> forward_train(const Tensor<T>& x) {
    input_ = x;
    return forward(x);
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const Tensor<T>& x = input_;
    Tensor<T> gx(x.shape());
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t p = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    std::vector<T> xhat(p);
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * p;
        const T* src = x.data() + off;
        const T* g = gy.data() + off;
        const auto [mean, inv_std] = moments(src, p);
        const T gamma = affine_ ? scale.value[ch] : T(1);
        T sum_g = 0, sum_gx = 0;
        for (std::size_t j = 0; j < p; ++j) {
          xhat[j] = (src[j] - mean) * inv_std;
          sum_g += g[j];
          sum_gx += g[j] * xhat[j];
        }
        if (affine_) {
          scale.grad[ch] += sum_gx;
          shift.grad[ch] += sum_g;
        }
        const T mg = sum_g / static_cast<T>(p), mgx = sum_gx / static_cast<T>(p);
        T* dst = gx.data() + off;
        for (std::size_t j = 0; j < p; ++j) dst[j] = gamma * inv_std * (g[j] - mg - xhat[j] * mgx);
      }
    }
    return gx;
  }

  void collect(ParameterList<T>& out, const std::string& prefix) {
    if (!affine_) return;
    out.push_back({prefix + ".scale", &scale});
    out.push_back({prefix + ".shift", &shift});
  }

  Parameter<T> scale;
  Parameter<T> shift;
  static constexpr double kEps = 1e-5;

 private:
  static std::pair<T, T> moments(const T* src, std::size_t p) {
    T mean = 0;
    for (std::size_t j = 0; j < p; ++j) mean += src[j];
    mean /= static_cast<T>(p);
    T var = 0;
    for (std::size_t j = 0; j < p; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= static_cast<T>(p);
    return {mean, T(1) / std::sqrt(var + static_cast<T>(kEps))};
  }

  int channels_ = 0;
  bool affine_ = false;
  Tensor<T> input_;
};

template <class T>
void zero_grads(const ParameterList<T>& params) {
  for (const auto& p : params) p.param->zero_grad();
}

template <class T>
std::size_t count_parameters(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.param->value.size();
  return n;
}

}  // namespace varpred::nn
