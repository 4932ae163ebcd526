#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "varpred/nn/layers.hpp"

namespace varpred::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moment estimation. Moment buffers are keyed by position in the
// parameter list the optimizer was created for.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterList<T>& params, AdamConfig config) : config_(config) {
    for (const auto& p : params) {
      first_.emplace_back(p.param->value.shape());
      second_.emplace_back(p.param->value.shape());
    }
  }

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }

  void step(const ParameterList<T>& params) {
    if (params.size() != first_.size()) throw ArgumentError("Adam: parameter list changed size");
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    const T step_size = static_cast<T>(config_.lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(config_.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& value = params[k].param->value;
      const auto& grad = params[k].param->grad;
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const T g = grad[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        value[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
    }
  }

  // State access for checkpointing.
  std::vector<Tensor<T>>& first_moments() { return first_; }
  std::vector<Tensor<T>>& second_moments() { return second_; }
  const std::vector<Tensor<T>>& first_moments() const { return first_; }
  const std::vector<Tensor<T>>& second_moments() const { return second_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig config_;
  std::vector<Tensor<T>> first_;
  std::vector<Tensor<T>> second_;
  std::int64_t t_ = 0;
};

}  // namespace varpred::nn
