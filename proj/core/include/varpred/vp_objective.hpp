#pragma once

#include <span>
#include <vector>

#include "varpred/models.hpp"

namespace varpred {

// Variational lower bound on I(x1, x2; d), in nats.
//   log_likelihood_term = mean_i log q(d_i | x1_i, x2_i)   (<= 0)
//   entropy_term        = H(d) = log K for uniformly sampled d
//   total               = log_likelihood_term + entropy_term  (<= log K)
struct VpLossValue {
  double log_likelihood_term = 0.0;
  double entropy_term = 0.0;
  double total = 0.0;
};

// Evaluates the bound from unnormalized scores [n, K]. When `grad_total`
// is given it receives d(total)/d(scores). The entropy term is a constant
// and contributes no gradient.
template <class T>
VpLossValue vp_bound_from_scores(const Tensor<T>& scores, std::span<const int> d, int classes,
                                 Tensor<T>* grad_total = nullptr);

// Forward-only bound for a pair-concat recognizer. With `symmetric`, each
// pair is also presented in swapped order (x2 || x1) under the same label
// and the log-likelihood is averaged over both presentations.
template <class T>
VpLossValue vp_loss(const Recognizer<T>& q, const Tensor<T>& x1, const Tensor<T>& x2, std::span<const int> d,
                    int classes, bool symmetric = false);

template <class T>
struct VpGradient {
  VpLossValue value;
  Tensor<T> grad_x1;
  Tensor<T> grad_x2;
};

// Forward and backward pass for the VP loss (-total) scaled by `weight`:
// accumulates d(weight * -total)/d(params) into q's parameter gradients and
// returns the same derivative with respect to x1 and x2, so that callers
// can continue backpropagation into a generator.
template <class T>
VpGradient<T> vp_loss_backward(Recognizer<T>& q, const Tensor<T>& x1, const Tensor<T>& x2, std::span<const int> d,
                               int classes, double weight, bool symmetric = false);

// Finite joint distribution p(x, y) with a variational conditional q(y|x);
// both stored as [|X|][|Y|] tables.
struct DiscreteJoint {
  std::vector<std::vector<double>> p;
  std::vector<std::vector<double>> q;
};

struct MiBound {
  double mi = 0.0;     // exact I(x; y), exhaustive summation
  double bound = 0.0;  // H(y) + E_p log q(y|x)
};

// Exhaustive evaluation of the mutual information and its variational
// lower bound. Throws ArgumentError on malformed tables.
MiBound mi_oracle(const DiscreteJoint& joint);

// The exact posterior p(y|x) of a joint (rows with p(x) = 0 become uniform).
std::vector<std::vector<double>> exact_posterior(const std::vector<std::vector<double>>& p);

// InfoGAN auxiliary loss: weight * mean squared error between the
// regressor's predictions and the true codes [n, m]. Equals the factored
// Gaussian negative log-likelihood up to constants.
template <class T>
double infogan_aux_loss(const Recognizer<T>& regressor, const Tensor<T>& x, const Tensor<T>& codes, double weight);

template <class T>
struct AuxGradient {
  double loss = 0.0;
  Tensor<T> grad_x;
};

// Accumulates d(loss)/d(params) into the regressor and returns d(loss)/dx.
template <class T>
AuxGradient<T> infogan_aux_backward(Recognizer<T>& regressor, const Tensor<T>& x, const Tensor<T>& codes,
                                    double weight);

}  // namespace varpred
