#pragma once

#include <optional>
#include <string>
#include <vector>

#include "varpred/random.hpp"
#include "varpred/tensor.hpp"

namespace varpred {

enum class Prior { uniform, normal };

std::string to_string(Prior prior);
Prior parse_prior(const std::string& name);

// Pair construction constants: the resampled coordinate must move by at
// least kMinGap, and gives up after kMaxResamples attempts per row.
inline constexpr double kMinGap = 0.2;
inline constexpr int kMaxResamples = 100;

// n draws from the prior, values [n, K].
struct LatentBatch {
  Tensor<float> values;
  Prior prior = Prior::uniform;

  int size() const { return values.dim(0); }
  int dims() const { return values.dim(1); }
};

// Rows of z1 and z2 agree everywhere except dimension d[i].
struct PairedLatentBatch {
  Tensor<float> z1;
  Tensor<float> z2;
  std::vector<int> d;
  Prior prior = Prior::uniform;

  int size() const { return z1.dim(0); }
  int dims() const { return z1.dim(1); }
};

LatentBatch sample_prior(int n, int dims, Prior prior, Seed seed);

std::vector<int> sample_dim_indices(int n, int dims, Seed seed);

// z1 is bitwise identical to sample_prior(n, dims, prior, seed).values, so a
// plain GAN drawing z with the same seed sees the same codes as x1 here.
PairedLatentBatch sample_paired_codes(int n, int dims, Prior prior, Seed seed,
                                      std::optional<int> fixed_d = std::nullopt);

// [n, K] one-hot matrix of the varied dimension. Verifies the pair
// invariant and throws InvariantError when a row differs in zero or
// several dimensions, or in a dimension other than d[i].
Tensor<float> onehot_delta(const PairedLatentBatch& pair);

// True when value lies inside the prior support.
bool in_support(Prior prior, double value);

}  // namespace varpred
