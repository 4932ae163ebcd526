#include "varpred/latent.hpp"

#include <cmath>

#include "varpred/error.hpp"

namespace varpred {

namespace {

void check_counts(int n, int dims) {
  if (n < 1) throw ArgumentError("latent batch size must be >= 1, got " + std::to_string(n));
  if (dims < 2) throw ArgumentError("latent dimension count must be >= 2, got " + std::to_string(dims));
}

double draw(Rng& rng, Prior prior) {
  return prior == Prior::uniform ? rng.uniform(-1.0, 1.0) : rng.normal();
}

}  // namespace

std::string to_string(Prior prior) { return prior == Prior::uniform ? "uniform" : "normal"; }

Prior parse_prior(const std::string& name) {
  if (name == "uniform") return Prior::uniform;
  if (name == "normal") return Prior::normal;
  throw ConfigError("unknown prior '" + name + "' (expected uniform or normal)");
}

bool in_support(Prior prior, double value) {
  if (prior == Prior::uniform) return value >= -1.0 && value <= 1.0;
  return std::isfinite(value);
}

LatentBatch sample_prior(int n, int dims, Prior prior, Seed seed) {
  check_counts(n, dims);
  Rng rng(derive_seed(seed, "prior"));
  LatentBatch batch{Tensor<float>({n, dims}), prior};
  for (auto& v : batch.values.values()) v = static_cast<float>(draw(rng, prior));
  return batch;
}

std::vector<int> sample_dim_indices(int n, int dims, Seed seed) {
  check_counts(n, dims);
  Rng rng(derive_seed(seed, "dims"));
  std::vector<int> d(static_cast<std::size_t>(n));
  for (auto& v : d) v = static_cast<int>(rng.index(static_cast<std::uint64_t>(dims)));
  return d;
}

PairedLatentBatch sample_paired_codes(int n, int dims, Prior prior, Seed seed, std::optional<int> fixed_d) {
  check_counts(n, dims);
  if (fixed_d && (*fixed_d < 0 || *fixed_d >= dims)) {
    throw ArgumentError("fixed dimension " + std::to_string(*fixed_d) + " outside [0, " + std::to_string(dims) + ")");
  }
  PairedLatentBatch pair;
  pair.prior = prior;
  pair.z1 = sample_prior(n, dims, prior, seed).values;
  pair.z2 = pair.z1;
  pair.d = fixed_d ? std::vector<int>(static_cast<std::size_t>(n), *fixed_d) : sample_dim_indices(n, dims, seed);
  Rng rng(derive_seed(seed, "resample"));
  for (int i = 0; i < n; ++i) {
    const int j = pair.d[static_cast<std::size_t>(i)];
    const float base = pair.z1.at(i, j);
    bool ok = false;
    for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
      const auto candidate = static_cast<float>(draw(rng, prior));
      if (std::fabs(static_cast<double>(candidate) - base) >= kMinGap) {
        pair.z2.at(i, j) = candidate;
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw SamplingError("could not resample dimension " + std::to_string(j) + " with gap >= " +
                          std::to_string(kMinGap) + " after " + std::to_string(kMaxResamples) + " draws");
    }
  }
  return pair;
}

Tensor<float> onehot_delta(const PairedLatentBatch& pair) {
  const int n = pair.size(), dims = pair.dims();
  if (pair.z2.shape() != pair.z1.shape() || pair.d.size() != static_cast<std::size_t>(n)) {
    throw InvariantError("paired batch has mismatched shapes");
  }
  Tensor<float> target({n, dims});
  for (int i = 0; i < n; ++i) {
    int differing = 0, where = -1;
    for (int j = 0; j < dims; ++j) {
      if (pair.z1.at(i, j) != pair.z2.at(i, j)) {
        ++differing;
        where = j;
      }
    }
    if (differing != 1 || where != pair.d[static_cast<std::size_t>(i)]) {
      throw InvariantError("pair row " + std::to_string(i) + " differs in " + std::to_string(differing) +
                           " dimensions; expected exactly dimension " + std::to_string(pair.d[static_cast<std::size_t>(i)]));
    }
    target.at(i, where) = 1.0f;
  }
  return target;
}

}  // namespace varpred
