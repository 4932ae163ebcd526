#include "varpred/reference_generators.hpp"

#include <cmath>

#include "varpred/error.hpp"

namespace varpred {

ConstantGenerator::ConstantGenerator(int latent_dims, ImageShape image, float value)
    : dims_(latent_dims), image_(image), value_(value) {
  if (dims_ < 2) throw ArgumentError("latent_dims must be >= 2");
}

Tensor<float> ConstantGenerator::generate(const Tensor<float>& z) const {
  return Tensor<float>({z.dim(0), image_.channels, image_.height, image_.width}, value_);
}

BlockOracleGenerator::BlockOracleGenerator(int latent_dims, ImageShape image) : dims_(latent_dims), image_(image) {
  if (dims_ < 2) throw ArgumentError("latent_dims must be >= 2");
  grid_ = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dims_))));
  if (image_.height / grid_ < 1 || image_.width / grid_ < 1) {
    throw ArgumentError("image too small for " + std::to_string(dims_) + " blocks");
  }
}

int BlockOracleGenerator::block_of(int y, int x) const {
  const int bh = image_.height / grid_, bw = image_.width / grid_;
  const int by = y / bh, bx = x / bw;
  if (by >= grid_ || bx >= grid_) return -1;
  const int j = by * grid_ + bx;
  return j < dims_ ? j : -1;
}

Tensor<float> BlockOracleGenerator::generate(const Tensor<float>& z) const {
  if (z.rank() != 2 || z.dim(1) != dims_) throw ShapeError("block oracle expects [n," + std::to_string(dims_) + "]");
  const int n = z.dim(0), c = image_.channels, h = image_.height, w = image_.width;
  Tensor<float> out({n, c, h, w});
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      float* img = out.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int j = block_of(y, x);
          img[y * w + x] = j < 0 ? 0.0f : z.at(i, j);
        }
      }
    }
  }
  return out;
}

std::vector<double> random_rotation(int n, Seed seed) {
  Rng rng(derive_seed(seed, "rotation"));
  // Columns stored as rows of `cols` during orthogonalization.
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
  for (auto& col : cols) {
    for (auto& v : col) v = rng.normal();
  }
  for (int k = 0; k < n; ++k) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < k; ++j) {
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += cols[k][i] * cols[j][i];
        for (int i = 0; i < n; ++i) cols[k][i] -= dot * cols[j][i];
      }
    }
    double norm = 0.0;
    for (double v : cols[k]) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& v : cols[k]) v /= norm;
  }
  std::vector<double> r(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) r[static_cast<std::size_t>(i) * n + j] = cols[j][i];
  }
  return r;
}

RotatedBlockGenerator::RotatedBlockGenerator(int latent_dims, ImageShape image, Seed seed)
    : oracle_(latent_dims, image), rotation_(random_rotation(latent_dims, seed)) {}

Tensor<float> RotatedBlockGenerator::generate(const Tensor<float>& z) const {
  const int n = z.dim(0), k = oracle_.latent_dims();
  if (z.rank() != 2 || z.dim(1) != k) throw ShapeError("rotated oracle expects [n," + std::to_string(k) + "]");
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  Tensor<float> mixed({n, k});
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < k; ++r) {
      double acc = 0.0;
      for (int c = 0; c < k; ++c) acc += rotation_[static_cast<std::size_t>(r) * k + c] * z.at(i, c);
      mixed.at(i, r) = static_cast<float>(acc * scale);
    }
  }
  return oracle_.generate(mixed);
}

}  // namespace varpred
