#pragma once

#include <vector>

#include "varpred/interfaces.hpp"

namespace varpred {

// Ignores its input: every code maps to the same image.
class ConstantGenerator final : public ImageGenerator {
 public:
  ConstantGenerator(int latent_dims, ImageShape image, float value = 0.0f);
  int latent_dims() const override { return dims_; }
  ImageShape image_shape() const override { return image_; }
  Prior prior() const override { return Prior::uniform; }
  Tensor<float> generate(const Tensor<float>& z) const override;

 private:
  int dims_;
  ImageShape image_;
  float value_;
};

// Perfectly disentangled oracle: the image is split into K disjoint pixel
// blocks (a grid of ceil(sqrt(K)) x ceil(sqrt(K)) tiles, row-major) and
// latent dimension j writes its value into every pixel of block j.
// Pixels outside all blocks stay 0.
class BlockOracleGenerator final : public ImageGenerator {
 public:
  BlockOracleGenerator(int latent_dims, ImageShape image);
  int latent_dims() const override { return dims_; }
  ImageShape image_shape() const override { return image_; }
  Prior prior() const override { return Prior::uniform; }
  Tensor<float> generate(const Tensor<float>& z) const override;

  // Block index of pixel (y, x), or -1 when outside every block.
  int block_of(int y, int x) const;

 private:
  int dims_;
  ImageShape image_;
  int grid_;
};

// Entangled oracle: the block oracle applied to R z / sqrt(K), with R a
// dense random rotation. Scaling keeps |R z / sqrt(K)| <= 1 for z in
// [-1, 1]^K, so outputs stay inside [-1, 1].
class RotatedBlockGenerator final : public ImageGenerator {
 public:
  RotatedBlockGenerator(int latent_dims, ImageShape image, Seed seed);
  int latent_dims() const override { return oracle_.latent_dims(); }
  ImageShape image_shape() const override { return oracle_.image_shape(); }
  Prior prior() const override { return Prior::uniform; }
  Tensor<float> generate(const Tensor<float>& z) const override;

  // Row-major K x K orthogonal matrix.
  const std::vector<double>& rotation() const { return rotation_; }

 private:
  BlockOracleGenerator oracle_;
  std::vector<double> rotation_;
};

// Random orthogonal matrix (Gram-Schmidt on Gaussian columns), row-major.
std::vector<double> random_rotation(int n, Seed seed);

}  // namespace varpred
