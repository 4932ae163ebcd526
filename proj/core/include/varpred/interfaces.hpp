#pragma once

#include "varpred/latent.hpp"
#include "varpred/models.hpp"

namespace varpred {

// Frozen latent -> image map consumed by metrics and traversal rendering.
// Implementations must be safe to call concurrently.
class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  virtual int latent_dims() const = 0;
  virtual ImageShape image_shape() const = 0;
  virtual Prior prior() const = 0;
  // z: [n, K] -> images [n, c, h, w].
  virtual Tensor<float> generate(const Tensor<float>& z) const = 0;
};

// Image -> latent code map used by the FactorVAE metric.
class LatentEncoder {
 public:
  virtual ~LatentEncoder() = default;
  virtual int code_dims() const = 0;
  virtual Tensor<float> encode(const Tensor<float>& images) const = 0;
};

class NetworkGenerator final : public ImageGenerator {
 public:
  NetworkGenerator(const Generator<float>& g, Prior prior) : g_(g), prior_(prior) {}
  int latent_dims() const override { return g_.latent_dims(); }
  ImageShape image_shape() const override { return g_.image_shape(); }
  Prior prior() const override { return prior_; }
  Tensor<float> generate(const Tensor<float>& z) const override { return g_.forward(z); }

 private:
  const Generator<float>& g_;
  Prior prior_;
};

// Posterior means of a VAE encoder.
class VaeMeanEncoder final : public LatentEncoder {
 public:
  explicit VaeMeanEncoder(const EncoderDecoder<float>& vae) : vae_(vae) {}
  int code_dims() const override { return vae_.latent_dims(); }
  Tensor<float> encode(const Tensor<float>& images) const override { return vae_.encode(images).first; }

 private:
  const EncoderDecoder<float>& vae_;
};

// Runs generate() in chunks to bound peak memory.
Tensor<float> generate_batched(const ImageGenerator& g, const Tensor<float>& z, int chunk = 256);
Tensor<float> encode_batched(const LatentEncoder& e, const Tensor<float>& images, int chunk = 256);

}  // namespace varpred
