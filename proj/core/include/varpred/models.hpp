#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "varpred/latent.hpp"
#include "varpred/nn/layers.hpp"

namespace varpred {

enum class InputMode { flat, hierarchical };
enum class RecognizerMode { pair_concat, difference, single };

std::string to_string(InputMode mode);
std::string to_string(RecognizerMode mode);
InputMode parse_input_mode(const std::string& name);
RecognizerMode parse_recognizer_mode(const std::string& name);

struct ImageShape {
  int channels = 1;
  int height = 32;
  int width = 32;

  std::size_t pixels() const { return static_cast<std::size_t>(channels) * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

// Generator architecture: a 4x4 feature map followed by upsample+conv stages
// up to the image size. Stage s outputs width * 2^(stages-1-s) channels.
struct GeneratorConfig {
  int latent_dims = 6;
  InputMode input_mode = InputMode::flat;
  ImageShape image;
  int width = 8;
  // Hierarchical mode: latent block per stage. Empty means an equal split.
  std::vector<int> blocks;
  Seed seed = 0;
};

// Strided-conv body shared by discriminator, recognizer and encoder. Each
// stage halves the resolution until a 4x4 map remains; stage s has
// width * 2^s channels. `hidden` > 0 adds a dense layer before the head.
struct ConvNetConfig {
  int in_channels = 1;
  int image_size = 32;
  int width = 8;
  int hidden = 0;
  int outputs = 1;
  Seed seed = 0;
};

struct DiscriminatorConfig {
  ImageShape image;
  int width = 8;
  Seed seed = 0;
};

struct RecognizerConfig {
  RecognizerMode mode = RecognizerMode::pair_concat;
  int classes = 6;
  ImageShape image;
  int width = 8;
  int hidden = 0;
  Seed seed = 0;
};

struct EncoderDecoderConfig {
  int latent_dims = 6;
  ImageShape image;
  int width = 8;
  Seed seed = 0;
};

void to_json(nlohmann::json& j, const ImageShape& s);
void from_json(const nlohmann::json& j, ImageShape& s);
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);
void to_json(nlohmann::json& j, const RecognizerConfig& c);
void from_json(const nlohmann::json& j, RecognizerConfig& c);
void to_json(nlohmann::json& j, const EncoderDecoderConfig& c);
void from_json(const nlohmann::json& j, EncoderDecoderConfig& c);

// Resolves the hierarchical block partition; throws ConfigError when the
// blocks do not match the stage count or do not sum to the latent size.
std::vector<int> resolve_blocks(const GeneratorConfig& config);
int generator_stages(const ImageShape& image);

// Per-stage style injection: normalized features are scaled by (1 + A z_b)
// and shifted by (B z_b), one scale and shift per channel.
template <class T>
class Modulation {
 public:
  Modulation() = default;
  Modulation(int block, int channels, Rng& rng) : scale_proj(block, channels, rng), shift_proj(block, channels, rng) {}

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& zb) const;
  Tensor<T> forward_train(const Tensor<T>& x, const Tensor<T>& zb);
  // Returns {grad wrt x, grad wrt z block}.
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& gy);
  void collect(nn::ParameterList<T>& out, const std::string& prefix);

  nn::Linear<T> scale_proj;
  nn::Linear<T> shift_proj;

 private:
  Tensor<T> input_;
  Tensor<T> scale_;
};

template <class T>
class Generator {
 public:
  explicit Generator(GeneratorConfig config);

  const GeneratorConfig& config() const { return config_; }
  int latent_dims() const { return config_.latent_dims; }
  const ImageShape& image_shape() const { return config_.image; }

  // z: [n, K] -> images [n, c, h, w] in [-1, 1].
  Tensor<T> forward(const Tensor<T>& z) const;
  Tensor<T> forward_train(const Tensor<T>& z);
  // Backpropagates an image gradient; returns the gradient wrt z.
  Tensor<T> backward(const Tensor<T>& grad_images);
  // Same, starting from a gradient wrt the pre-tanh outputs.
  Tensor<T> backward_logits(const Tensor<T>& grad_logits);
  // Pre-tanh outputs of the last forward_train.
  const Tensor<T>& logits() const { return logits_; }

  nn::ParameterList<T> parameters();
  int trainable_layers() const;

 private:
  template <class Self>
  static Tensor<T> run(Self& self, const Tensor<T>& z, Tensor<T>* logits);
  Tensor<T> block_of(const Tensor<T>& z, int stage) const;

  GeneratorConfig config_;
  std::vector<int> blocks_;
  std::vector<int> offsets_;
  int base_channels_ = 0;
  nn::Linear<T> project_;        // flat
  nn::Parameter<T> constant_;    // hierarchical
  std::vector<nn::Upsample2x<T>> upsample_;
  std::vector<nn::Conv2d<T>> conv_;
  std::vector<nn::InstanceNorm<T>> norm_;
  std::vector<Modulation<T>> modulation_;
  std::vector<nn::LeakyRelu<T>> act_;
  nn::LeakyRelu<T> project_act_;
  nn::Conv2d<T> out_conv_;
  nn::Tanh<T> out_act_;
  Tensor<T> logits_;
  int batch_ = 0;
};

template <class T>
class ConvNet {
 public:
  explicit ConvNet(ConvNetConfig config);

  const ConvNetConfig& config() const { return config_; }
  int feature_size() const;

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  // Penultimate activations (after the hidden layer when present).
  Tensor<T> features(const Tensor<T>& x) const;
  // Sign of every LeakyReLU input, in evaluation order.
  std::vector<bool> activation_pattern(const Tensor<T>& x) const;

  nn::ParameterList<T> parameters();
  int trainable_layers() const;

 private:
  template <class Self>
  static Tensor<T> run(Self& self, const Tensor<T>& x, bool features_only);

  ConvNetConfig config_;
  std::vector<nn::Conv2d<T>> conv_;
  std::vector<nn::LeakyRelu<T>> act_;
  nn::Linear<T> hidden_;
  nn::LeakyRelu<T> hidden_act_;
  nn::Linear<T> head_;
  Shape body_shape_;
};

template <class T>
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig config);
  const DiscriminatorConfig& config() const { return config_; }
  // images [n, c, h, w] -> logits [n].
  Tensor<T> forward(const Tensor<T>& images) const;
  Tensor<T> forward_train(const Tensor<T>& images);
  Tensor<T> backward(const Tensor<T>& grad_logits);
  nn::ParameterList<T> parameters() { return net_.parameters(); }

 private:
  void check(const Tensor<T>& images) const;
  DiscriminatorConfig config_;
  ConvNet<T> net_;
};

template <class T>
class Recognizer {
 public:
  explicit Recognizer(RecognizerConfig config);
  const RecognizerConfig& config() const { return config_; }
  int classes() const { return config_.classes; }
  int input_channels() const;
  // [n, input_channels, h, w] -> unnormalized scores [n, classes].
  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_scores);
  std::vector<bool> activation_pattern(const Tensor<T>& x) const;
  nn::ParameterList<T> parameters() { return net_.parameters(); }

 private:
  void check(const Tensor<T>& x) const;
  RecognizerConfig config_;
  ConvNet<T> net_;
};

// Gaussian encoder q(z|x) and a flat generator used as decoder p(x|z).
template <class T>
class EncoderDecoder {
 public:
  explicit EncoderDecoder(EncoderDecoderConfig config);
  const EncoderDecoderConfig& config() const { return config_; }
  int latent_dims() const { return config_.latent_dims; }

  // images -> {mean [n, K], logvar [n, K]}.
  std::pair<Tensor<T>, Tensor<T>> encode(const Tensor<T>& images) const;
  std::pair<Tensor<T>, Tensor<T>> encode_train(const Tensor<T>& images);
  // Gradients wrt mean and logvar of the last encode_train.
  Tensor<T> backward_encoder(const Tensor<T>& grad_mean, const Tensor<T>& grad_logvar);

  Generator<T>& decoder() { return decoder_; }
  const Generator<T>& decoder() const { return decoder_; }
  ConvNet<T>& encoder() { return encoder_; }

  nn::ParameterList<T> parameters();

 private:
  EncoderDecoderConfig config_;
  ConvNet<T> encoder_;
  Generator<T> decoder_;
};

// z = mean + exp(0.5 logvar) * eps.
template <class T>
Tensor<T> reparameterize(const Tensor<T>& mean, const Tensor<T>& logvar, const Tensor<T>& eps);

ConvNetConfig discriminator_body(const DiscriminatorConfig& c);
ConvNetConfig recognizer_body(const RecognizerConfig& c);
ConvNetConfig encoder_body(const EncoderDecoderConfig& c);
GeneratorConfig decoder_config(const EncoderDecoderConfig& c);

extern template class Modulation<float>;
extern template class Modulation<double>;
extern template class Generator<float>;
extern template class Generator<double>;
extern template class ConvNet<float>;
extern template class ConvNet<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;
extern template class Recognizer<float>;
extern template class Recognizer<double>;
extern template class EncoderDecoder<float>;
extern template class EncoderDecoder<double>;

}  // namespace varpred
