#include "varpred/models.hpp"

#include <cmath>
#include <type_traits>

#include "varpred/error.hpp"

namespace varpred {

std::string to_string(InputMode mode) { return mode == InputMode::flat ? "flat" : "hierarchical"; }

std::string to_string(RecognizerMode mode) {
  switch (mode) {
    case RecognizerMode::pair_concat: return "pair-concat";
    case RecognizerMode::difference: return "difference";
    case RecognizerMode::single: return "single";
  }
  return "?";
}

InputMode parse_input_mode(const std::string& name) {
  if (name == "flat") return InputMode::flat;
  if (name == "hierarchical") return InputMode::hierarchical;
  throw ConfigError("unknown input_mode '" + name + "' (expected flat or hierarchical)");
}

RecognizerMode parse_recognizer_mode(const std::string& name) {
  if (name == "pair-concat") return RecognizerMode::pair_concat;
  if (name == "difference") return RecognizerMode::difference;
  if (name == "single") return RecognizerMode::single;
  throw ConfigError("unknown recognizer mode '" + name + "'");
}

void to_json(nlohmann::json& j, const ImageShape& s) {
  j = {{"channels", s.channels}, {"height", s.height}, {"width", s.width}};
}
void from_json(const nlohmann::json& j, ImageShape& s) {
  s.channels = j.at("channels").get<int>();
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"latent_dims", c.latent_dims}, {"input_mode", to_string(c.input_mode)}, {"image", c.image},
       {"width", c.width}, {"blocks", c.blocks}, {"seed", c.seed}};
}
void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  c.latent_dims = j.at("latent_dims").get<int>();
  c.input_mode = parse_input_mode(j.at("input_mode").get<std::string>());
  c.image = j.at("image").get<ImageShape>();
  c.width = j.at("width").get<int>();
  c.blocks = j.value("blocks", std::vector<int>{});
  c.seed = j.at("seed").get<Seed>();
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"image", c.image}, {"width", c.width}, {"seed", c.seed}};
}
void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  c.image = j.at("image").get<ImageShape>();
  c.width = j.at("width").get<int>();
  c.seed = j.at("seed").get<Seed>();
}

void to_json(nlohmann::json& j, const RecognizerConfig& c) {
  j = {{"mode", to_string(c.mode)}, {"classes", c.classes}, {"image", c.image},
       {"width", c.width}, {"hidden", c.hidden}, {"seed", c.seed}};
}
void from_json(const nlohmann::json& j, RecognizerConfig& c) {
  c.mode = parse_recognizer_mode(j.at("mode").get<std::string>());
  c.classes = j.at("classes").get<int>();
  c.image = j.at("image").get<ImageShape>();
  c.width = j.at("width").get<int>();
  c.hidden = j.value("hidden", 0);
  c.seed = j.at("seed").get<Seed>();
}

void to_json(nlohmann::json& j, const EncoderDecoderConfig& c) {
  j = {{"latent_dims", c.latent_dims}, {"image", c.image}, {"width", c.width}, {"seed", c.seed}};
}
void from_json(const nlohmann::json& j, EncoderDecoderConfig& c) {
  c.latent_dims = j.at("latent_dims").get<int>();
  c.image = j.at("image").get<ImageShape>();
  c.width = j.at("width").get<int>();
  c.seed = j.at("seed").get<Seed>();
}

namespace {

int stages_for(int size) {
  int stages = 0;
  int s = size;
  while (s > 4 && s % 2 == 0) {
    s /= 2;
    ++stages;
  }
  if (s != 4 || stages < 1) {
    throw ConfigError("image size " + std::to_string(size) + " must be 4 * 2^k with k >= 1");
  }
  return stages;
}

void check_image(const ImageShape& image) {
  if (image.channels < 1) throw ConfigError("image channels must be >= 1");
  if (image.height != image.width) throw ConfigError("only square images are supported");
  stages_for(image.height);
}

// Forward through a layer in training (caching) or inference mode.
template <bool Train, class Layer, class... Args>
auto call(Layer& layer, const Args&... args) {
  if constexpr (Train) {
    return layer.forward_train(args...);
  } else {
    return layer.forward(args...);
  }
}

}  // namespace

int generator_stages(const ImageShape& image) {
  check_image(image);
  return stages_for(image.height);
}

std::vector<int> resolve_blocks(const GeneratorConfig& config) {
  const int stages = generator_stages(config.image);
  std::vector<int> blocks = config.blocks;
  if (blocks.empty()) {
    if (config.latent_dims % stages != 0) {
      throw ConfigError("latent_dims " + std::to_string(config.latent_dims) + " cannot be split equally over " +
                        std::to_string(stages) + " stages; give explicit blocks");
    }
    blocks.assign(static_cast<std::size_t>(stages), config.latent_dims / stages);
  }
  if (static_cast<int>(blocks.size()) != stages) {
    throw ConfigError("hierarchical generator needs one latent block per stage (" + std::to_string(stages) +
                      "), got " + std::to_string(blocks.size()));
  }
  int total = 0;
  for (int b : blocks) {
    if (b < 1) throw ConfigError("latent blocks must be non-empty");
    total += b;
  }
  if (total != config.latent_dims) {
    throw ConfigError("latent blocks sum to " + std::to_string(total) + " but latent_dims is " +
                      std::to_string(config.latent_dims));
  }
  return blocks;
}

// --- Modulation ------------------------------------------------------------

template <class T>
Tensor<T> Modulation<T>::forward(const Tensor<T>& x, const Tensor<T>& zb) const {
  const Tensor<T> scale = scale_proj.forward(zb);
  const Tensor<T> shift = shift_proj.forward(zb);
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t p = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y(x.shape());
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const T s = T(1) + scale.at(i, ch), b = shift.at(i, ch);
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * p;
      for (std::size_t k = 0; k < p; ++k) y[off + k] = x[off + k] * s + b;
    }
  }
  return y;
}

template <class T>
Tensor<T> Modulation<T>::forward_train(const Tensor<T>& x, const Tensor<T>& zb) {
  input_ = x;
  scale_ = scale_proj.forward_train(zb);
  shift_proj.forward_train(zb);
  return forward(x, zb);
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> Modulation<T>::backward(const Tensor<T>& gy) {
  const int n = input_.dim(0), c = input_.dim(1);
  const std::size_t p = static_cast<std::size_t>(input_.dim(2)) * input_.dim(3);
  Tensor<T> gx(input_.shape());
  Tensor<T> gscale({n, c}), gshift({n, c});
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const T s = T(1) + scale_.at(i, ch);
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * p;
      T gs = 0, gb = 0;
      for (std::size_t k = 0; k < p; ++k) {
        gx[off + k] = gy[off + k] * s;
        gs += gy[off + k] * input_[off + k];
        gb += gy[off + k];
      }
      gscale.at(i, ch) = gs;
      gshift.at(i, ch) = gb;
    }
  }
  Tensor<T> gz = scale_proj.backward(gscale);
  const Tensor<T> gz2 = shift_proj.backward(gshift);
  for (std::size_t k = 0; k < gz.size(); ++k) gz[k] += gz2[k];
  return {std::move(gx), std::move(gz)};
}

template <class T>
void Modulation<T>::collect(nn::ParameterList<T>& out, const std::string& prefix) {
  scale_proj.collect(out, prefix + ".scale");
  shift_proj.collect(out, prefix + ".shift");
}

// --- Generator -------------------------------------------------------------

template <class T>
Generator<T>::Generator(GeneratorConfig config) : config_(std::move(config)) {
  if (config_.latent_dims < 2) throw ConfigError("generator latent_dims must be >= 2");
  if (config_.width < 1) throw ConfigError("generator width must be >= 1");
  const int stages = generator_stages(config_.image);
  Rng rng(derive_seed(config_.seed, "init/generator"));
  auto width_at = [&](int s) { return config_.width * (1 << (stages - s)); };
  base_channels_ = width_at(0);
  if (config_.input_mode == InputMode::flat) {
    project_ = nn::Linear<T>(config_.latent_dims, base_channels_ * 16, rng);
  } else {
    blocks_ = resolve_blocks(config_);
    int off = 0;
    for (int b : blocks_) {
      offsets_.push_back(off);
      off += b;
    }
    constant_ = nn::Parameter<T>({base_channels_, 4, 4});
    nn::init_uniform(constant_.value, 1, rng);
  }
  for (int s = 0; s < stages; ++s) {
    upsample_.emplace_back();
    conv_.emplace_back(width_at(s), width_at(s + 1), 3, 1, 1, rng);
    norm_.emplace_back(width_at(s + 1), config_.input_mode == InputMode::flat);
    if (config_.input_mode == InputMode::hierarchical) {
      modulation_.emplace_back(blocks_[static_cast<std::size_t>(s)], width_at(s + 1), rng);
    }
    act_.emplace_back(T(0.2));
  }
  out_conv_ = nn::Conv2d<T>(width_at(stages), config_.image.channels, 3, 1, 1, rng);
}

template <class T>
Tensor<T> Generator<T>::block_of(const Tensor<T>& z, int stage) const {
  const int n = z.dim(0), b = blocks_[static_cast<std::size_t>(stage)], off = offsets_[static_cast<std::size_t>(stage)];
  Tensor<T> out({n, b});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < b; ++j) out.at(i, j) = z.at(i, off + j);
  }
  return out;
}

template <class T>
template <class Self>
Tensor<T> Generator<T>::run(Self& self, const Tensor<T>& z, Tensor<T>* logits) {
  constexpr bool train = !std::is_const_v<Self>;
  const auto& cfg = self.config_;
  if (z.rank() != 2 || z.dim(1) != cfg.latent_dims) {
    throw ShapeError("generator expects latent batch [n," + std::to_string(cfg.latent_dims) + "], got " +
                     shape_string(z.shape()));
  }
  const int n = z.dim(0);
  Tensor<T> h;
  if (cfg.input_mode == InputMode::flat) {
    h = call<train>(self.project_, z).reshaped({n, self.base_channels_, 4, 4});
    h = call<train>(self.project_act_, h);
  } else {
    h = Tensor<T>({n, self.base_channels_, 4, 4});
    const std::size_t step = self.constant_.value.size();
    for (int i = 0; i < n; ++i) std::copy_n(self.constant_.value.data(), step, h.data() + i * step);
  }
  for (std::size_t s = 0; s < self.conv_.size(); ++s) {
    h = call<train>(self.upsample_[s], h);
    h = call<train>(self.conv_[s], h);
    h = call<train>(self.norm_[s], h);
    if (cfg.input_mode == InputMode::hierarchical) {
      h = call<train>(self.modulation_[s], h, self.block_of(z, static_cast<int>(s)));
    }
    h = call<train>(self.act_[s], h);
  }
  h = call<train>(self.out_conv_, h);
  if (logits) *logits = h;
  return call<train>(self.out_act_, h);
}

template <class T>
Tensor<T> Generator<T>::forward(const Tensor<T>& z) const {
  return run(*this, z, nullptr);
}

template <class T>
Tensor<T> Generator<T>::forward_train(const Tensor<T>& z) {
  batch_ = z.dim(0);
  return run(*this, z, &logits_);
}

template <class T>
Tensor<T> Generator<T>::backward(const Tensor<T>& grad_images) {
  return backward_logits(out_act_.backward(grad_images));
}

template <class T>
Tensor<T> Generator<T>::backward_logits(const Tensor<T>& grad_logits) {
  const int n = batch_;
  Tensor<T> gz({n, config_.latent_dims});
  Tensor<T> g = out_conv_.backward(grad_logits);
  for (std::size_t s = conv_.size(); s-- > 0;) {
    g = act_[s].backward(g);
    if (config_.input_mode == InputMode::hierarchical) {
      auto [gx, gzb] = modulation_[s].backward(g);
      g = std::move(gx);
      const int b = blocks_[s], off = offsets_[s];
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < b; ++j) gz.at(i, off + j) += gzb.at(i, j);
      }
    }
    g = norm_[s].backward(g);
    g = conv_[s].backward(g);
    g = upsample_[s].backward(g);
  }
  if (config_.input_mode == InputMode::flat) {
    g = project_act_.backward(g);
    gz = project_.backward(g.reshaped({n, base_channels_ * 16}));
  } else {
    const std::size_t step = constant_.value.size();
    for (int i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < step; ++k) constant_.grad[k] += g[i * step + k];
    }
  }
  return gz;
}

template <class T>
nn::ParameterList<T> Generator<T>::parameters() {
  nn::ParameterList<T> out;
  if (config_.input_mode == InputMode::flat) {
    project_.collect(out, "project");
  } else {
    out.push_back({"constant", &constant_});
  }
  for (std::size_t s = 0; s < conv_.size(); ++s) {
    const std::string stage = "stage" + std::to_string(s);
    conv_[s].collect(out, stage + ".conv");
    norm_[s].collect(out, stage + ".norm");
    if (config_.input_mode == InputMode::hierarchical) modulation_[s].collect(out, stage + ".mod");
  }
  out_conv_.collect(out, "out");
  return out;
}

template <class T>
int Generator<T>::trainable_layers() const {
  // Input layer (projection or constant), per stage a conv plus either an
  // affine norm or a modulation, and the output conv.
  return 1 + 2 * static_cast<int>(conv_.size()) + 1;
}

// --- ConvNet ---------------------------------------------------------------

template <class T>
ConvNet<T>::ConvNet(ConvNetConfig config) : config_(config) {
  if (config_.in_channels < 1 || config_.outputs < 1 || config_.width < 1) {
    throw ConfigError("conv net needs positive channels, width and outputs");
  }
  const int stages = stages_for(config_.image_size);
  Rng rng(derive_seed(config_.seed, "init/convnet"));
  int in = config_.in_channels;
  for (int s = 0; s < stages; ++s) {
    const int out = config_.width * (1 << s);
    conv_.emplace_back(in, out, 3, 2, 1, rng);
    act_.emplace_back(T(0.2));
    in = out;
  }
  body_shape_ = {in, 4, 4};
  int features = in * 16;
  if (config_.hidden > 0) {
    hidden_ = nn::Linear<T>(features, config_.hidden, rng);
    features = config_.hidden;
  }
  head_ = nn::Linear<T>(features, config_.outputs, rng);
}

template <class T>
int ConvNet<T>::feature_size() const {
  return config_.hidden > 0 ? config_.hidden : body_shape_[0] * 16;
}

template <class T>
template <class Self>
Tensor<T> ConvNet<T>::run(Self& self, const Tensor<T>& x, bool features_only) {
  constexpr bool train = !std::is_const_v<Self>;
  const auto& cfg = self.config_;
  if (x.rank() != 4 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.image_size || x.dim(3) != cfg.image_size) {
    throw ShapeError("conv net expects [n," + std::to_string(cfg.in_channels) + "," + std::to_string(cfg.image_size) +
                     "," + std::to_string(cfg.image_size) + "], got " + shape_string(x.shape()));
  }
  const int n = x.dim(0);
  Tensor<T> h = x;
  for (std::size_t s = 0; s < self.conv_.size(); ++s) {
    h = call<train>(self.conv_[s], h);
    h = call<train>(self.act_[s], h);
  }
  h = h.reshaped({n, static_cast<int>(h.stride0())});
  if (cfg.hidden > 0) {
    h = call<train>(self.hidden_, h);
    h = call<train>(self.hidden_act_, h);
  }
  if (features_only) return h;
  return call<train>(self.head_, h);
}

template <class T>
std::vector<bool> ConvNet<T>::activation_pattern(const Tensor<T>& x) const {
  std::vector<bool> signs;
  auto record = [&](const Tensor<T>& pre) {
    for (const T v : pre.values()) signs.push_back(v > T(0));
  };
  Tensor<T> h = x;
  for (std::size_t s = 0; s < conv_.size(); ++s) {
    h = conv_[s].forward(h);
    record(h);
    h = act_[s].forward(h);
  }
  if (config_.hidden > 0) {
    h = hidden_.forward(h.reshaped({x.dim(0), static_cast<int>(h.stride0())}));
    record(h);
  }
  return signs;
}

template <class T>
Tensor<T> ConvNet<T>::forward(const Tensor<T>& x) const {
  return run(*this, x, false);
}

template <class T>
Tensor<T> ConvNet<T>::forward_train(const Tensor<T>& x) {
  return run(*this, x, false);
}

template <class T>
Tensor<T> ConvNet<T>::features(const Tensor<T>& x) const {
  return run(*this, x, true);
}

template <class T>
Tensor<T> ConvNet<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = head_.backward(grad_out);
  if (config_.hidden > 0) {
    g = hidden_act_.backward(g);
    g = hidden_.backward(g);
  }
  Shape s{g.dim(0)};
  s.insert(s.end(), body_shape_.begin(), body_shape_.end());
  g = g.reshaped(s);
  for (std::size_t k = conv_.size(); k-- > 0;) {
    g = act_[k].backward(g);
    g = conv_[k].backward(g);
  }
  return g;
}

template <class T>
nn::ParameterList<T> ConvNet<T>::parameters() {
  nn::ParameterList<T> out;
  for (std::size_t s = 0; s < conv_.size(); ++s) conv_[s].collect(out, "conv" + std::to_string(s));
  if (config_.hidden > 0) hidden_.collect(out, "hidden");
  head_.collect(out, "head");
  return out;
}

template <class T>
int ConvNet<T>::trainable_layers() const {
  return static_cast<int>(conv_.size()) + (config_.hidden > 0 ? 1 : 0) + 1;
}

// --- Wrappers --------------------------------------------------------------

ConvNetConfig discriminator_body(const DiscriminatorConfig& c) {
  check_image(c.image);
  return {c.image.channels, c.image.height, c.width, 0, 1, c.seed};
}

ConvNetConfig recognizer_body(const RecognizerConfig& c) {
  check_image(c.image);
  if (c.classes < 1) throw ConfigError("recognizer needs at least one class");
  const int in = c.mode == RecognizerMode::pair_concat ? 2 * c.image.channels : c.image.channels;
  return {in, c.image.height, c.width, c.hidden, c.classes, c.seed};
}

ConvNetConfig encoder_body(const EncoderDecoderConfig& c) {
  check_image(c.image);
  return {c.image.channels, c.image.height, c.width, 0, 2 * c.latent_dims, derive_seed(c.seed, "encoder")};
}

GeneratorConfig decoder_config(const EncoderDecoderConfig& c) {
  GeneratorConfig g;
  g.latent_dims = c.latent_dims;
  g.input_mode = InputMode::flat;
  g.image = c.image;
  g.width = c.width;
  g.seed = derive_seed(c.seed, "decoder");
  return g;
}

template <class T>
Discriminator<T>::Discriminator(DiscriminatorConfig config) : config_(config), net_(discriminator_body(config)) {}

template <class T>
void Discriminator<T>::check(const Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != config_.image.channels) {
    throw ShapeError("discriminator expects [n," + std::to_string(config_.image.channels) + ",h,w], got " +
                     shape_string(images.shape()));
  }
}

template <class T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& images) const {
  check(images);
  return net_.forward(images).reshaped({images.dim(0)});
}

template <class T>
Tensor<T> Discriminator<T>::forward_train(const Tensor<T>& images) {
  check(images);
  return net_.forward_train(images).reshaped({images.dim(0)});
}

template <class T>
Tensor<T> Discriminator<T>::backward(const Tensor<T>& grad_logits) {
  return net_.backward(grad_logits.reshaped({grad_logits.dim(0), 1}));
}

template <class T>
Recognizer<T>::Recognizer(RecognizerConfig config) : config_(config), net_(recognizer_body(config)) {}

template <class T>
int Recognizer<T>::input_channels() const {
  return config_.mode == RecognizerMode::pair_concat ? 2 * config_.image.channels : config_.image.channels;
}

template <class T>
void Recognizer<T>::check(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != input_channels()) {
    throw ShapeError(to_string(config_.mode) + " recognizer expects " + std::to_string(input_channels()) +
                     " input channels, got " + shape_string(x.shape()));
  }
}

template <class T>
Tensor<T> Recognizer<T>::forward(const Tensor<T>& x) const {
  check(x);
  return net_.forward(x);
}

template <class T>
std::vector<bool> Recognizer<T>::activation_pattern(const Tensor<T>& x) const {
  check(x);
  return net_.activation_pattern(x);
}

template <class T>
Tensor<T> Recognizer<T>::forward_train(const Tensor<T>& x) {
  check(x);
  return net_.forward_train(x);
}

template <class T>
Tensor<T> Recognizer<T>::backward(const Tensor<T>& grad_scores) {
  return net_.backward(grad_scores);
}

template <class T>
EncoderDecoder<T>::EncoderDecoder(EncoderDecoderConfig config)
    : config_(config), encoder_(encoder_body(config)), decoder_(decoder_config(config)) {}

namespace {
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_moments(const Tensor<T>& out, int k) {
  const int n = out.dim(0);
  Tensor<T> mean({n, k}), logvar({n, k});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      mean.at(i, j) = out.at(i, j);
      logvar.at(i, j) = out.at(i, k + j);
    }
  }
  return {std::move(mean), std::move(logvar)};
}
}  // namespace

template <class T>
std::pair<Tensor<T>, Tensor<T>> EncoderDecoder<T>::encode(const Tensor<T>& images) const {
  return split_moments(encoder_.forward(images), config_.latent_dims);
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> EncoderDecoder<T>::encode_train(const Tensor<T>& images) {
  return split_moments(encoder_.forward_train(images), config_.latent_dims);
}

template <class T>
Tensor<T> EncoderDecoder<T>::backward_encoder(const Tensor<T>& grad_mean, const Tensor<T>& grad_logvar) {
  const int n = grad_mean.dim(0), k = config_.latent_dims;
  Tensor<T> g({n, 2 * k});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      g.at(i, j) = grad_mean.at(i, j);
      g.at(i, k + j) = grad_logvar.at(i, j);
    }
  }
  return encoder_.backward(g);
}

template <class T>
nn::ParameterList<T> EncoderDecoder<T>::parameters() {
  nn::ParameterList<T> out;
  for (auto& p : encoder_.parameters()) out.push_back({"encoder." + p.name, p.param});
  for (auto& p : decoder_.parameters()) out.push_back({"decoder." + p.name, p.param});
  return out;
}

template <class T>
Tensor<T> reparameterize(const Tensor<T>& mean, const Tensor<T>& logvar, const Tensor<T>& eps) {
  Tensor<T> z(mean.shape());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = mean[i] + std::exp(T(0.5) * logvar[i]) * eps[i];
  return z;
}

template class Modulation<float>;
template class Modulation<double>;
template class Generator<float>;
template class Generator<double>;
template class ConvNet<float>;
template class ConvNet<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template class Recognizer<float>;
template class Recognizer<double>;
template class EncoderDecoder<float>;
template class EncoderDecoder<double>;
template Tensor<float> reparameterize(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> reparameterize(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace varpred
