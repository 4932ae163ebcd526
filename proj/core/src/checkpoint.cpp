#include "varpred/checkpoint.hpp"

#include "varpred/error.hpp"

namespace varpred {

void put_parameters(Container& c, const std::string& prefix, const nn::ParameterList<float>& params) {
  for (const auto& p : params) c.add(prefix + p.name, p.param->value);
}

void get_parameters(const Container& c, const std::string& prefix, const nn::ParameterList<float>& params) {
  for (const auto& p : params) {
    Tensor<float> t = c.tensor(prefix + p.name);
    if (t.shape() != p.param->value.shape()) {
      throw PersistenceError("parameter '" + prefix + p.name + "' has shape " + shape_string(t.shape()) +
                             ", model expects " + shape_string(p.param->value.shape()));
    }
    p.param->value = std::move(t);
    p.param->zero_grad();
  }
}

void put_optimizer(Container& c, const std::string& prefix, const nn::Adam<float>& opt) {
  const auto& m = opt.first_moments();
  const auto& v = opt.second_moments();
  for (std::size_t k = 0; k < m.size(); ++k) {
    c.add(prefix + "m/" + std::to_string(k), m[k]);
    c.add(prefix + "v/" + std::to_string(k), v[k]);
  }
  c.add(prefix + "t", {1}, {static_cast<std::int32_t>(opt.steps())});
}

void get_optimizer(const Container& c, const std::string& prefix, nn::Adam<float>& opt) {
  auto& m = opt.first_moments();
  auto& v = opt.second_moments();
  for (std::size_t k = 0; k < m.size(); ++k) {
    Tensor<float> mk = c.tensor(prefix + "m/" + std::to_string(k));
    Tensor<float> vk = c.tensor(prefix + "v/" + std::to_string(k));
    if (mk.shape() != m[k].shape() || vk.shape() != v[k].shape()) {
      throw PersistenceError("optimizer state '" + prefix + "' does not match the model");
    }
    m[k] = std::move(mk);
    v[k] = std::move(vk);
  }
  const NamedArray& t = c.get(prefix + "t");
  if (t.dtype != DType::i32 || t.i32.size() != 1) throw PersistenceError("optimizer step counter malformed");
  opt.set_steps(t.i32[0]);
}

namespace {

template <class Model, class Config>
void save_single(Model& model, const char* kind, const std::filesystem::path& path) {
  Container c;
  nlohmann::json cfg = model.config();
  c.meta = {{"kind", kind}, {"config", cfg}, {"fingerprint", fingerprint(cfg)}};
  put_parameters(c, "param/", model.parameters());
  write_container(path, kCheckpointMagic, c);
}

std::string kind_of(const Container& c) {
  if (!c.meta.contains("kind")) throw PersistenceError("checkpoint header has no model kind");
  return c.meta["kind"].get<std::string>();
}

[[noreturn]] void wrong_kind(const std::string& got, const std::string& want, const std::filesystem::path& path) {
  throw ModelKindError("'" + path.string() + "' holds a " + got + " checkpoint, not a " + want);
}

template <class Model, class Config>
Model load_single(const std::filesystem::path& path, const char* kind) {
  const Container c = read_container(path, kCheckpointMagic);
  const std::string got = kind_of(c);
  if (got != kind) wrong_kind(got, kind, path);
  Model model(c.meta.at("config").get<Config>());
  get_parameters(c, "param/", model.parameters());
  return model;
}

}  // namespace

void save_checkpoint(Generator<float>& g, const std::filesystem::path& path) {
  save_single<Generator<float>, GeneratorConfig>(g, kKindGenerator, path);
}
void save_checkpoint(Discriminator<float>& d, const std::filesystem::path& path) {
  save_single<Discriminator<float>, DiscriminatorConfig>(d, kKindDiscriminator, path);
}
void save_checkpoint(Recognizer<float>& q, const std::filesystem::path& path) {
  save_single<Recognizer<float>, RecognizerConfig>(q, kKindRecognizer, path);
}
void save_checkpoint(EncoderDecoder<float>& vae, const std::filesystem::path& path) {
  save_single<EncoderDecoder<float>, EncoderDecoderConfig>(vae, kKindEncoderDecoder, path);
}

Generator<float> generator_from(const Container& c, const nlohmann::json& entry, const std::string& prefix) {
  Generator<float> g(entry.at("config").get<GeneratorConfig>());
  get_parameters(c, prefix, g.parameters());
  return g;
}

EncoderDecoder<float> encoder_decoder_from(const Container& c, const nlohmann::json& entry, const std::string& prefix) {
  EncoderDecoder<float> vae(entry.at("config").get<EncoderDecoderConfig>());
  get_parameters(c, prefix, vae.parameters());
  return vae;
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  return kind_of(read_container(path, kCheckpointMagic));
}

Generator<float> load_generator(const std::filesystem::path& path) {
  const Container c = read_container(path, kCheckpointMagic);
  const std::string kind = kind_of(c);
  if (kind == kKindGenerator) return generator_from(c, c.meta, "param/");
  if (kind == kKindEncoderDecoder) {
    return std::move(encoder_decoder_from(c, c.meta, "param/").decoder());
  }
  if (kind == kKindTrainingState) {
    const auto& models = c.meta.at("models");
    if (models.contains("G")) return generator_from(c, models["G"], "G/param/");
    if (models.contains("VAE")) return std::move(encoder_decoder_from(c, models["VAE"], "VAE/param/").decoder());
  }
  wrong_kind(kind, kKindGenerator, path);
}

Discriminator<float> load_discriminator(const std::filesystem::path& path) {
  return load_single<Discriminator<float>, DiscriminatorConfig>(path, kKindDiscriminator);
}

Recognizer<float> load_recognizer(const std::filesystem::path& path) {
  return load_single<Recognizer<float>, RecognizerConfig>(path, kKindRecognizer);
}

EncoderDecoder<float> load_encoder_decoder(const std::filesystem::path& path) {
  const Container c = read_container(path, kCheckpointMagic);
  const std::string kind = kind_of(c);
  if (kind == kKindEncoderDecoder) return encoder_decoder_from(c, c.meta, "param/");
  if (kind == kKindTrainingState && c.meta.at("models").contains("VAE")) {
    return encoder_decoder_from(c, c.meta["models"]["VAE"], "VAE/param/");
  }
  if (kind == kKindTrainingState || kind == kKindGenerator) {
    throw CapabilityError("'" + path.string() + "' has no encoder; the FactorVAE metric needs a model with an "
                          "encoder (betavae or vae-vp runs)");
  }
  wrong_kind(kind, kKindEncoderDecoder, path);
}

}  // namespace varpred
