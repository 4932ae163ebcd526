#pragma once

#include <filesystem>
#include <string>

#include "varpred/container.hpp"
#include "varpred/models.hpp"
#include "varpred/nn/adam.hpp"

namespace varpred {

// Model kinds recorded in checkpoint headers.
inline constexpr const char* kKindGenerator = "generator";
inline constexpr const char* kKindDiscriminator = "discriminator";
inline constexpr const char* kKindRecognizer = "recognizer";
inline constexpr const char* kKindEncoderDecoder = "encoder-decoder";
inline constexpr const char* kKindTrainingState = "training-state";

void save_checkpoint(Generator<float>& g, const std::filesystem::path& path);
void save_checkpoint(Discriminator<float>& d, const std::filesystem::path& path);
void save_checkpoint(Recognizer<float>& q, const std::filesystem::path& path);
void save_checkpoint(EncoderDecoder<float>& vae, const std::filesystem::path& path);

// Loaders accept a single-model checkpoint of the matching kind. The
// generator and encoder loaders also accept a training-state checkpoint
// and extract the generator (or the VAE decoder) from it. A checkpoint of
// another kind raises ModelKindError.
Generator<float> load_generator(const std::filesystem::path& path);
Discriminator<float> load_discriminator(const std::filesystem::path& path);
Recognizer<float> load_recognizer(const std::filesystem::path& path);
EncoderDecoder<float> load_encoder_decoder(const std::filesystem::path& path);

// Kind stored in a checkpoint header ("generator", "training-state", ...).
std::string checkpoint_kind(const std::filesystem::path& path);

// Building blocks for multi-model checkpoints.
void put_parameters(Container& c, const std::string& prefix, const nn::ParameterList<float>& params);
void get_parameters(const Container& c, const std::string& prefix, const nn::ParameterList<float>& params);
void put_optimizer(Container& c, const std::string& prefix, const nn::Adam<float>& opt);
void get_optimizer(const Container& c, const std::string& prefix, nn::Adam<float>& opt);

Generator<float> generator_from(const Container& c, const nlohmann::json& entry, const std::string& prefix);
EncoderDecoder<float> encoder_decoder_from(const Container& c, const nlohmann::json& entry, const std::string& prefix);

}  // namespace varpred
