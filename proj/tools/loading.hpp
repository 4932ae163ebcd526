#pragma once

#include <filesystem>

#include "varpred/interfaces.hpp"

namespace varpred::cli {

struct LoadedGenerator {
  Generator<float> generator;
  Prior prior = Prior::uniform;
};

// Generator of any checkpoint that has one, with the prior it was trained
// under: the recorded prior of a training state, standard normal for a VAE
// decoder, uniform otherwise.
LoadedGenerator load_image_generator(const std::filesystem::path& path);

}  // namespace varpred::cli
