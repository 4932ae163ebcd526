#pragma once

#include <filesystem>

#include "varpred/tensor.hpp"

namespace varpred {

// Writes a [c, h, w] image with values in [-1, 1] as an 8-bit PNG
// (grayscale for c = 1, RGB for c = 3).
void write_png(const std::filesystem::path& path, const Tensor<float>& image);

// Reads an 8-bit grayscale or RGB PNG back into [c, h, w] in [-1, 1].
Tensor<float> read_png(const std::filesystem::path& path);

}  // namespace varpred
