#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "varpred/interfaces.hpp"

namespace varpred {

enum class FactorRole { shape, scale, orientation, pos_x, pos_y };

std::string to_string(FactorRole role);
FactorRole parse_factor_role(const std::string& name);

struct Factor {
  std::string name;
  int cardinality = 1;
  FactorRole role = FactorRole::shape;
};

// Full factorial grid of generative factors rendered as binary sprites.
// Object radius interpolates between min_radius and max_radius (fractions
// of the image size) over the scale factor; positions span
// [max_radius, 1 - max_radius] of the canvas.
struct FactorSpec {
  std::vector<Factor> factors;
  int image_size = 32;
  double min_radius = 0.1;
  double max_radius = 0.2;
  Seed seed = 0;

  // 3 shapes x 6 scales x 8 orientations x 16 x 16 positions, 32x32.
  static FactorSpec desk_default();
  std::size_t length() const;
  // Throws ConfigError for unrenderable or malformed specs.
  void validate() const;
};

void to_json(nlohmann::json& j, const FactorSpec& s);
void from_json(const nlohmann::json& j, FactorSpec& s);

struct FactorDataset {
  Tensor<float> images;               // [M, c, h, w] in [-1, 1]
  std::vector<std::int32_t> factors;  // [M, F] row-major, empty when absent
  FactorSpec spec;
  bool has_factors = true;

  int size() const { return images.dim(0); }
  int num_factors() const { return static_cast<int>(spec.factors.size()); }
  ImageShape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
  std::int32_t factor(int row, int f) const {
    return factors[static_cast<std::size_t>(row) * spec.factors.size() + static_cast<std::size_t>(f)];
  }
  // Row index of a full coordinate tuple (mixed radix, last factor fastest).
  int index_of(const std::vector<int>& coords) const;
  Tensor<float> batch(const std::vector<int>& rows) const { return gather_rows(images, rows); }
};

// Renders one sprite into `out` (h * w floats) from its factor coordinates.
void render_sprite(const FactorSpec& spec, const std::vector<int>& coords, float* out);

FactorDataset generate_factor_dataset(const FactorSpec& spec);

void save_dataset(const FactorDataset& data, const std::filesystem::path& path);
// Throws PersistenceError for malformed containers; a container without a
// factor table loads with has_factors = false.
FactorDataset load_dataset(const std::filesystem::path& path);

void export_factor_csv(const FactorDataset& data, const std::filesystem::path& path);

struct TraversalGrid {
  Tensor<float> images;  // [rows * cols, c, h, w], row-major tiles
  std::vector<int> dims;
  int rows = 0;
  int cols = 0;
  double lo = -1.0;
  double hi = 1.0;

  // Tile (r, c) as [c, h, w].
  Tensor<float> tile(int r, int c) const;
  // Whole grid as a single [c, H, W] image with `pad` pixel gutters.
  Tensor<float> mosaic(int pad = 1, float pad_value = -1.0f) const;
};

// Row r traverses dims[r] over lo..hi in `steps` columns, other coordinates
// fixed at base_z.
TraversalGrid latent_traversal_grid(const ImageGenerator& g, const std::vector<float>& base_z,
                                    const std::vector<int>& dims, double lo, double hi, int steps);

}  // namespace varpred
