#pragma once

// Single-file container shared by checkpoints and datasets.
//
// Byte layout (all integers little-endian):
//
//   offset 0   5 bytes   magic: "VPCK1" (checkpoint) or "VPDS1" (dataset)
//   offset 5   8 bytes   u64 header length H
//   offset 13  H bytes   UTF-8 JSON header object
//   offset 13+H          array payloads, back to back, in the order of the
//                        header's "arrays" list; each entry declares
//                        {"name", "dtype" ("f32" | "i32"), "shape"}; the
//                        payload is prod(shape) * 4 bytes of raw values.
//
// The header also carries "format_version" and free-form metadata.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "varpred/tensor.hpp"

namespace varpred {

inline constexpr std::string_view kCheckpointMagic = "VPCK1";
inline constexpr std::string_view kDatasetMagic = "VPDS1";
inline constexpr int kFormatVersion = 1;

enum class DType { f32, i32 };

struct NamedArray {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<float> f32;
  std::vector<std::int32_t> i32;
};

struct Container {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  void add(std::string name, const Tensor<float>& t);
  void add(std::string name, Shape shape, std::vector<std::int32_t> values);
  bool has(std::string_view name) const;
  const NamedArray& get(std::string_view name) const;
  // Throws PersistenceError on a missing array or dtype mismatch.
  Tensor<float> tensor(std::string_view name) const;
};

void write_container(const std::filesystem::path& path, std::string_view magic, const Container& c);

// Validates magic, format version, header JSON and payload length; throws
// PersistenceError with the failing byte offset otherwise.
Container read_container(const std::filesystem::path& path, std::string_view magic);

// Stable short hex digest of a JSON document.
std::string fingerprint(const nlohmann::json& j);

}  // namespace varpred
