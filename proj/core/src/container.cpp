#include "varpred/container.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "varpred/error.hpp"
#include "varpred/random.hpp"

namespace varpred {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

std::string dtype_name(DType t) { return t == DType::f32 ? "f32" : "i32"; }

DType parse_dtype(const std::string& s, std::size_t offset) {
  if (s == "f32") return DType::f32;
  if (s == "i32") return DType::i32;
  throw PersistenceError("unsupported dtype '" + s + "' in header at byte offset " + std::to_string(offset));
}

}  // namespace

void Container::add(std::string name, const Tensor<float>& t) {
  NamedArray a;
  a.name = std::move(name);
  a.dtype = DType::f32;
  a.shape = t.shape();
  a.f32 = t.storage();
  arrays.push_back(std::move(a));
}

void Container::add(std::string name, Shape shape, std::vector<std::int32_t> values) {
  if (shape_size(shape) != values.size()) throw ShapeError("container array '" + name + "' has wrong length");
  NamedArray a;
  a.name = std::move(name);
  a.dtype = DType::i32;
  a.shape = std::move(shape);
  a.i32 = std::move(values);
  arrays.push_back(std::move(a));
}

bool Container::has(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

const NamedArray& Container::get(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw PersistenceError("container has no array named '" + std::string(name) + "'");
}

Tensor<float> Container::tensor(std::string_view name) const {
  const NamedArray& a = get(name);
  if (a.dtype != DType::f32) throw PersistenceError("array '" + a.name + "' is not f32");
  return Tensor<float>(a.shape, a.f32);
}

void write_container(const std::filesystem::path& path, std::string_view magic, const Container& c) {
  nlohmann::json header = c.meta;
  header["format_version"] = kFormatVersion;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& a : c.arrays) {
    list.push_back({{"name", a.name}, {"dtype", dtype_name(a.dtype)}, {"shape", a.shape}});
  }
  header["arrays"] = list;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot open '" + path.string() + "' for writing");
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : c.arrays) {
    if (a.dtype == DType::f32) {
      out.write(reinterpret_cast<const char*>(a.f32.data()), static_cast<std::streamsize>(a.f32.size() * 4));
    } else {
      out.write(reinterpret_cast<const char*>(a.i32.data()), static_cast<std::streamsize>(a.i32.size() * 4));
    }
  }
  if (!out) throw PersistenceError("write to '" + path.string() + "' failed");
}

Container read_container(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);

  std::string got(magic.size(), '\0');
  if (file_size < magic.size() + 8) {
    throw PersistenceError("'" + path.string() + "' truncated at byte offset " + std::to_string(file_size) +
                           ": preamble needs " + std::to_string(magic.size() + 8) + " bytes");
  }
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (got != magic) {
    throw PersistenceError("'" + path.string() + "' has magic '" + got + "' at byte offset 0, expected '" +
                           std::string(magic) + "'");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::size_t offset = magic.size() + 8;
  if (len > file_size - offset) {
    throw PersistenceError("'" + path.string() + "' truncated at byte offset " + std::to_string(file_size) +
                           ": header declares " + std::to_string(len) + " bytes starting at offset " +
                           std::to_string(offset));
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw PersistenceError("corrupt JSON header at byte offset " + std::to_string(offset) + ": " + e.what());
  }
  if (!header.is_object() || !header.contains("arrays") || !header.contains("format_version")) {
    throw PersistenceError("header at byte offset " + std::to_string(offset) + " lacks arrays/format_version");
  }
  const int version = header["format_version"].get<int>();
  if (version != kFormatVersion) {
    throw PersistenceError("unsupported format version " + std::to_string(version) + " (supported: " +
                           std::to_string(kFormatVersion) + ")");
  }
  offset += len;

  Container c;
  for (const auto& entry : header["arrays"]) {
    NamedArray a;
    try {
      a.name = entry.at("name").get<std::string>();
      a.dtype = parse_dtype(entry.at("dtype").get<std::string>(), offset);
      a.shape = entry.at("shape").get<Shape>();
    } catch (const nlohmann::json::exception& e) {
      throw PersistenceError(std::string("malformed array entry in header: ") + e.what());
    }
    const std::size_t count = shape_size(a.shape);
    const std::size_t bytes = count * 4;
    if (bytes > file_size - offset) {
      throw PersistenceError("'" + path.string() + "' truncated at byte offset " + std::to_string(file_size) +
                             ": array '" + a.name + "' needs " + std::to_string(bytes) + " bytes from offset " +
                             std::to_string(offset));
    }
    if (a.dtype == DType::f32) {
      a.f32.resize(count);
      in.read(reinterpret_cast<char*>(a.f32.data()), static_cast<std::streamsize>(bytes));
    } else {
      a.i32.resize(count);
      in.read(reinterpret_cast<char*>(a.i32.data()), static_cast<std::streamsize>(bytes));
    }
    if (!in) throw PersistenceError("read failed at byte offset " + std::to_string(offset));
    offset += bytes;
    c.arrays.push_back(std::move(a));
  }
  if (offset != file_size) {
    throw PersistenceError("'" + path.string() + "' has " + std::to_string(file_size - offset) +
                           " trailing bytes after offset " + std::to_string(offset));
  }
  header.erase("arrays");
  c.meta = std::move(header);
  return c;
}

std::string fingerprint(const nlohmann::json& j) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(mix64(hash_name(j.dump()))));
  return buf;
}

}  // namespace varpred
