#include "varpred/data.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "varpred/container.hpp"
#include "varpred/error.hpp"

namespace varpred {

std::string to_string(FactorRole role) {
  switch (role) {
    case FactorRole::shape: return "shape";
    case FactorRole::scale: return "scale";
    case FactorRole::orientation: return "orientation";
    case FactorRole::pos_x: return "pos-x";
    case FactorRole::pos_y: return "pos-y";
  }
  return "?";
}

FactorRole parse_factor_role(const std::string& name) {
  if (name == "shape") return FactorRole::shape;
  if (name == "scale") return FactorRole::scale;
  if (name == "orientation") return FactorRole::orientation;
  if (name == "pos-x") return FactorRole::pos_x;
  if (name == "pos-y") return FactorRole::pos_y;
  throw ConfigError("unknown factor role '" + name + "'");
}

FactorSpec FactorSpec::desk_default() {
  FactorSpec s;
  s.factors = {{"shape", 3, FactorRole::shape},
               {"scale", 6, FactorRole::scale},
               {"orientation", 8, FactorRole::orientation},
               {"pos_x", 16, FactorRole::pos_x},
               {"pos_y", 16, FactorRole::pos_y}};
  return s;
}

std::size_t FactorSpec::length() const {
  std::size_t n = 1;
  for (const auto& f : factors) n *= static_cast<std::size_t>(std::max(f.cardinality, 0));
  return n;
}

void FactorSpec::validate() const {
  if (factors.empty()) throw ConfigError("factor spec needs at least one factor");
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  std::set<FactorRole> roles;
  std::set<std::string> names;
  for (const auto& f : factors) {
    if (f.cardinality < 1) throw ConfigError("factor '" + f.name + "' has cardinality < 1");
    if (!roles.insert(f.role).second) throw ConfigError("factor role '" + to_string(f.role) + "' used twice");
    if (!names.insert(f.name).second) throw ConfigError("factor name '" + f.name + "' used twice");
    if (f.role == FactorRole::shape && f.cardinality > 3) {
      throw ConfigError("only 3 shapes (square, ellipse, triangle) can be rendered, got " +
                        std::to_string(f.cardinality));
    }
  }
  if (!(min_radius > 0.0) || min_radius > max_radius) throw ConfigError("need 0 < min_radius <= max_radius");
  if (max_radius >= 0.5) {
    throw ConfigError("max_radius " + std::to_string(max_radius) + " exceeds the canvas (must be < 0.5)");
  }
  if (min_radius * image_size < 1.0) throw ConfigError("min_radius renders below one pixel");
  if (length() > (1u << 30)) throw ConfigError("factor grid too large");
}

void to_json(nlohmann::json& j, const FactorSpec& s) {
  nlohmann::json fs = nlohmann::json::array();
  for (const auto& f : s.factors) fs.push_back({{"name", f.name}, {"cardinality", f.cardinality}, {"role", to_string(f.role)}});
  j = {{"factors", fs}, {"image_size", s.image_size}, {"min_radius", s.min_radius},
       {"max_radius", s.max_radius}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, FactorSpec& s) {
  static const std::set<std::string> allowed{"factors", "image_size", "min_radius", "max_radius", "seed"};
  if (!j.is_object()) throw ConfigError("factor spec must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in factor spec");
  }
  s = FactorSpec{};
  try {
    for (const auto& f : j.at("factors")) {
      for (const auto& [key, _] : f.items()) {
        if (key != "name" && key != "cardinality" && key != "role") {
          throw ConfigError("unknown key '" + key + "' in factor entry");
        }
      }
      s.factors.push_back({f.at("name").get<std::string>(), f.at("cardinality").get<int>(),
                           parse_factor_role(f.at("role").get<std::string>())});
    }
    s.image_size = j.value("image_size", 32);
    s.min_radius = j.value("min_radius", 0.1);
    s.max_radius = j.value("max_radius", 0.2);
    s.seed = j.value("seed", Seed{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid factor spec: ") + e.what());
  }
}

int FactorDataset::index_of(const std::vector<int>& coords) const {
  int idx = 0;
  for (std::size_t f = 0; f < spec.factors.size(); ++f) idx = idx * spec.factors[f].cardinality + coords[f];
  return idx;
}

namespace {

double fraction(int i, int card) { return card > 1 ? static_cast<double>(i) / (card - 1) : 0.5; }

bool inside(int shape, double u, double v) {
  switch (shape) {
    case 0:  // square
      return std::fabs(u) <= 0.8 && std::fabs(v) <= 0.8;
    case 1:  // ellipse
      return u * u + (v / 0.55) * (v / 0.55) <= 1.0;
    default: {  // triangle standing in for the heart
      // Vertices (0,-1), (0.866,0.5), (-0.866,0.5); edge tests.
      const double ax = 0.0, ay = -1.0, bx = 0.866, by = 0.5, cx = -0.866, cy = 0.5;
      const double d1 = (u - bx) * (ay - by) - (ax - bx) * (v - by);
      const double d2 = (u - cx) * (by - cy) - (bx - cx) * (v - cy);
      const double d3 = (u - ax) * (cy - ay) - (cx - ax) * (v - ay);
      const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
      const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
      return !(neg && pos);
    }
  }
}

}  // namespace

void render_sprite(const FactorSpec& spec, const std::vector<int>& coords, float* out) {
  const int size = spec.image_size;
  int shape = 0;
  double radius = 0.5 * (spec.min_radius + spec.max_radius) * size;
  double angle = 0.0;
  double cx = 0.5 * size, cy = 0.5 * size;
  const double lo = spec.max_radius * size, span = size - 2.0 * lo;
  for (std::size_t f = 0; f < spec.factors.size(); ++f) {
    const Factor& fac = spec.factors[f];
    const int i = coords[f];
    switch (fac.role) {
      case FactorRole::shape: shape = i; break;
      case FactorRole::scale:
        radius = (spec.min_radius + (spec.max_radius - spec.min_radius) * fraction(i, fac.cardinality)) * size;
        break;
      case FactorRole::orientation: angle = 2.0 * M_PI * i / fac.cardinality; break;
      case FactorRole::pos_x: cx = lo + span * fraction(i, fac.cardinality); break;
      case FactorRole::pos_y: cy = lo + span * fraction(i, fac.cardinality); break;
    }
  }
  const double c = std::cos(angle), s = std::sin(angle);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = (x + 0.5 - cx) / radius, dy = (y + 0.5 - cy) / radius;
      const double u = c * dx + s * dy, v = -s * dx + c * dy;
      out[y * size + x] = inside(shape, u, v) ? 1.0f : -1.0f;
    }
  }
}

FactorDataset generate_factor_dataset(const FactorSpec& spec) {
  spec.validate();
  const int m = static_cast<int>(spec.length());
  const int f = static_cast<int>(spec.factors.size());
  const int size = spec.image_size;
  FactorDataset data;
  data.spec = spec;
  data.images = Tensor<float>({m, 1, size, size});
  data.factors.resize(static_cast<std::size_t>(m) * f);
  std::vector<int> coords(static_cast<std::size_t>(f), 0);
  for (int row = 0; row < m; ++row) {
    int rest = row;
    for (int k = f - 1; k >= 0; --k) {
      const int card = spec.factors[static_cast<std::size_t>(k)].cardinality;
      coords[static_cast<std::size_t>(k)] = rest % card;
      rest /= card;
    }
    std::copy(coords.begin(), coords.end(), data.factors.begin() + static_cast<std::ptrdiff_t>(row) * f);
    render_sprite(spec, coords, data.images.data() + static_cast<std::size_t>(row) * size * size);
  }
  return data;
}

void save_dataset(const FactorDataset& data, const std::filesystem::path& path) {
  Container c;
  std::vector<std::string> names;
  for (const auto& f : data.spec.factors) names.push_back(f.name);
  c.meta = {{"kind", "factor-dataset"}, {"has_factors", data.has_factors}, {"factor_names", names}};
  if (!data.spec.factors.empty()) c.meta["spec"] = data.spec;
  c.add("images", data.images);
  if (data.has_factors) {
    c.add("factors", {data.size(), data.num_factors()}, data.factors);
  }
  write_container(path, kDatasetMagic, c);
}

FactorDataset load_dataset(const std::filesystem::path& path) {
  Container c = read_container(path, kDatasetMagic);
  FactorDataset data;
  data.images = c.tensor("images");
  if (data.images.rank() != 4) throw PersistenceError("dataset images must be [M, c, h, w]");
  for (float v : data.images.values()) {
    if (!(v >= -1.0f && v <= 1.0f)) throw PersistenceError("dataset pixel outside [-1, 1]");
  }
  if (c.meta.contains("spec")) {
    try {
      data.spec = c.meta["spec"].get<FactorSpec>();
    } catch (const ConfigError& e) {
      throw PersistenceError(std::string("dataset spec malformed: ") + e.what());
    }
  } else {
    data.spec.image_size = data.images.dim(2);
  }
  data.has_factors = c.has("factors");
  if (data.has_factors) {
    const NamedArray& a = c.get("factors");
    if (a.dtype != DType::i32 || a.shape.size() != 2 || a.shape[0] != data.size() ||
        a.shape[1] != data.num_factors()) {
      throw PersistenceError("factor table shape does not match images and spec");
    }
    data.factors = a.i32;
    for (int row = 0; row < data.size(); ++row) {
      for (int f = 0; f < data.num_factors(); ++f) {
        const int v = data.factor(row, f);
        if (v < 0 || v >= data.spec.factors[static_cast<std::size_t>(f)].cardinality) {
          throw PersistenceError("factor value out of range in row " + std::to_string(row));
        }
      }
    }
  }
  return data;
}

void export_factor_csv(const FactorDataset& data, const std::filesystem::path& path) {
  if (!data.has_factors) throw CapabilityError("dataset has no factor table");
  std::ofstream out(path);
  if (!out) throw PersistenceError("cannot write '" + path.string() + "'");
  out << "index";
  for (const auto& f : data.spec.factors) out << ',' << f.name;
  out << '\n';
  for (int row = 0; row < data.size(); ++row) {
    out << row;
    for (int f = 0; f < data.num_factors(); ++f) out << ',' << data.factor(row, f);
    out << '\n';
  }
}

Tensor<float> TraversalGrid::tile(int r, int c) const {
  const Tensor<float> t = images.slice_rows(r * cols + c, r * cols + c + 1);
  return t.reshaped({images.dim(1), images.dim(2), images.dim(3)});
}

Tensor<float> TraversalGrid::mosaic(int pad, float pad_value) const {
  const int ch = images.dim(1), h = images.dim(2), w = images.dim(3);
  const int big_h = rows * h + (rows + 1) * pad, big_w = cols * w + (cols + 1) * pad;
  Tensor<float> out({ch, big_h, big_w}, pad_value);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const float* src = images.data() + static_cast<std::size_t>(r * cols + c) * ch * h * w;
      for (int k = 0; k < ch; ++k) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const int yy = pad + r * (h + pad) + y, xx = pad + c * (w + pad) + x;
            out[(static_cast<std::size_t>(k) * big_h + yy) * big_w + xx] = src[(k * h + y) * w + x];
          }
        }
      }
    }
  }
  return out;
}

TraversalGrid latent_traversal_grid(const ImageGenerator& g, const std::vector<float>& base_z,
                                    const std::vector<int>& dims, double lo, double hi, int steps) {
  const int k = g.latent_dims();
  if (static_cast<int>(base_z.size()) != k) {
    throw ArgumentError("base code has " + std::to_string(base_z.size()) + " dims, generator expects " + std::to_string(k));
  }
  if (!(lo < hi)) throw ArgumentError("traversal range needs lo < hi");
  if (steps < 2) throw ArgumentError("traversal needs at least 2 steps");
  if (dims.empty()) throw ArgumentError("no dimensions to traverse");
  for (int d : dims) {
    if (d < 0 || d >= k) throw ArgumentError("traversal dimension " + std::to_string(d) + " outside [0, " + std::to_string(k) + ")");
  }
  TraversalGrid grid;
  grid.dims = dims;
  grid.rows = static_cast<int>(dims.size());
  grid.cols = steps;
  grid.lo = lo;
  grid.hi = hi;
  Tensor<float> z({grid.rows * steps, k});
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < steps; ++c) {
      const int row = r * steps + c;
      for (int j = 0; j < k; ++j) z.at(row, j) = base_z[static_cast<std::size_t>(j)];
      z.at(row, dims[static_cast<std::size_t>(r)]) = static_cast<float>(lo + c * (hi - lo) / (steps - 1));
    }
  }
  grid.images = generate_batched(g, z);
  return grid;
}

}  // namespace varpred
