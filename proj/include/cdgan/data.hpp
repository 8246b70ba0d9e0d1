#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdgan/error.hpp"
#include "cdgan/image_io.hpp"
#include "cdgan/networks.hpp"
#include "cdgan/tensor.hpp"

namespace cdgan {

// RGB triple in [-1, 1] image units.
using Rgb = std::array<float, 3>;

inline double rgb_distance(const Rgb& a, const Rgb& b) {
  const double dr = a[0] - b[0];
  const double dg = a[1] - b[1];
  const double db = a[2] - b[2];
  return std::sqrt(dr * dr + dg * dg + db * db);
}

inline const char* domain_name(Domain d) { return d == Domain::A ? "A" : "B"; }

// ---------------------------------------------------------------------------
// Pixel conversions.

// 8-bit to [-1, 1]: v / 127.5 - 1, so 0 -> -1 and 255 -> 1.
inline float byte_to_unit(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

inline std::uint8_t unit_to_byte(float v) {
  const float scaled = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(scaled);
}

// Bilinear resample (pixel-center aligned) to size x size, mapped to [-1, 1].
// Returns a (1, 3, size, size) tensor. Equal sizes copy pixels exactly.
inline Tensor<float> image_to_tensor(const Image8& img, int size) {
  if (img.channels != 3 || img.width <= 0 || img.height <= 0) {
    throw DataError("image_to_tensor: expected a non-empty RGB image");
  }
  Tensor<float> t(Shape{1, 3, size, size});
  const double sx = static_cast<double>(img.width) / size;
  const double sy = static_cast<double>(img.height) / size;
  for (int y = 0; y < size; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < size; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
        const double bottom = (1 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
        const double v = (1 - wy) * top + wy * bottom;
        t.at(0, c, y, x) = static_cast<float>(v / 127.5 - 1.0);
      }
    }
  }
  return t;
}

template <typename T>
Image8 tensor_to_image(const Tensor<T>& t, int sample = 0) {
  const Shape s = t.shape();
  if (s.c != 3) {
    throw InputError("tensor_to_image: expected 3 channels, got " + to_string(s));
  }
  Image8 img;
  img.width = s.w;
  img.height = s.h;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(s.w) * s.h * 3);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(x, y, c) = unit_to_byte(static_cast<float>(t.at(sample, c, y, x)));
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Binary masks.

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  [[nodiscard]] std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
  std::uint8_t operator()(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Mask&, const Mask&) = default;
};

inline constexpr double kDefaultMaskTolerance = 0.25;

// Foreground iff the pixel's RGB distance to the background exceeds tol.
template <typename T>
Mask mask_of(const Tensor<T>& images, int sample, const Rgb& background, double tol = kDefaultMaskTolerance) {
  const Shape s = images.shape();
  if (s.c != 3 || sample < 0 || sample >= s.n) {
    throw InputError("mask_of: expected an RGB batch containing sample " + std::to_string(sample));
  }
  Mask m{s.w, s.h, std::vector<std::uint8_t>(static_cast<std::size_t>(s.w) * s.h, 0)};
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      const Rgb px{static_cast<float>(images.at(sample, 0, y, x)), static_cast<float>(images.at(sample, 1, y, x)),
                   static_cast<float>(images.at(sample, 2, y, x))};
      m.bits[static_cast<std::size_t>(y) * s.w + x] = rgb_distance(px, background) > tol ? 1 : 0;
    }
  }
  return m;
}

inline Image8 mask_to_image(const Mask& m) {
  Image8 img{m.width, m.height, 1, {}};
  img.pixels.resize(m.bits.size());
  std::transform(m.bits.begin(), m.bits.end(), img.pixels.begin(), [](std::uint8_t b) { return b ? 255 : 0; });
  return img;
}

inline Mask image_to_mask(const Image8& img) {
  Mask m{img.width, img.height, std::vector<std::uint8_t>(static_cast<std::size_t>(img.width) * img.height)};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      m.bits[static_cast<std::size_t>(y) * img.width + x] = img.at(x, y, 0) >= 128 ? 1 : 0;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Datasets.

struct DomainDataset {
  std::filesystem::path root;
  Domain domain = Domain::A;
  std::vector<std::string> items;     // file names relative to the domain directory
  int image_size = 0;
  std::vector<Tensor<float>> images;  // each (1, 3, image_size, image_size)

  [[nodiscard]] std::size_t size() const noexcept { return images.size(); }

  // (K, 3, S, S) batch in index order.
  [[nodiscard]] Tensor<float> batch(std::span<const std::size_t> indices) const {
    std::vector<Tensor<float>> parts;
    parts.reserve(indices.size());
    for (std::size_t i : indices) {
      if (i >= images.size()) {
        throw InputError("dataset index out of range");
      }
      parts.push_back(images[i]);
    }
    return stack_batch(parts);
  }
};

inline std::string domain_dir(Domain d) { return d == Domain::A ? "domainA" : "domainB"; }

// Reads <root>/domainA or <root>/domainB; items in lexicographic order.
inline DomainDataset load_folder_dataset(const std::filesystem::path& root, Domain domain, int image_size) {
  namespace fs = std::filesystem;
  const fs::path dir = root / domain_dir(domain);
  if (!fs::is_directory(dir)) {
    throw DataError("missing dataset directory " + dir.string());
  }
  DomainDataset ds;
  ds.root = root;
  ds.domain = domain;
  ds.image_size = image_size;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
      ds.items.push_back(entry.path().filename().string());
    }
  }
  std::sort(ds.items.begin(), ds.items.end());
  if (ds.items.empty()) {
    throw DataError("no PNG or JPEG images in " + dir.string());
  }
  ds.images.reserve(ds.items.size());
  for (const auto& name : ds.items) {
    ds.images.push_back(image_to_tensor(read_image(dir / name), image_size));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic two-domain benchmark: one flat-colored shape per image. Geometry
// (shape, position, scale) is shared across domains; color is domain-specific.

enum class ShapeKind { Circle, Square, Triangle, Cross };

inline const char* shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Cross: return "cross";
  }
  return "?";
}

inline ShapeKind parse_shape(const std::string& s) {
  if (s == "circle") return ShapeKind::Circle;
  if (s == "square") return ShapeKind::Square;
  if (s == "triangle") return ShapeKind::Triangle;
  if (s == "cross") return ShapeKind::Cross;
  throw ConfigError("unknown shape '" + s + "' (valid: circle, square, triangle, cross)");
}

// Axis-aligned bounding box, half-open: [x0, x1) x [y0, y1).
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  friend bool operator==(const BBox&, const BBox&) = default;
};

// Aliasing-free rasterization of a shape centered at (cx, cy) whose bounding
// square has side `extent` (diameter for circles). Pixel (x, y) is covered iff
// its center (x + 0.5, y + 0.5) lies inside the shape.
inline Mask rasterize(ShapeKind kind, double cx, double cy, double extent, int size) {
  Mask m{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size, 0)};
  const double half = extent / 2.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      bool in = false;
      switch (kind) {
        case ShapeKind::Circle: in = dx * dx + dy * dy <= half * half; break;
        case ShapeKind::Square: in = std::abs(dx) <= half && std::abs(dy) <= half; break;
        case ShapeKind::Triangle: {
          // Apex at the top center, base along the bottom edge.
          const double t = (dy + half) / extent;
          in = t >= 0.0 && t <= 1.0 && std::abs(dx) <= t * half;
          break;
        }
        case ShapeKind::Cross: {
          const double arm = extent / 6.0;
          in = std::abs(dx) <= half && std::abs(dy) <= half && (std::abs(dx) <= arm || std::abs(dy) <= arm);
          break;
        }
      }
      m.bits[static_cast<std::size_t>(y) * size + x] = in ? 1 : 0;
    }
  }
  return m;
}

inline BBox bounding_box(const Mask& m) {
  BBox b{m.width, m.height, 0, 0};
  bool any = false;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m(x, y)) {
        any = true;
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x + 1);
        b.y1 = std::max(b.y1, y + 1);
      }
    }
  }
  return any ? b : BBox{};
}

struct SyntheticSpec {
  std::vector<ShapeKind> shapes{ShapeKind::Circle, ShapeKind::Square};
  std::vector<Rgb> palette_A{Rgb{1.0f, -1.0f, -1.0f}, Rgb{-1.0f, 1.0f, -1.0f}};  // red, green
  std::vector<Rgb> palette_B{Rgb{-1.0f, -1.0f, 1.0f}, Rgb{1.0f, 1.0f, -1.0f}};  // blue, yellow
  int image_size = 32;
  int count = 64;  // images per domain
  std::uint64_t seed = 0;
  Rgb background{-1.0f, -1.0f, -1.0f};
  double min_scale = 0.3;
  double max_scale = 0.6;

  void validate() const {
    if (count < 1) throw ConfigError("synthetic count must be >= 1");
    if (image_size < 8) throw ConfigError("synthetic image_size must be >= 8");
    if (shapes.empty()) throw ConfigError("synthetic spec needs at least one shape");
    if (palette_A.empty() || palette_B.empty()) throw ConfigError("synthetic palettes must be non-empty");
    if (!(min_scale > 0.0 && min_scale <= max_scale && max_scale <= 1.0)) {
      throw ConfigError("synthetic scale range must satisfy 0 < min <= max <= 1");
    }
    for (const auto& a : palette_A) {
      for (const auto& b : palette_B) {
        if (rgb_distance(a, b) < 0.5) throw ConfigError("palettes must be disjoint (pairwise RGB distance >= 0.5)");
      }
    }
    for (const auto* pal : {&palette_A, &palette_B}) {
      for (const auto& c : *pal) {
        if (rgb_distance(c, background) <= kDefaultMaskTolerance) {
          throw ConfigError("palette color too close to the background to be segmented");
        }
      }
    }
  }
};

struct TruthRecord {
  std::string file;  // relative to the dataset root, e.g. domainA/000007.png
  Domain domain = Domain::A;
  int index = 0;
  ShapeKind shape = ShapeKind::Circle;
  int color_id = 0;
  BBox bbox;
  Mask mask;
};

struct SyntheticData {
  SyntheticSpec spec;
  DomainDataset a;
  DomainDataset b;
  std::vector<TruthRecord> truth_A;
  std::vector<TruthRecord> truth_B;

  [[nodiscard]] const DomainDataset& dataset(Domain d) const { return d == Domain::A ? a : b; }
  [[nodiscard]] const std::vector<TruthRecord>& truth(Domain d) const { return d == Domain::A ? truth_A : truth_B; }
};

namespace detail {

// Portable draws from mt19937_64 so datasets are identical across standard
// libraries.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline std::size_t index_draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

inline std::string item_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", i);
  return buf;
}

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData out;
  out.spec = spec;
  std::mt19937_64 rng(spec.seed);
  for (Domain d : {Domain::A, Domain::B}) {
    DomainDataset& ds = d == Domain::A ? out.a : out.b;
    auto& truth = d == Domain::A ? out.truth_A : out.truth_B;
    const auto& palette = d == Domain::A ? spec.palette_A : spec.palette_B;
    ds.domain = d;
    ds.image_size = spec.image_size;
    for (int i = 0; i < spec.count; ++i) {
      TruthRecord rec;
      rec.domain = d;
      rec.index = i;
      rec.shape = spec.shapes[detail::index_draw(rng, spec.shapes.size())];
      rec.color_id = static_cast<int>(detail::index_draw(rng, palette.size()));
      const double scale = spec.min_scale + (spec.max_scale - spec.min_scale) * detail::unit_draw(rng);
      const double extent = scale * spec.image_size;
      const double lo = extent / 2.0;
      const double hi = spec.image_size - extent / 2.0;
      const double cx = lo + (hi - lo) * detail::unit_draw(rng);
      const double cy = lo + (hi - lo) * detail::unit_draw(rng);
      rec.mask = rasterize(rec.shape, cx, cy, extent, spec.image_size);
      rec.bbox = bounding_box(rec.mask);
      const std::string name = detail::item_name(i);
      rec.file = domain_dir(d) + "/" + name;

      Tensor<float> img(Shape{1, 3, spec.image_size, spec.image_size});
      const Rgb& color = palette[static_cast<std::size_t>(rec.color_id)];
      for (int y = 0; y < spec.image_size; ++y) {
        for (int x = 0; x < spec.image_size; ++x) {
          const Rgb& px = rec.mask(x, y) ? color : spec.background;
          for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = px[static_cast<std::size_t>(c)];
        }
      }
      ds.items.push_back(name);
      ds.images.push_back(std::move(img));
      truth.push_back(std::move(rec));
    }
  }
  return out;
}

namespace detail {

inline nlohmann::ordered_json rgb_json(const Rgb& c) { return nlohmann::ordered_json::array({c[0], c[1], c[2]}); }

inline Rgb json_rgb(const nlohmann::json& j) {
  return Rgb{j.at(0).get<float>(), j.at(1).get<float>(), j.at(2).get<float>()};
}

inline std::string mask_file(Domain d, int index) {
  return std::string("masks/") + domain_name(d) + "_" + item_name(index);
}

}  // namespace detail

// Writes <root>/domainA/*.png, <root>/domainB/*.png, <root>/masks/*.png,
// <root>/truth.jsonl (one record per image) and <root>/synthetic.json (the
// generating spec, needed to interpret masks and colors).
inline void write_synthetic(const SyntheticData& data, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"domainA", "domainB", "masks"}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw DataError("cannot create directory " + (root / sub).string() + ": " + ec.message());
  }
  std::ofstream truth(root / "truth.jsonl", std::ios::binary | std::ios::trunc);
  if (!truth) throw DataError("cannot write " + (root / "truth.jsonl").string());
  for (Domain d : {Domain::A, Domain::B}) {
    const auto& ds = data.dataset(d);
    const auto& recs = data.truth(d);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& rec = recs[i];
      write_png(root / rec.file, tensor_to_image(ds.images[i]));
      const std::string mfile = detail::mask_file(d, rec.index);
      write_png(root / mfile, mask_to_image(rec.mask));
      nlohmann::ordered_json j;
      j["file"] = rec.file;
      j["domain"] = domain_name(d);
      j["shape"] = shape_name(rec.shape);
      j["color_id"] = rec.color_id;
      j["bbox"] = {rec.bbox.x0, rec.bbox.y0, rec.bbox.x1, rec.bbox.y1};
      j["mask"] = mfile;
      truth << j.dump() << '\n';
    }
  }
  nlohmann::ordered_json s;
  const auto& spec = data.spec;
  for (auto k : spec.shapes) s["shapes"].push_back(shape_name(k));
  for (const auto& c : spec.palette_A) s["palette_A"].push_back(detail::rgb_json(c));
  for (const auto& c : spec.palette_B) s["palette_B"].push_back(detail::rgb_json(c));
  s["image_size"] = spec.image_size;
  s["count"] = spec.count;
  s["seed"] = spec.seed;
  s["background"] = detail::rgb_json(spec.background);
  s["min_scale"] = spec.min_scale;
  s["max_scale"] = spec.max_scale;
  std::ofstream meta(root / "synthetic.json", std::ios::binary | std::ios::trunc);
  if (!meta) throw DataError("cannot write " + (root / "synthetic.json").string());
  meta << s.dump(2) << '\n';
}

[[nodiscard]] inline bool has_synthetic_truth(const std::filesystem::path& root) {
  return std::filesystem::exists(root / "truth.jsonl") && std::filesystem::exists(root / "synthetic.json");
}

// Reloads a dataset written by write_synthetic, including its ground truth.
inline SyntheticData load_synthetic(const std::filesystem::path& root) {
  if (!has_synthetic_truth(root)) {
    throw DataError("no synthetic ground truth (truth.jsonl, synthetic.json) under " + root.string() +
                    "; evaluation requires a dataset produced by synth-data");
  }
  SyntheticData out;
  try {
    std::ifstream meta(root / "synthetic.json");
    const auto s = nlohmann::json::parse(meta);
    SyntheticSpec& spec = out.spec;
    spec.shapes.clear();
    for (const auto& k : s.at("shapes")) spec.shapes.push_back(parse_shape(k.get<std::string>()));
    spec.palette_A.clear();
    for (const auto& c : s.at("palette_A")) spec.palette_A.push_back(detail::json_rgb(c));
    spec.palette_B.clear();
    for (const auto& c : s.at("palette_B")) spec.palette_B.push_back(detail::json_rgb(c));
    spec.image_size = s.at("image_size").get<int>();
    spec.count = s.at("count").get<int>();
    spec.seed = s.at("seed").get<std::uint64_t>();
    spec.background = detail::json_rgb(s.at("background"));
    spec.min_scale = s.at("min_scale").get<double>();
    spec.max_scale = s.at("max_scale").get<double>();

    std::ifstream truth(root / "truth.jsonl");
    std::string line;
    while (std::getline(truth, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      TruthRecord rec;
      rec.file = j.at("file").get<std::string>();
      rec.domain = j.at("domain").get<std::string>() == "A" ? Domain::A : Domain::B;
      rec.shape = parse_shape(j.at("shape").get<std::string>());
      rec.color_id = j.at("color_id").get<int>();
      const auto& bb = j.at("bbox");
      rec.bbox = BBox{bb.at(0).get<int>(), bb.at(1).get<int>(), bb.at(2).get<int>(), bb.at(3).get<int>()};
      rec.mask = image_to_mask(read_image(root / j.at("mask").get<std::string>()));
      auto& list = rec.domain == Domain::A ? out.truth_A : out.truth_B;
      rec.index = static_cast<int>(list.size());
      list.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed synthetic metadata under " + root.string() + ": " + e.what());
  }
  out.a = load_folder_dataset(root, Domain::A, out.spec.image_size);
  out.b = load_folder_dataset(root, Domain::B, out.spec.image_size);
  if (out.a.size() != out.truth_A.size() || out.b.size() != out.truth_B.size()) {
    throw DataError("truth.jsonl does not match the image folders under " + root.string());
  }
  return out;
}

}  // namespace cdgan
