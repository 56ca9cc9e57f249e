#include "rws/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "rws/errors.hpp"
#include "rws/rng.hpp"

namespace rws {

SynthId parse_synth_id(std::string_view text) {
  if (text == "synthA") return SynthId::A;
  if (text == "synthB") return SynthId::B;
  throw ValidationError("unknown synthetic dataset '" + std::string(text) + "'");
}

std::string_view synth_name(SynthId id) { return id == SynthId::A ? "synthA" : "synthB"; }

namespace {

struct Point {
  double x;
  double y;
};
using Stroke = std::vector<Point>;  // polyline

struct Glyph {
  std::vector<Stroke> strokes;
  double disk_radius = 0.0;  // filled disk at the origin, template units
};

Stroke polygon(std::vector<Point> pts) {
  pts.push_back(pts.front());
  return pts;
}

Stroke ring(double radius) {
  Stroke s;
  for (int i = 0; i <= 16; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 16.0;
    s.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  return s;
}

const std::array<Glyph, kSynthClasses>& glyphs() {
  static const std::array<Glyph, kSynthClasses> table = [] {
    std::array<Glyph, kSynthClasses> g;
    g[0].strokes = {ring(0.85)};
    g[1].strokes = {{{0, -1}, {0, 1}}};
    g[2].strokes = {{{-1, 0}, {1, 0}}};
    g[3].strokes = {{{-0.9, -0.9}, {0.9, 0.9}}, {{-0.9, 0.9}, {0.9, -0.9}}};
    g[4].strokes = {{{0, -1}, {0, 1}}, {{-1, 0}, {1, 0}}};
    g[5].strokes = {polygon({{0, -0.9}, {0.9, 0.8}, {-0.9, 0.8}})};
    g[6].strokes = {polygon({{0, -1}, {0.9, 0}, {0, 1}, {-0.9, 0}})};
    g[7].strokes = {{{-0.8, -1}, {-0.8, 0.9}, {0.9, 0.9}}};
    g[8].strokes = {polygon({{-0.8, -0.8}, {0.8, -0.8}, {0.8, 0.8}, {-0.8, 0.8}})};
    g[9].strokes = {{{-1, -0.9}, {1, -0.9}}, {{0, -0.9}, {0, 1}}};
    return g;
  }();
  return table;
}

struct Regime {
  double half_extent;
  double centre_x;
  double centre_y;
  double centre_jitter;
  double width_lo, width_hi;
  double intensity_lo, intensity_hi;
  double background_hi;
};

// Disjoint stroke-width ranges give the two datasets a real domain gap.
constexpr Regime kRegimeA{9.0, 13.5, 13.5, 2.0, 1.0, 1.6, 0.5, 0.75, 0.15};
constexpr Regime kRegimeB{7.0, 15.0, 12.0, 2.0, 2.6, 3.4, 0.3, 0.55, 0.2};

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x;
  const double ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

void render(const Glyph& glyph, const Regime& regime, Rng& rng, int h, int w, float* out) {
  const double scale = regime.half_extent * (0.85 + 0.25 * rng.uniform());
  const double angle = (rng.uniform() * 2.0 - 1.0) * 12.0 * std::numbers::pi / 180.0;
  const double cx = regime.centre_x + (rng.uniform() * 2.0 - 1.0) * regime.centre_jitter;
  const double cy = regime.centre_y + (rng.uniform() * 2.0 - 1.0) * regime.centre_jitter;
  const double width = regime.width_lo + (regime.width_hi - regime.width_lo) * rng.uniform();
  const double intensity = regime.intensity_lo + (regime.intensity_hi - regime.intensity_lo) * rng.uniform();
  const double background = regime.background_hi * rng.uniform();
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);

  std::vector<Stroke> strokes;
  for (const auto& stroke : glyph.strokes) {
    Stroke placed;
    for (const auto& p : stroke) {
      const double jx = p.x + 0.08 * (rng.uniform() * 2.0 - 1.0);
      const double jy = p.y + 0.08 * (rng.uniform() * 2.0 - 1.0);
      placed.push_back({cx + scale * (ca * jx - sa * jy), cy + scale * (sa * jx + ca * jy)});
    }
    strokes.push_back(std::move(placed));
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Point p{x + 0.5, y + 0.5};
      double d = 1e9;
      if (glyph.disk_radius > 0) {
        // Distance to the disk boundary, folded into the stroke coverage below.
        d = std::max(0.0, std::hypot(p.x - cx, p.y - cy) - glyph.disk_radius * scale);
      }
      for (const auto& s : strokes) {
        for (std::size_t k = 0; k + 1 < s.size(); ++k) d = std::min(d, segment_distance(p, s[k], s[k + 1]));
      }
      const double coverage = std::clamp(0.5 + width / 2.0 - d, 0.0, 1.0);
      out[y * w + x] = static_cast<float>(std::clamp(background + (intensity - background) * coverage, 0.0, 1.0));
    }
  }
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | b[at + 3];
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

ImageSet generate_dataset(SynthId id, Split split, std::size_t n, std::uint64_t seed) {
  if (n < static_cast<std::size_t>(kSynthClasses)) throw ValidationError("dataset size must be at least the class count");
  const Regime& regime = id == SynthId::A ? kRegimeA : kRegimeB;
  const std::string tag = std::string(synth_name(id)) + (split == Split::Train ? "/train" : "/test");

  ImageSet set;
  set.classes = kSynthClasses;
  set.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) set.labels[i] = static_cast<int>(i % kSynthClasses);
  Rng shuffle(derive_seed(seed, tag + "/labels"));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(set.labels[i], set.labels[shuffle.below(i + 1)]);

  set.pixels.assign(n * set.image_size(), 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, tag, i));
    render(glyphs()[set.labels[i]], regime, rng, set.height, set.width, set.pixels.data() + i * set.image_size());
  }
  return set;
}

ImageSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = slurp(images);
  const auto lbl = slurp(labels);
  if (img.size() < 16 || lbl.size() < 8) throw FormatError(ParseError::TruncatedFile, "IDX file truncated: header incomplete");
  if (read_be32(img, 0) != 0x00000803) throw FormatError(ParseError::BadMagic, "bad IDX image magic");
  if (read_be32(lbl, 0) != 0x00000801) throw FormatError(ParseError::BadMagic, "bad IDX label magic");
  const std::size_t n = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  const std::size_t nl = read_be32(lbl, 4);
  if (n != nl) throw FormatError(ParseError::CountMismatch, "IDX image/label count mismatch");
  if (rows == 0 || cols == 0) throw FormatError(ParseError::BadShape, "IDX images have zero size");
  if (img.size() < 16 + n * rows * cols) throw FormatError(ParseError::TruncatedFile, "IDX image payload truncated");
  if (lbl.size() < 8 + n) throw FormatError(ParseError::TruncatedFile, "IDX label payload truncated");

  ImageSet set;
  set.height = static_cast<int>(rows);
  set.width = static_cast<int>(cols);
  set.pixels.resize(n * rows * cols);
  for (std::size_t i = 0; i < set.pixels.size(); ++i) set.pixels[i] = static_cast<float>(img[16 + i] / 255.0);
  set.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    set.labels[i] = lbl[8 + i];
    max_label = std::max(max_label, set.labels[i]);
  }
  set.classes = max_label + 1;
  return set;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
  };
  if (next_token() != "P5") throw FormatError(ParseError::BadMagic, "not a binary PGM (P5) file: " + path.string());
  GrayImage image;
  int maxval = 0;
  try {
    image.width = std::stoi(next_token());
    image.height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw FormatError(ParseError::BadHeader, "malformed PGM header: " + path.string());
  }
  if (image.width <= 0 || image.height <= 0 || maxval <= 0 || maxval > 255) {
    throw FormatError(ParseError::BadHeader, "unsupported PGM header: " + path.string());
  }
  ++pos;  // single whitespace before raster
  const std::size_t count = static_cast<std::size_t>(image.width) * image.height;
  if (bytes.size() < pos + count) throw FormatError(ParseError::TruncatedFile, "PGM raster truncated: " + path.string());
  image.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) image.pixels[i] = static_cast<float>(bytes[pos + i]) / static_cast<float>(maxval);
  return image;
}

void write_pgm(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace rws
