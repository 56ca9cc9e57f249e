#include "rws/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rws/errors.hpp"
#include "rws/rng.hpp"

namespace rws {

namespace {

constexpr std::array<std::string_view, 9> kNames = {
    "gaussian_noise", "shot_noise", "impulse_noise", "gaussian_blur", "motion_blur",
    "contrast",       "brightness", "pixelate",      "jpeg_proxy",
};

// Rows follow CorruptionKind order; columns are severities 1..5.
constexpr double kSeverity[9][5] = {
    {0.04, 0.08, 0.12, 0.18, 0.26},  // noise sigma
    {60, 25, 12, 5, 3},              // photon count per unit intensity
    {0.01, 0.03, 0.06, 0.10, 0.17},  // replaced fraction
    {0.4, 0.6, 0.9, 1.3, 1.8},       // blur sigma
    {3, 5, 7, 9, 11},                // kernel length
    {0.75, 0.6, 0.45, 0.3, 0.15},    // contrast factor
    {0.05, 0.1, 0.15, 0.2, 0.3},     // offset
    {2, 2, 3, 4, 6},                 // block size
    {8, 12, 18, 26, 40},             // DCT step on the 0..255 scale
};

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Horizontal then vertical pass with edge replication; kernel must be odd-length.
std::vector<float> separable(std::span<const float> image, int h, int w, const std::vector<double>& kx,
                             const std::vector<double>& ky) {
  std::vector<double> tmp(image.size());
  const int rx = static_cast<int>(kx.size() / 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -rx; k <= rx; ++k) s += kx[k + rx] * image[y * w + std::clamp(x + k, 0, w - 1)];
      tmp[y * w + x] = s;
    }
  }
  std::vector<float> out(image.size());
  const int ry = static_cast<int>(ky.size() / 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -ry; k <= ry; ++k) s += ky[k + ry] * tmp[std::clamp(y + k, 0, h - 1) * w + x];
      out[y * w + x] = clamp01(s);
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

// Orthonormal 8-point DCT-II basis.
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) b[u][x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return b;
  }();
  return basis;
}

std::vector<float> jpeg_proxy(std::span<const float> image, int h, int w, double step) {
  const auto& c = dct_basis();
  std::vector<float> out(image.size());
  for (int by = 0; by < h; by += 8) {
    for (int bx = 0; bx < w; bx += 8) {
      double block[8][8];
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          const int sy = std::min(by + y, h - 1);
          const int sx = std::min(bx + x, w - 1);
          block[y][x] = image[sy * w + sx] * 255.0 - 128.0;
        }
      }
      double coef[8][8];
      for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
          double s = 0.0;
          for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) s += c[u][y] * c[v][x] * block[y][x];
          }
          coef[u][v] = std::round(s / step) * step;
        }
      }
      for (int y = 0; y < 8 && by + y < h; ++y) {
        for (int x = 0; x < 8 && bx + x < w; ++x) {
          double s = 0.0;
          for (int u = 0; u < 8; ++u) {
            for (int v = 0; v < 8; ++v) s += c[u][y] * c[v][x] * coef[u][v];
          }
          out[(by + y) * w + bx + x] = clamp01((s + 128.0) / 255.0);
        }
      }
    }
  }
  return out;
}

}  // namespace

std::string_view corruption_name(CorruptionKind kind) { return kNames[static_cast<int>(kind)]; }

CorruptionKind parse_corruption(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<CorruptionKind>(i);
  }
  throw ValidationError("unknown corruption kind '" + std::string(name) + "'");
}

double severity_parameter(CorruptionKind kind, int severity) {
  if (severity < 1 || severity > 5) throw ValidationError("severity must be in 1..5, got " + std::to_string(severity));
  return kSeverity[static_cast<int>(kind)][severity - 1];
}

std::vector<float> corrupt_with_parameter(std::span<const float> image, int height, int width, CorruptionKind kind,
                                          double parameter, std::uint64_t seed) {
  const int h = height;
  const int w = width;
  if (image.size() != static_cast<std::size_t>(h) * w) throw DimensionError("image size does not match dimensions");
  Rng rng(seed);
  std::vector<float> out(image.size());
  switch (kind) {
    case CorruptionKind::GaussianNoise:
      for (std::size_t i = 0; i < image.size(); ++i) out[i] = clamp01(image[i] + parameter * rng.normal());
      return out;
    case CorruptionKind::ShotNoise:
      for (std::size_t i = 0; i < image.size(); ++i) {
        out[i] = clamp01(static_cast<double>(rng.poisson(image[i] * parameter)) / parameter);
      }
      return out;
    case CorruptionKind::ImpulseNoise:
      for (std::size_t i = 0; i < image.size(); ++i) {
        // Two draws per pixel keep the hit pattern nested across severities.
        const double hit = rng.uniform();
        const double salt = rng.uniform();
        out[i] = hit < parameter ? (salt < 0.5 ? 0.0f : 1.0f) : image[i];
      }
      return out;
    case CorruptionKind::GaussianBlur: {
      const auto k = gaussian_kernel(parameter);
      return separable(image, h, w, k, k);
    }
    case CorruptionKind::MotionBlur: {
      const int len = std::max(1, static_cast<int>(parameter)) | 1;
      return separable(image, h, w, std::vector<double>(len, 1.0 / len), {1.0});
    }
    case CorruptionKind::Contrast: {
      double mean = 0.0;
      for (float v : image) mean += v;
      mean /= static_cast<double>(image.size());
      for (std::size_t i = 0; i < image.size(); ++i) out[i] = clamp01((image[i] - mean) * parameter + mean);
      return out;
    }
    case CorruptionKind::Brightness:
      for (std::size_t i = 0; i < image.size(); ++i) out[i] = clamp01(image[i] + parameter);
      return out;
    case CorruptionKind::Pixelate: {
      const int f = std::max(1, static_cast<int>(parameter));
      for (int by = 0; by < h; by += f) {
        for (int bx = 0; bx < w; bx += f) {
          double s = 0.0;
          int count = 0;
          for (int y = by; y < std::min(by + f, h); ++y) {
            for (int x = bx; x < std::min(bx + f, w); ++x, ++count) s += image[y * w + x];
          }
          const float v = clamp01(s / count);
          for (int y = by; y < std::min(by + f, h); ++y) {
            for (int x = bx; x < std::min(bx + f, w); ++x) out[y * w + x] = v;
          }
        }
      }
      return out;
    }
    case CorruptionKind::JpegProxy:
      return jpeg_proxy(image, h, w, parameter);
  }
  return out;
}

std::vector<float> corrupt(std::span<const float> image, int height, int width, const CorruptionSpec& spec) {
  return corrupt_with_parameter(image, height, width, spec.kind, severity_parameter(spec.kind, spec.severity), spec.seed);
}

}  // namespace rws
