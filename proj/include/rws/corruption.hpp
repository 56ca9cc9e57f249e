#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace rws {

enum class CorruptionKind {
  GaussianNoise,
  ShotNoise,
  ImpulseNoise,
  GaussianBlur,
  MotionBlur,
  Contrast,
  Brightness,
  Pixelate,
  JpegProxy,
};

inline constexpr std::array<CorruptionKind, 9> kAllCorruptions = {
    CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise, CorruptionKind::ImpulseNoise,
    CorruptionKind::GaussianBlur,  CorruptionKind::MotionBlur, CorruptionKind::Contrast,
    CorruptionKind::Brightness,    CorruptionKind::Pixelate,   CorruptionKind::JpegProxy,
};

std::string_view corruption_name(CorruptionKind kind);
CorruptionKind parse_corruption(std::string_view name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 5;
  std::uint64_t seed = 0;
};

// Strength parameter for a severity in 1..5; monotone in the distortion it produces.
double severity_parameter(CorruptionKind kind, int severity);

// Applies the corruption at an explicit strength parameter. Output is clamped to [0, 1].
std::vector<float> corrupt_with_parameter(std::span<const float> image, int height, int width, CorruptionKind kind,
                                          double parameter, std::uint64_t seed);

std::vector<float> corrupt(std::span<const float> image, int height, int width, const CorruptionSpec& spec);

}  // namespace rws
