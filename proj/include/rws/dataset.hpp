#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rws {

// Grayscale images with pixels in [0, 1], stored contiguously row-major.
struct ImageSet {
  int height = 28;
  int width = 28;
  int classes = 10;
  std::vector<float> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return static_cast<std::size_t>(height) * width; }
  std::span<const float> image(std::size_t i) const { return {pixels.data() + i * image_size(), image_size()}; }
};

enum class SynthId { A, B };
enum class Split { Train, Test };

SynthId parse_synth_id(std::string_view text);
std::string_view synth_name(SynthId id);

inline constexpr int kSynthClasses = 10;

/*
 * Procedural stroke glyphs, one template per class, rendered with seeded
 * jitter in position, scale, rotation and intensity. synthB draws thicker,
 * smaller, off-centre glyphs than synthA. Labels cycle through the classes
 * before shuffling, so each class count is within one of n / classes.
 */
ImageSet generate_dataset(SynthId id, Split split, std::size_t n, std::uint64_t seed);

// IDX pair: images magic 0x00000803 (n, rows, cols), labels magic 0x00000801 (n).
ImageSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // [0, 1]
};

// Binary P5 with maxval 255.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> bytes);

}  // namespace rws
