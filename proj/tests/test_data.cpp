#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "rws/corruption.hpp"
#include "rws/dataset.hpp"
#include "rws/errors.hpp"
#include "rws/rng.hpp"
#include "support.hpp"

using namespace rws;
using rws::testing::scratch_dir;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Two 2x3 images and their labels, spelled out byte by byte.
const std::vector<std::uint8_t> kIdxImages = {
    0x00, 0x00, 0x08, 0x03,  // magic
    0x00, 0x00, 0x00, 0x02,  // count
    0x00, 0x00, 0x00, 0x02,  // rows
    0x00, 0x00, 0x00, 0x03,  // cols
    0x00, 0x33, 0x66, 0x99, 0xcc, 0xff,
    0xff, 0x00, 0x80, 0x01, 0x02, 0x03,
};
const std::vector<std::uint8_t> kIdxLabels = {0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 0x07, 0x02};

double mse(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(static_cast<double>(a[i]) - b[i], 2);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("rng streams are deterministic and keyed") {
  Rng a(derive_seed(1, "x", 0));
  Rng b(derive_seed(1, "x", 0));
  Rng c(derive_seed(1, "x", 1));
  Rng d(derive_seed(1, "y", 0));
  const auto va = a.next_u64();
  CHECK(va == b.next_u64());
  CHECK(va != c.next_u64());
  CHECK(va != d.next_u64());
  Rng u(7);
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double x = u.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / 20000) < 0.05);
  CHECK(std::abs(sq / 20000 - 1.0) < 0.05);
  double psum = 0.0;
  for (int i = 0; i < 20000; ++i) psum += static_cast<double>(u.poisson(3.0));
  CHECK(std::abs(psum / 20000 - 3.0) < 0.1);
  for (int i = 0; i < 1000; ++i) CHECK(u.below(7) < 7);
}

TEST_CASE("synthetic datasets") {
  const ImageSet a = generate_dataset(SynthId::A, Split::Train, 203, 5);
  const ImageSet again = generate_dataset(SynthId::A, Split::Train, 203, 5);
  CHECK(a.pixels == again.pixels);
  CHECK(a.labels == again.labels);
  CHECK(a.size() == 203);
  CHECK(a.image_size() == 28 * 28);
  std::map<int, int> counts;
  for (int l : a.labels) ++counts[l];
  CHECK(counts.size() == 10);
  for (const auto& [label, n] : counts) CHECK(std::abs(n * 10 - 203) <= 10);
  for (float p : a.pixels) CHECK((p >= 0.0f && p <= 1.0f));

  const ImageSet test = generate_dataset(SynthId::A, Split::Test, 203, 5);
  CHECK(test.pixels != a.pixels);
  const ImageSet b = generate_dataset(SynthId::B, Split::Train, 203, 5);
  CHECK(b.pixels != a.pixels);
  CHECK_THROWS_AS(generate_dataset(SynthId::A, Split::Train, 9, 1), ValidationError);
  CHECK(parse_synth_id("synthB") == SynthId::B);
  CHECK_THROWS_AS(parse_synth_id("synthC"), ValidationError);
}

TEST_CASE("idx loader parses a hand-built fixture") {
  const auto dir = scratch_dir("idx");
  write_bytes(dir / "img", kIdxImages);
  write_bytes(dir / "lbl", kIdxLabels);
  const ImageSet set = load_idx(dir / "img", dir / "lbl");
  CHECK(set.size() == 2);
  CHECK(set.height == 2);
  CHECK(set.width == 3);
  CHECK(set.labels == std::vector<int>{7, 2});
  CHECK(set.classes == 8);
  CHECK(set.pixels[1] == static_cast<float>(0x33 / 255.0));
  CHECK(set.pixels[5] == 1.0f);
  CHECK(set.pixels[6] == 1.0f);
  CHECK(set.pixels[8] == static_cast<float>(128 / 255.0));

  auto expect_kind = [&](ParseError kind) {
    try {
      load_idx(dir / "img", dir / "lbl");
      FAIL("accepted malformed IDX");
    } catch (const FormatError& e) {
      CHECK(e.kind() == kind);
    }
  };
  auto bad = kIdxImages;
  bad[3] = 0x01;
  write_bytes(dir / "img", bad);
  expect_kind(ParseError::BadMagic);

  write_bytes(dir / "img", kIdxImages);
  auto lbl = kIdxLabels;
  lbl[7] = 0x03;
  lbl.push_back(0x01);
  write_bytes(dir / "lbl", lbl);
  expect_kind(ParseError::CountMismatch);

  write_bytes(dir / "lbl", kIdxLabels);
  write_bytes(dir / "img", std::vector<std::uint8_t>(kIdxImages.begin(), kIdxImages.end() - 2));
  expect_kind(ParseError::TruncatedFile);
}

TEST_CASE("pgm round trip") {
  const auto dir = scratch_dir("pgm");
  const std::vector<std::uint8_t> raster{0, 10, 20, 255, 128, 1};
  write_pgm(dir / "x.pgm", 2, 3, raster);
  const GrayImage img = read_pgm(dir / "x.pgm");
  CHECK(img.height == 2);
  CHECK(img.width == 3);
  CHECK(img.pixels[3] == 1.0f);
  CHECK(img.pixels[1] == 10.0f / 255.0f);
  write_bytes(dir / "bad.pgm", {'P', '2', '\n'});
  CHECK_THROWS_AS(read_pgm(dir / "bad.pgm"), FormatError);
}

TEST_CASE("corruption identities") {
  const ImageSet set = generate_dataset(SynthId::A, Split::Test, 10, 3);
  const auto img = set.image(0);
  const auto same = corrupt_with_parameter(img, 28, 28, CorruptionKind::Contrast, 1.0, 0);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(same[i] == doctest::Approx(img[i]).epsilon(1e-6));

  const auto impulse = corrupt_with_parameter(img, 28, 28, CorruptionKind::ImpulseNoise, 1.0, 42);
  for (float p : impulse) CHECK((p == 0.0f || p == 1.0f));

  std::vector<float> flat(28 * 28, 0.37f);
  for (auto kind : {CorruptionKind::GaussianBlur, CorruptionKind::MotionBlur, CorruptionKind::Pixelate}) {
    const auto out = corrupt(flat, 28, 28, {kind, 5, 0});
    for (float p : out) CHECK(p == doctest::Approx(0.37f).epsilon(1e-6));
  }
  const auto bright = corrupt(flat, 28, 28, {CorruptionKind::Brightness, 5, 0});
  CHECK(bright[0] == doctest::Approx(0.67f));

  CHECK_THROWS_AS(corrupt(img, 28, 28, {CorruptionKind::Contrast, 0, 0}), ValidationError);
  CHECK_THROWS_AS(corrupt(img, 28, 28, {CorruptionKind::Contrast, 6, 0}), ValidationError);
  CHECK_THROWS_AS(parse_corruption("fog"), ValidationError);
  for (auto k : kAllCorruptions) CHECK(parse_corruption(corruption_name(k)) == k);
}

TEST_CASE("corruptions are seeded and clamped") {
  const ImageSet set = generate_dataset(SynthId::A, Split::Test, 10, 3);
  for (auto kind : kAllCorruptions) {
    CAPTURE(corruption_name(kind));
    const auto a = corrupt(set.image(1), 28, 28, {kind, 3, 9});
    const auto b = corrupt(set.image(1), 28, 28, {kind, 3, 9});
    CHECK(a == b);
    for (float p : a) CHECK((p >= 0.0f && p <= 1.0f));
  }
  const auto n1 = corrupt(set.image(1), 28, 28, {CorruptionKind::GaussianNoise, 3, 1});
  const auto n2 = corrupt(set.image(1), 28, 28, {CorruptionKind::GaussianNoise, 3, 2});
  CHECK(n1 != n2);
}

TEST_CASE("distortion is non-decreasing in severity") {
  const ImageSet probe = generate_dataset(SynthId::A, Split::Test, 40, 11);
  for (auto kind : kAllCorruptions) {
    CAPTURE(corruption_name(kind));
    double previous = 0.0;
    for (int s = 1; s <= 5; ++s) {
      double total = 0.0;
      for (std::size_t i = 0; i < probe.size(); ++i) {
        total += mse(probe.image(i), corrupt(probe.image(i), 28, 28, {kind, s, 100 + i}));
      }
      CHECK(total >= previous);
      previous = total;
    }
    CHECK(previous > 0.0);
  }
}
