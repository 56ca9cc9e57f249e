#include <doctest.h>

#include <cmath>

#include "rws/projection.hpp"
#include "rws/quantizer.hpp"
#include "rws/signature.hpp"
#include "support.hpp"

using namespace rws;
using namespace rws::testing;

TEST_CASE("property: canonical serialization") {
  for (std::uint64_t seed = 100; seed < 160; ++seed) {
    const Checkpoint a = random_checkpoint(seed);
    const Checkpoint b = parse_checkpoint(serialize_checkpoint(a));
    CHECK(serialize_checkpoint(b) == serialize_checkpoint(a));
    CHECK(storage_bytes(b) == storage_bytes(a));
    CHECK(content_fingerprint(a) == content_fingerprint(b));
  }
}

TEST_CASE("property: cosine is bounded, symmetric and scale invariant") {
  Rng rng(derive_seed(1, "cos"));
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<float> a(n);
    std::vector<float> b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<float>(rng.normal());
      b[i] = static_cast<float>(rng.normal());
    }
    const double c = cosine(a, b);
    CHECK(std::abs(c) <= 1.0);
    CHECK(c == cosine(b, a));
    std::vector<float> scaled = a;
    for (auto& x : scaled) x *= 8.0f;
    CHECK(cosine(scaled, b) == doctest::Approx(c).epsilon(1e-12));
  }
}

TEST_CASE("property: residuals are orthogonal to the base") {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const NetSpec spec = seed % 2 ? tiny_mlp() : tiny_convnet();
    const Checkpoint init = init_checkpoint(spec, seed);
    const Checkpoint std_model = jitter(init, 0.02 * static_cast<double>(seed), seed + 1);
    // Robust delta shares a component with the base delta.
    Checkpoint robust = jitter(init, 0.03, seed + 2);
    for (std::size_t t = 0; t < robust.tensors.size(); ++t) {
      auto& r = robust.tensors[t].tensor;
      for (std::size_t i = 0; i < r.numel(); ++i) {
        r.set(i, r.get(i) + 0.7 * (std_model.tensors[t].tensor.get(i) - init.tensors[t].tensor.get(i)));
      }
    }
    const WeightDelta base = delta(std_model, init);
    const SignatureFile v = extract_rws(std_model, init, robust, {ProjectionMode::Vector, 4, "x"});
    for (const auto& g : v.groups()) CHECK(std::abs(cosine(flatten(v.body().group_tensors(g)), base.group(g))) <= 1e-6);

    const SignatureFile m = extract_rws(std_model, init, robust, {ProjectionMode::Matrix, 4, "x"});
    for (const auto& nt : m.body().tensors) {
      // Each column of the base matrix is (nearly) orthogonal to every residual column.
      const auto& shape = nt.tensor.shape();
      const std::size_t rows = static_cast<std::size_t>(shape[0]);
      const std::size_t cols = nt.tensor.numel() / rows;
      if (rows <= cols) continue;  // full row rank: the residual is ridge-limited, not orthogonal
      std::vector<float> bcol(rows);
      std::vector<float> rcol(rows);
      const Tensor& s = std_model.at(nt.name);
      const Tensor& i0 = init.at(nt.name);
      for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t k = 0; k < cols; ++k) {
          for (std::size_t r = 0; r < rows; ++r) {
            bcol[r] = static_cast<float>(s.get(r * cols + j) - i0.get(r * cols + j));
            rcol[r] = static_cast<float>(nt.tensor.get(r * cols + k));
          }
          CHECK(std::abs(cosine(bcol, rcol)) <= 1e-4);
        }
      }
    }
  }
}

TEST_CASE("property: patching is linear in alpha") {
  Rng rng(derive_seed(2, "alpha"));
  const Checkpoint init = init_checkpoint(tiny_mlp(), 4);
  const Checkpoint std_model = jitter(init, 0.05, 5);
  const SignatureFile s = extract_rws(std_model, init, jitter(init, 0.05, 6), {ProjectionMode::Vector, 3, "x"});
  for (int trial = 0; trial < 30; ++trial) {
    const float a = static_cast<float>(rng.uniform() * 2.0 - 0.5);
    const float b = static_cast<float>(rng.uniform() * 2.0 - 0.5);
    const Checkpoint split = patch(std_model, PatchRecipe{{{s, a}, {s, b}}, {}});
    const Checkpoint whole = patch(std_model, PatchRecipe{{{s, a + b}}, {}});
    // Elementwise differences stay within float32 rounding of the summed terms.
    for (std::size_t t = 0; t < split.tensors.size(); ++t) {
      const auto& name = split.tensors[t].name;
      const Tensor* sig = s.body().find(name);
      for (std::size_t i = 0; i < split.tensors[t].tensor.numel(); ++i) {
        const double x = split.tensors[t].tensor.get(i);
        const double y = whole.tensors[t].tensor.get(i);
        const double term = sig ? (std::abs(a) + std::abs(b)) * std::abs(sig->get(i)) : 0.0;
        CHECK(std::abs(x - y) <= 1e-6 * (std::abs(std_model.tensors[t].tensor.get(i)) + term) + 1e-12);
      }
    }
  }
}

TEST_CASE("property: quantization bound and idempotent requantization") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(derive_seed(seed, "prop_quant"));
    std::vector<float> v(1 + rng.below(200));
    for (auto& x : v) x = static_cast<float>(rng.normal() * std::exp(rng.normal() * 3));
    const Tensor t = Tensor::from_floats({static_cast<std::int64_t>(v.size())}, v);
    for (int bits : {8, 16}) {
      const QuantizedTensor q = quantize_tensor(t, bits);
      const Tensor back = dequantize_tensor(q);
      for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(back.get(i) - v[i]) <= q.scale / 2.0);
      // Values already on the grid survive another round exactly.
      const Tensor again = dequantize_tensor(quantize_tensor(back, bits));
      CHECK(again.identical(back));
    }
  }
}

TEST_CASE("property: shape compatibility is an equivalence on one architecture") {
  std::vector<Checkpoint> family;
  for (std::uint64_t s = 0; s < 4; ++s) family.push_back(init_checkpoint(tiny_mlp(), s));
  family.push_back(init_checkpoint(tiny_convnet(), 0));
  for (const auto& a : family) {
    CHECK(shape_compatible(a, a));
    for (const auto& b : family) {
      CHECK(shape_compatible(a, b) == shape_compatible(b, a));
      for (const auto& c : family) {
        if (shape_compatible(a, b) && shape_compatible(b, c)) CHECK(shape_compatible(a, c));
      }
    }
  }
}
