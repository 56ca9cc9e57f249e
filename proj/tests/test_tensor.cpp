#include <doctest.h>

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "rws/errors.hpp"
#include "rws/rng.hpp"
#include "rws/tensor.hpp"

using namespace rws;
using boost::multiprecision::cpp_rational;

namespace {

// Every finite float is a dyadic rational, so this sum is exact.
cpp_rational exact_dot(const std::vector<float>& a, const std::vector<float>& b) {
  cpp_rational sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += cpp_rational(static_cast<double>(a[i])) * cpp_rational(static_cast<double>(b[i]));
  return sum;
}

std::vector<float> draw(Rng& rng, std::size_t n, double spread) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal() * std::pow(10.0, spread * (rng.uniform() - 0.5)));
  return v;
}

}  // namespace

TEST_CASE("dot matches an exact rational sum") {
  Rng rng(derive_seed(11, "dot"));
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.below(500);
    const auto a = draw(rng, n, 6.0);
    const auto b = draw(rng, n, 6.0);
    const double exact = exact_dot(a, b).convert_to<double>();
    cpp_rational abs_sum = 0;
    for (std::size_t i = 0; i < n; ++i) abs_sum += abs(cpp_rational(static_cast<double>(a[i])) * cpp_rational(static_cast<double>(b[i])));
    const double scale = abs_sum.convert_to<double>();
    CHECK(std::abs(dot(a, b) - exact) <= 4 * std::numeric_limits<double>::epsilon() * scale);
  }
}

TEST_CASE("l2 norm matches the rational oracle and survives cancellation") {
  Rng rng(derive_seed(12, "l2"));
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = draw(rng, 1 + rng.below(300), 4.0);
    const double exact = std::sqrt(exact_dot(a, a).convert_to<double>());
    CHECK(l2_norm(a) == doctest::Approx(exact).epsilon(1e-14));
  }
  // Naive float64 summation loses the small terms here.
  std::vector<float> big{1e8f, 1.0f, -1e8f, 1.0f};
  std::vector<float> ones{1.0f, 1.0f, 1.0f, 1.0f};
  CHECK(dot(big, ones) == 2.0);
}

TEST_CASE("cosine edge cases") {
  std::vector<float> z(4, 0.0f);
  std::vector<float> a{1, 2, 3, 4};
  CHECK(cosine(z, a) == 0.0);
  CHECK(cosine(a, a) == doctest::Approx(1.0));
  std::vector<float> neg{-1, -2, -3, -4};
  CHECK(cosine(a, neg) == doctest::Approx(-1.0));
  CHECK(std::abs(cosine(a, a)) <= 1.0);
}

TEST_CASE("axpy linearity and symmetry of dot") {
  Rng rng(derive_seed(13, "axpy"));
  const auto x = draw(rng, 64, 2.0);
  const auto y = draw(rng, 64, 2.0);
  CHECK(dot(x, y) == dot(y, x));
  const float a = 0.3f;
  const float b = 0.7f;
  const auto lhs = axpy(a + b, x, y);
  const auto rhs = axpy(a, x, axpy(b, x, y));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = std::max(std::abs(lhs[i]), std::abs(rhs[i]));
    CHECK(std::abs(lhs[i] - rhs[i]) <= 1e-6 * std::max(m, 1.0));
  }
  const auto same = axpy(0.0f, x, y);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(same[i] == y[i]);
}

TEST_CASE("flatten and unflatten round trip") {
  std::vector<NamedTensor> ts;
  ts.push_back({"g.a", Tensor::from_floats({2, 3}, {1, 2, 3, 4, 5, 6})});
  ts.push_back({"g.b", Tensor::from_floats({3}, {7, 8, 9}, DType::F16)});
  const FlatVector flat = flatten(std::span<const NamedTensor>(ts));
  REQUIRE(flat.size() == 9);
  CHECK(flat.origin.size() == 2);
  CHECK(flat.origin[1].name == "g.b");
  std::vector<const NamedTensor*> templates{&ts[0], &ts[1]};
  const auto back = unflatten(flat, templates);
  REQUIRE(back.size() == 2);
  CHECK(back[0].tensor.identical(ts[0].tensor));
  CHECK(back[1].tensor.identical(ts[1].tensor));
  FlatVector shortv = flat;
  shortv.values.pop_back();
  CHECK_THROWS_AS(unflatten(shortv, templates), DimensionError);
}

TEST_CASE("tensor dtypes") {
  CHECK(dtype_width(DType::F32) == 4);
  CHECK(dtype_width(DType::F16) == 2);
  CHECK(dtype_width(DType::I8) == 1);
  CHECK(dtype_width(DType::I16) == 2);
  Tensor h(DType::F16, {1});
  h.set(0, 0.1);
  CHECK(h.get(0) == doctest::Approx(0.0999755859375));
  CHECK(round_to_half(65504.0f) == 65504.0f);
  Tensor i8(DType::I8, {2});
  i8.set(0, -127);
  CHECK(i8.get(0) == -127);
  CHECK_THROWS(i8.set(1, 128));
  CHECK_THROWS(Tensor::from_floats({2, 2}, {1, 2, 3}));
}
