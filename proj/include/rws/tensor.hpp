#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rws {

enum class DType { F32, F16, I8, I16 };

std::size_t dtype_width(DType dtype);
std::string_view dtype_name(DType dtype);
bool is_integer(DType dtype);

using Shape = std::vector<std::int64_t>;

std::size_t shape_numel(const Shape& shape);

/*
 * Dense row-major tensor.
 *
 * Float dtypes keep their values as float32. F16 is a storage format only:
 * values are rounded to half precision when assigned, so the in-memory
 * values are exactly what gets written to disk. Integer dtypes keep their
 * values in an int32 buffer, range-checked against the dtype.
 */
class Tensor {
 public:
  Tensor() = default;
  // Zero-filled tensor.
  Tensor(DType dtype, Shape shape);

  static Tensor from_floats(Shape shape, std::vector<float> values, DType dtype = DType::F32);
  static Tensor from_ints(DType dtype, Shape shape, std::vector<std::int32_t> values);

  DType dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return shape_numel(shape_); }
  std::size_t byte_size() const { return numel() * dtype_width(dtype_); }

  // Only valid for float dtypes.
  std::span<const float> floats() const;
  // Only valid for integer dtypes.
  std::span<const std::int32_t> ints() const;

  // Writes value i, rounding to F16 or range-checking integers as needed.
  void set(std::size_t i, double value);
  double get(std::size_t i) const;

  // Element values widened to float32, whatever the dtype.
  std::vector<float> to_floats() const;

  // Bitwise equality of dtype, shape and payload.
  bool identical(const Tensor& other) const;

 private:
  DType dtype_ = DType::F32;
  Shape shape_;
  std::vector<float> f_;
  std::vector<std::int32_t> i_;
};

float round_to_half(float value);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Segment {
  std::string name;
  std::size_t length = 0;
};

struct FlatVector {
  std::vector<float> values;
  std::vector<Segment> origin;

  std::size_t size() const { return values.size(); }
};

FlatVector flatten(std::span<const NamedTensor> tensors);
FlatVector flatten(std::span<const NamedTensor* const> tensors);

// Splits `flat` back into tensors shaped and typed like `templates`.
std::vector<NamedTensor> unflatten(const FlatVector& flat, std::span<const NamedTensor* const> templates);

// Reductions accumulate in float64 with compensated summation.
double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> a);
// Returns 0 when either norm is exactly 0.
double cosine(std::span<const float> a, std::span<const float> b);
std::vector<float> axpy(float alpha, std::span<const float> x, std::span<const float> y);

inline double dot(const FlatVector& a, const FlatVector& b) { return dot(a.values, b.values); }
inline double l2_norm(const FlatVector& a) { return l2_norm(a.values); }
inline double cosine(const FlatVector& a, const FlatVector& b) { return cosine(a.values, b.values); }
FlatVector axpy(float alpha, const FlatVector& x, const FlatVector& y);

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace rws
