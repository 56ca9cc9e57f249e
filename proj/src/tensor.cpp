#include "rws/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rws/errors.hpp"

namespace rws {

std::size_t dtype_width(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F16: return 2;
    case DType::I8: return 1;
    case DType::I16: return 2;
  }
  return 0;
}

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::F32: return "F32";
    case DType::F16: return "F16";
    case DType::I8: return "I8";
    case DType::I16: return "I16";
  }
  return "?";
}

bool is_integer(DType dtype) { return dtype == DType::I8 || dtype == DType::I16; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ValidationError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d <= 0) throw ValidationError("tensor dimensions must be positive");
  }
}

std::int32_t int_limit(DType dtype) { return dtype == DType::I8 ? 127 : 32767; }

}  // namespace

float round_to_half(float value) { return static_cast<float>(Eigen::half(value)); }

Tensor::Tensor(DType dtype, Shape shape) : dtype_(dtype), shape_(std::move(shape)) {
  check_shape(shape_);
  if (is_integer(dtype_)) {
    i_.assign(numel(), 0);
  } else {
    f_.assign(numel(), 0.0f);
  }
}

Tensor Tensor::from_floats(Shape shape, std::vector<float> values, DType dtype) {
  if (is_integer(dtype)) throw ValidationError("from_floats requires a float dtype");
  check_shape(shape);
  if (values.size() != shape_numel(shape)) throw DimensionError("tensor data length does not match shape");
  Tensor t;
  t.dtype_ = dtype;
  t.shape_ = std::move(shape);
  t.f_ = std::move(values);
  if (dtype == DType::F16) {
    for (auto& v : t.f_) v = round_to_half(v);
  }
  return t;
}

Tensor Tensor::from_ints(DType dtype, Shape shape, std::vector<std::int32_t> values) {
  if (!is_integer(dtype)) throw ValidationError("from_ints requires an integer dtype");
  check_shape(shape);
  if (values.size() != shape_numel(shape)) throw DimensionError("tensor data length does not match shape");
  // Storage range, not the symmetric quantization range.
  const std::int32_t hi = int_limit(dtype);
  for (auto v : values) {
    if (v < -hi - 1 || v > hi) throw ValidationError("integer value out of range for dtype");
  }
  Tensor t;
  t.dtype_ = dtype;
  t.shape_ = std::move(shape);
  t.i_ = std::move(values);
  return t;
}

std::span<const float> Tensor::floats() const {
  if (is_integer(dtype_)) throw ValidationError("floats() on an integer tensor");
  return f_;
}

std::span<const std::int32_t> Tensor::ints() const {
  if (!is_integer(dtype_)) throw ValidationError("ints() on a float tensor");
  return i_;
}

void Tensor::set(std::size_t i, double value) {
  if (is_integer(dtype_)) {
    const double r = std::round(value);
    const std::int32_t hi = int_limit(dtype_);
    if (r != value || r < -hi - 1 || r > hi) throw ValidationError("value not representable in integer dtype");
    i_.at(i) = static_cast<std::int32_t>(r);
  } else {
    float f = static_cast<float>(value);
    f_.at(i) = dtype_ == DType::F16 ? round_to_half(f) : f;
  }
}

double Tensor::get(std::size_t i) const {
  return is_integer(dtype_) ? static_cast<double>(i_.at(i)) : static_cast<double>(f_.at(i));
}

std::vector<float> Tensor::to_floats() const {
  if (!is_integer(dtype_)) return f_;
  std::vector<float> out(i_.size());
  std::transform(i_.begin(), i_.end(), out.begin(), [](std::int32_t v) { return static_cast<float>(v); });
  return out;
}

bool Tensor::identical(const Tensor& other) const {
  if (dtype_ != other.dtype_ || shape_ != other.shape_) return false;
  if (is_integer(dtype_)) return i_ == other.i_;
  return f_.size() == other.f_.size() &&
         std::memcmp(f_.data(), other.f_.data(), f_.size() * sizeof(float)) == 0;
}

FlatVector flatten(std::span<const NamedTensor* const> tensors) {
  FlatVector out;
  std::size_t total = 0;
  for (const auto* t : tensors) total += t->tensor.numel();
  out.values.reserve(total);
  for (const auto* t : tensors) {
    auto values = t->tensor.to_floats();
    out.values.insert(out.values.end(), values.begin(), values.end());
    out.origin.push_back({t->name, values.size()});
  }
  return out;
}

FlatVector flatten(std::span<const NamedTensor> tensors) {
  std::vector<const NamedTensor*> ptrs;
  for (const auto& t : tensors) ptrs.push_back(&t);
  return flatten(std::span<const NamedTensor* const>(ptrs));
}

std::vector<NamedTensor> unflatten(const FlatVector& flat, std::span<const NamedTensor* const> templates) {
  std::size_t total = 0;
  for (const auto* t : templates) total += t->tensor.numel();
  if (total != flat.values.size()) throw DimensionError("flat vector length does not match templates");
  std::vector<NamedTensor> out;
  out.reserve(templates.size());
  std::size_t offset = 0;
  for (const auto* t : templates) {
    Tensor tensor(t->tensor.dtype(), t->tensor.shape());
    for (std::size_t i = 0; i < tensor.numel(); ++i) tensor.set(i, flat.values[offset + i]);
    offset += tensor.numel();
    out.push_back({t->name, std::move(tensor)});
  }
  return out;
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::fabs(sum_) >= std::fabs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  CompensatedSum acc;
  // float*float is exact in double.
  for (std::size_t i = 0; i < a.size(); ++i) acc.add(static_cast<double>(a[i]) * static_cast<double>(b[i]));
  return acc.value();
}

double l2_norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::vector<float> axpy(float alpha, std::span<const float> x, std::span<const float> y) {
  if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
  std::vector<float> out(y.begin(), y.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double step = static_cast<double>(alpha) * static_cast<double>(x[i]);
    if (step != 0.0) out[i] = static_cast<float>(static_cast<double>(y[i]) + step);
  }
  return out;
}

FlatVector axpy(float alpha, const FlatVector& x, const FlatVector& y) {
  return FlatVector{axpy(alpha, std::span<const float>(x.values), std::span<const float>(y.values)), y.origin};
}

}  // namespace rws
