#include "rws/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rws/errors.hpp"

namespace rws {

std::int32_t quant_max(int bits) {
  if (bits != 8 && bits != 16) throw ValidationError("quantization supports 8 or 16 bits");
  return (1 << (bits - 1)) - 1;
}

/*
 * Smallest float32 >= ideal whose significand fits in 24 - bits bits. Every
 * q * scale with |q| <= qmax is then exact in float32, so dequantized values
 * land exactly on the grid and stay within scale / 2 of the source.
 */
float grid_scale(double ideal, int bits) {
  int exponent = 0;
  std::frexp(ideal, &exponent);
  const int keep = 24 - bits;
  double unit = std::ldexp(1.0, exponent - keep);
  unit = std::max(unit, static_cast<double>(std::numeric_limits<float>::denorm_min()));
  return static_cast<float>(std::ceil(ideal / unit) * unit);
}

QuantizedTensor quantize_tensor(const Tensor& source, int bits) {
  const std::int32_t qmax = quant_max(bits);
  const auto values = source.to_floats();
  double max_abs = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) throw ValidationError("cannot quantize non-finite values");
    max_abs = std::max(max_abs, std::fabs(static_cast<double>(v)));
  }
  QuantizedTensor out;
  const DType dtype = bits == 8 ? DType::I8 : DType::I16;
  if (max_abs == 0.0) {
    out.payload = Tensor(dtype, source.shape());
    return out;
  }
  const float scale = grid_scale(max_abs / qmax, bits);
  const double s = scale;
  std::vector<std::int32_t> q(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double r = std::round(static_cast<double>(values[i]) / s);
    q[i] = static_cast<std::int32_t>(std::clamp(r, -static_cast<double>(qmax), static_cast<double>(qmax)));
  }
  out.payload = Tensor::from_ints(dtype, source.shape(), std::move(q));
  out.scale = scale;
  return out;
}

Tensor dequantize_tensor(const QuantizedTensor& q) {
  const auto ints = q.payload.ints();
  std::vector<float> values(ints.size());
  const double s = q.scale;
  for (std::size_t i = 0; i < ints.size(); ++i) values[i] = static_cast<float>(ints[i] * s);
  return Tensor::from_floats(q.payload.shape(), std::move(values));
}

SignatureFile quantize(const SignatureFile& sig, int bits) {
  if (sig.quant_bits() != 0) throw ValidationError("signature is already quantized");
  quant_max(bits);
  Checkpoint body;
  body.layer_order = sig.body().layer_order;
  body.metadata = sig.body().metadata;
  body.metadata["quant_bits"] = std::to_string(bits);
  for (const auto& t : sig.body().tensors) {
    QuantizedTensor q = quantize_tensor(t.tensor, bits);
    body.tensors.push_back({t.name, std::move(q.payload)});
    body.tensors.push_back({t.name + "#scale", Tensor::from_floats({1}, {q.scale})});
  }
  return SignatureFile(std::move(body));
}

SignatureFile dequantize(const SignatureFile& sig) {
  if (sig.quant_bits() == 0) throw ValidationError("signature is not quantized");
  Checkpoint body;
  body.layer_order = sig.body().layer_order;
  body.metadata = sig.body().metadata;
  body.metadata["quant_bits"] = "0";
  for (const auto& t : sig.body().tensors) {
    if (t.name.ends_with("#scale")) continue;
    const Tensor* scale = sig.body().find(t.name + "#scale");
    if (!scale) throw FormatError(ParseError::MissingScale, "missing scale companion for '" + t.name + "'");
    body.tensors.push_back({t.name, dequantize_tensor({t.tensor, scale->floats()[0]})});
  }
  return SignatureFile(std::move(body));
}

std::vector<StorageRow> storage_report(const Checkpoint& std_model, const std::vector<SignatureFile>& sigs) {
  const std::uint64_t base = storage_bytes(std_model);
  std::vector<StorageRow> rows;
  auto add = [&](std::string name, std::uint64_t bytes) {
    rows.push_back({std::move(name), bytes, base == 0 ? 0.0 : static_cast<double>(bytes) / static_cast<double>(base)});
  };
  add("standard", base);
  const std::string count = std::to_string(sigs.size());

  bool all_float = true;
  for (const auto& s : sigs) all_float = all_float && s.quant_bits() == 0;
  if (all_float) {
    for (int bits : {0, 16, 8}) {
      std::uint64_t total = base;
      for (const auto& s : sigs) total += storage_bytes(bits == 0 ? s.body() : quantize(s, bits).body());
      add("standard+" + count + "sig@" + (bits == 0 ? std::string("f32") : std::to_string(bits) + "bit"), total);
    }
  } else {
    std::uint64_t total = base;
    for (const auto& s : sigs) total += storage_bytes(s.body());
    add("standard+" + count + "sig@as-stored", total);
  }
  std::uint64_t full_f32 = 0;
  for (const auto& t : std_model.tensors) full_f32 += t.tensor.numel() * 4;
  add("ensemble:standard+" + count + "full-f32", base + full_f32 * sigs.size());
  return rows;
}

}  // namespace rws
