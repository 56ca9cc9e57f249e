#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rws/checkpoint.hpp"
#include "rws/signature.hpp"
#include "rws/tensor.hpp"

namespace rws {

// Symmetric per-tensor quantization: x ~= payload * scale.
struct QuantizedTensor {
  Tensor payload;
  float scale = 0.0f;
};

std::int32_t quant_max(int bits);

// Scale is max|x| / qmax rounded up onto a grid where q * scale is exact in float32.
float grid_scale(double ideal, int bits);

QuantizedTensor quantize_tensor(const Tensor& source, int bits);
Tensor dequantize_tensor(const QuantizedTensor& q);

// Refuses already-quantized input and non-finite values.
SignatureFile quantize(const SignatureFile& sig, int bits);
// Refuses unquantized input.
SignatureFile dequantize(const SignatureFile& sig);

struct StorageRow {
  std::string configuration;
  std::uint64_t bytes = 0;
  double ratio = 0.0;
};

/*
 * Storage for the standard model alone, the model plus the signature set at
 * 32/16/8 bits, and a hypothetical ensemble keeping one full float32 model
 * per signature. Ratios are relative to the standard model's bytes.
 */
std::vector<StorageRow> storage_report(const Checkpoint& std_model, const std::vector<SignatureFile>& sigs);

}  // namespace rws
