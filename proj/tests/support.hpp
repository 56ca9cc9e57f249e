#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rws/checkpoint.hpp"
#include "rws/network.hpp"
#include "rws/rng.hpp"

namespace rws::testing {

inline NetSpec tiny_mlp() {
  NetSpec s = NetSpec::mlp();
  s.height = 6;
  s.width = 6;
  s.classes = 3;
  s.hidden = {5, 4, 4};
  return s;
}

inline NetSpec tiny_convnet() {
  NetSpec s = NetSpec::convnet();
  s.height = 12;
  s.width = 12;
  s.classes = 3;
  s.conv_channels = {2, 3};
  s.hidden = {4};
  return s;
}

// Copy of `base` with every float element moved by scale * N(0, 1).
inline Checkpoint jitter(const Checkpoint& base, double scale, std::uint64_t seed) {
  Checkpoint out = base;
  Rng rng(derive_seed(seed, "jitter"));
  for (auto& nt : out.tensors) {
    for (std::size_t i = 0; i < nt.tensor.numel(); ++i) nt.tensor.set(i, nt.tensor.get(i) + scale * rng.normal());
  }
  return out;
}

// Random groups, dtypes, shapes, values and metadata.
inline Checkpoint random_checkpoint(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "random_checkpoint"));
  Checkpoint c;
  const int groups = 1 + static_cast<int>(rng.below(4));
  const DType dtypes[] = {DType::F32, DType::F16, DType::I8, DType::I16};
  for (int g = 0; g < groups; ++g) {
    const std::string group = "layer" + std::to_string(g + 1);
    c.layer_order.push_back(group);
    const int count = 1 + static_cast<int>(rng.below(3));
    for (int t = 0; t < count; ++t) {
      Shape shape;
      const int rank = 1 + static_cast<int>(rng.below(3));
      for (int d = 0; d < rank; ++d) shape.push_back(1 + static_cast<std::int64_t>(rng.below(5)));
      const DType dtype = dtypes[rng.below(4)];
      Tensor tensor(dtype, shape);
      for (std::size_t i = 0; i < tensor.numel(); ++i) {
        if (is_integer(dtype)) {
          tensor.set(i, static_cast<double>(static_cast<std::int64_t>(rng.below(255)) - 127));
        } else {
          tensor.set(i, rng.normal() * std::pow(10.0, static_cast<double>(rng.below(7)) - 3.0));
        }
      }
      c.tensors.push_back({group + ".t" + std::to_string(t), std::move(tensor)});
    }
  }
  const int keys = static_cast<int>(rng.below(4));
  for (int k = 0; k < keys; ++k) c.metadata["key" + std::to_string(rng.below(100))] = std::to_string(rng.next_u64());
  return c;
}

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rws_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(RWS_FIXTURE_DIR) / name;
}

inline double max_relative_diff(const Checkpoint& a, const Checkpoint& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.tensors.size(); ++t) {
    const auto& x = a.tensors[t].tensor;
    const auto& y = b.tensors[t].tensor;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double d = std::abs(x.get(i) - y.get(i));
      const double m = std::max(std::abs(x.get(i)), std::abs(y.get(i)));
      if (d > 0) worst = std::max(worst, m > 0 ? d / m : d);
    }
  }
  return worst;
}

}  // namespace rws::testing
