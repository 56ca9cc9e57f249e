#include "rws/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rws/errors.hpp"
#include "rws/rng.hpp"

namespace rws {

namespace {

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  for (const auto& part : split_list(text)) out.push_back(std::stoi(part));
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::vector<std::string> parts;
  for (int x : v) parts.push_back(std::to_string(x));
  return join_list(parts);
}

}  // namespace

NetSpec NetSpec::convnet() { return NetSpec{}; }

NetSpec NetSpec::mlp() {
  NetSpec spec;
  spec.architecture = Architecture::Mlp;
  spec.conv_channels.clear();
  spec.hidden = {64, 32, 32};
  return spec;
}

std::vector<std::string> NetSpec::layer_order() const {
  std::vector<std::string> out;
  if (architecture == Architecture::ConvNet) {
    for (std::size_t i = 0; i < conv_channels.size(); ++i) out.push_back("conv" + std::to_string(i + 1));
  }
  for (std::size_t i = 0; i <= hidden.size(); ++i) out.push_back("fc" + std::to_string(i + 1));
  return out;
}

void NetSpec::validate() const {
  if (height <= 0 || width <= 0 || classes < 2) throw ValidationError("invalid network input shape or class count");
  if (layer_order().size() < 4) throw ValidationError("network needs at least 4 layer groups");
  for (int h : hidden) {
    if (h <= 0) throw ValidationError("hidden sizes must be positive");
  }
  if (architecture == Architecture::ConvNet) {
    int h = height;
    int w = width;
    for (int c : conv_channels) {
      if (c <= 0) throw ValidationError("conv channels must be positive");
      h = (h - kernel + 1) / 2;
      w = (w - kernel + 1) / 2;
      if (h <= 0 || w <= 0) throw ValidationError("input too small for the conv stack");
    }
  }
}

void NetSpec::write_metadata(Checkpoint& ckpt) const {
  ckpt.metadata["arch"] = architecture == Architecture::ConvNet ? "convnet" : "mlp";
  ckpt.metadata["arch.input"] = std::to_string(height) + "," + std::to_string(width);
  ckpt.metadata["arch.classes"] = std::to_string(classes);
  ckpt.metadata["arch.conv"] = join_ints(conv_channels);
  ckpt.metadata["arch.kernel"] = std::to_string(kernel);
  ckpt.metadata["arch.hidden"] = join_ints(hidden);
  ckpt.metadata["arch.activation"] = activation == Activation::Relu ? "relu" : "identity";
}

NetSpec NetSpec::from_checkpoint(const Checkpoint& ckpt) {
  NetSpec spec;
  try {
    const std::string arch = ckpt.meta("arch");
    if (arch != "convnet" && arch != "mlp") throw ValidationError("unknown architecture '" + arch + "'");
    spec.architecture = arch == "convnet" ? Architecture::ConvNet : Architecture::Mlp;
    const auto input = parse_ints(ckpt.meta("arch.input"));
    if (input.size() != 2) throw ValidationError("arch.input must be H,W");
    spec.height = input[0];
    spec.width = input[1];
    spec.classes = std::stoi(ckpt.meta("arch.classes"));
    spec.conv_channels = parse_ints(ckpt.meta("arch.conv"));
    spec.kernel = std::stoi(ckpt.meta("arch.kernel"));
    spec.hidden = parse_ints(ckpt.meta("arch.hidden"));
    spec.activation = ckpt.meta("arch.activation") == "identity" ? Activation::Identity : Activation::Relu;
  } catch (const std::logic_error& e) {
    throw ValidationError(std::string("checkpoint is not a desk-trainer model: ") + e.what());
  }
  spec.validate();
  if (spec.layer_order() != ckpt.layer_order) throw ValidationError("checkpoint layer_order does not match its architecture");
  return spec;
}

template <typename T>
Network<T>::Network(const NetSpec& spec) : spec_(spec) {
  spec_.validate();
  std::size_t offset = 0;
  auto add_block = [&](const std::string& name, Shape shape) {
    ParamBlock b{name, shape, offset, shape_numel(shape)};
    offset += b.size;
    blocks_.push_back(std::move(b));
    return blocks_.back().offset;
  };
  int c = 1;
  int h = spec_.height;
  int w = spec_.width;
  const auto order = spec_.layer_order();
  std::size_t g = 0;
  if (spec_.architecture == Architecture::ConvNet) {
    for (int out_c : spec_.conv_channels) {
      Layer l;
      l.conv = true;
      l.pool = true;
      l.activate = spec_.activation == Activation::Relu;
      l.group = order[g++];
      l.in_c = c, l.in_h = h, l.in_w = w;
      l.out_c = out_c, l.out_h = h - spec_.kernel + 1, l.out_w = w - spec_.kernel + 1;
      l.pool_h = l.out_h / 2, l.pool_w = l.out_w / 2;
      l.weight = add_block(l.group + ".weight", {out_c, c, spec_.kernel, spec_.kernel});
      l.bias = add_block(l.group + ".bias", {out_c});
      c = out_c, h = l.pool_h, w = l.pool_w;
      layers_.push_back(l);
    }
  }
  int in = c * h * w;
  std::vector<int> widths = spec_.hidden;
  widths.push_back(spec_.classes);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    Layer l;
    l.activate = i + 1 < widths.size() && spec_.activation == Activation::Relu;
    l.group = order[g++];
    l.in_c = in;
    l.out_c = widths[i];
    l.weight = add_block(l.group + ".weight", {widths[i], in});
    l.bias = add_block(l.group + ".bias", {widths[i]});
    in = widths[i];
    layers_.push_back(l);
  }
  params_.assign(offset, T(0));
}

template <typename T>
void Network<T>::load(const Checkpoint& ckpt) {
  for (const auto& b : blocks_) {
    const Tensor* t = ckpt.find(b.name);
    if (!t || t->shape() != b.shape) throw ArchitectureMismatch("checkpoint lacks tensor '" + b.name + "' of the expected shape");
    const auto values = t->to_floats();
    std::copy(values.begin(), values.end(), params_.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
}

template <typename T>
void Network<T>::store(Checkpoint& ckpt) const {
  for (const auto& b : blocks_) {
    Tensor* t = ckpt.find(b.name);
    if (!t || t->shape() != b.shape) throw ArchitectureMismatch("checkpoint lacks tensor '" + b.name + "' of the expected shape");
    for (std::size_t i = 0; i < b.size; ++i) t->set(i, static_cast<double>(params_[b.offset + i]));
  }
}

template <typename T>
bool Network<T>::Trace::same_pattern(const Trace& other) const {
  if (argmax != other.argmax || pre.size() != other.pre.size()) return false;
  for (std::size_t l = 0; l < pre.size(); ++l) {
    for (std::size_t i = 0; i < pre[l].size(); ++i) {
      if ((pre[l][i] > T(0)) != (other.pre[l][i] > T(0))) return false;
    }
  }
  return true;
}

template <typename T>
void Network<T>::forward(std::span<const float> image, Trace& trace) const {
  if (image.size() != static_cast<std::size_t>(spec_.height) * spec_.width) {
    throw DimensionError("input image does not match the network input shape");
  }
  const std::size_t n = layers_.size();
  trace.inputs.resize(n);
  trace.pre.resize(n);
  trace.post.resize(n);
  trace.argmax.resize(n);
  std::vector<T> x(image.begin(), image.end());
  const int k = spec_.kernel;
  for (std::size_t li = 0; li < n; ++li) {
    const Layer& l = layers_[li];
    const T* W = &params_[l.weight];
    const T* B = &params_[l.bias];
    trace.inputs[li] = x;
    auto& z = trace.pre[li];
    if (l.conv) {
      z.assign(static_cast<std::size_t>(l.out_c) * l.out_h * l.out_w, T(0));
      for (int o = 0; o < l.out_c; ++o) {
        T* zo = &z[static_cast<std::size_t>(o) * l.out_h * l.out_w];
        std::fill(zo, zo + l.out_h * l.out_w, B[o]);
        for (int i = 0; i < l.in_c; ++i) {
          const T* xi = &x[static_cast<std::size_t>(i) * l.in_h * l.in_w];
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const T wv = W[((o * l.in_c + i) * k + ky) * k + kx];
              for (int y = 0; y < l.out_h; ++y) {
                const T* row = xi + (y + ky) * l.in_w + kx;
                T* zr = zo + y * l.out_w;
                for (int xx = 0; xx < l.out_w; ++xx) zr[xx] += wv * row[xx];
              }
            }
          }
        }
      }
    } else {
      z.assign(l.out_c, T(0));
      for (int o = 0; o < l.out_c; ++o) {
        const T* wr = W + static_cast<std::size_t>(o) * l.in_c;
        T s = B[o];
        for (int i = 0; i < l.in_c; ++i) s += wr[i] * x[i];
        z[o] = s;
      }
    }
    auto& a = trace.post[li];
    a = z;
    if (l.activate) {
      for (auto& v : a) v = v > T(0) ? v : T(0);
    }
    if (l.pool) {
      auto& am = trace.argmax[li];
      am.assign(static_cast<std::size_t>(l.out_c) * l.pool_h * l.pool_w, 0);
      x.assign(am.size(), T(0));
      for (int c = 0; c < l.out_c; ++c) {
        for (int y = 0; y < l.pool_h; ++y) {
          for (int xx = 0; xx < l.pool_w; ++xx) {
            std::uint32_t best = static_cast<std::uint32_t>((c * l.out_h + 2 * y) * l.out_w + 2 * xx);
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const auto idx = static_cast<std::uint32_t>((c * l.out_h + 2 * y + dy) * l.out_w + 2 * xx + dx);
                if (a[idx] > a[best]) best = idx;
              }
            }
            const std::size_t out = (static_cast<std::size_t>(c) * l.pool_h + y) * l.pool_w + xx;
            am[out] = best;
            x[out] = a[best];
          }
        }
      }
    } else {
      trace.argmax[li].clear();
      x = a;
    }
  }
  trace.logits = x;
}

template <typename T>
void Network<T>::backward(const Trace& trace, std::span<const T> dlogits, std::span<T> grad) const {
  if (grad.size() != params_.size()) throw DimensionError("gradient buffer has the wrong size");
  std::vector<T> dx(dlogits.begin(), dlogits.end());
  const int k = spec_.kernel;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    const auto& z = trace.pre[li];
    const auto& x = trace.inputs[li];
    std::vector<T> dz(z.size(), T(0));
    if (l.pool) {
      const auto& am = trace.argmax[li];
      for (std::size_t i = 0; i < am.size(); ++i) dz[am[i]] += dx[i];
    } else {
      dz = dx;
    }
    if (l.activate) {
      for (std::size_t i = 0; i < dz.size(); ++i) {
        if (!(z[i] > T(0))) dz[i] = T(0);
      }
    }
    const T* W = &params_[l.weight];
    T* dW = &grad[l.weight];
    T* dB = &grad[l.bias];
    const bool need_dx = li > 0;
    std::vector<T> dinput(need_dx ? x.size() : 0, T(0));
    if (l.conv) {
      for (int o = 0; o < l.out_c; ++o) {
        const T* dzo = &dz[static_cast<std::size_t>(o) * l.out_h * l.out_w];
        T sb = T(0);
        for (int p = 0; p < l.out_h * l.out_w; ++p) sb += dzo[p];
        dB[o] += sb;
        for (int i = 0; i < l.in_c; ++i) {
          const T* xi = &x[static_cast<std::size_t>(i) * l.in_h * l.in_w];
          T* di = need_dx ? &dinput[static_cast<std::size_t>(i) * l.in_h * l.in_w] : nullptr;
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const std::size_t widx = ((o * l.in_c + i) * k + ky) * k + kx;
              const T wv = W[widx];
              T sw = T(0);
              for (int y = 0; y < l.out_h; ++y) {
                const T* row = xi + (y + ky) * l.in_w + kx;
                const T* dr = dzo + y * l.out_w;
                for (int xx = 0; xx < l.out_w; ++xx) sw += dr[xx] * row[xx];
                if (di) {
                  T* drow = di + (y + ky) * l.in_w + kx;
                  for (int xx = 0; xx < l.out_w; ++xx) drow[xx] += wv * dr[xx];
                }
              }
              dW[widx] += sw;
            }
          }
        }
      }
    } else {
      for (int o = 0; o < l.out_c; ++o) {
        const T g = dz[o];
        dB[o] += g;
        if (g == T(0)) continue;
        T* dwr = dW + static_cast<std::size_t>(o) * l.in_c;
        const T* wr = W + static_cast<std::size_t>(o) * l.in_c;
        for (int i = 0; i < l.in_c; ++i) dwr[i] += g * x[i];
        if (need_dx) {
          for (int i = 0; i < l.in_c; ++i) dinput[i] += g * wr[i];
        }
      }
    }
    dx = std::move(dinput);
  }
}

template <typename T>
std::vector<T> Network<T>::feature_maps(std::span<const float> image, const std::string& group, int& channels,
                                        int& height, int& width) const {
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    if (layers_[li].group != group) continue;
    if (!layers_[li].conv) throw ValidationError("layer '" + group + "' is not a convolutional group");
    Trace trace;
    forward(image, trace);
    channels = layers_[li].out_c;
    height = layers_[li].out_h;
    width = layers_[li].out_w;
    return trace.post[li];
  }
  throw ValidationError("layer '" + group + "' is not a convolutional group");
}

template <typename T>
T softmax_cross_entropy(std::span<const T> logits, int label, std::span<T> dlogits) {
  T mx = logits[0];
  for (T v : logits) mx = std::max(mx, v);
  T sum = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dlogits[i] = std::exp(logits[i] - mx);
    sum += dlogits[i];
  }
  for (auto& d : dlogits) d /= sum;
  const T loss = std::log(sum) + mx - logits[label];
  dlogits[label] -= T(1);
  return loss;
}

template <typename T>
int argmax(std::span<const T> logits) {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = static_cast<int>(i);
  }
  return best;
}

Checkpoint init_checkpoint(const NetSpec& spec, std::uint64_t seed) {
  Network<float> net(spec);
  Checkpoint ckpt;
  ckpt.layer_order = spec.layer_order();
  spec.write_metadata(ckpt);
  ckpt.metadata["init.seed"] = std::to_string(seed);
  for (const auto& b : net.blocks()) {
    std::vector<float> values(b.size, 0.0f);
    if (b.name.ends_with(".weight")) {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < b.shape.size(); ++d) fan_in *= static_cast<std::size_t>(b.shape[d]);
      // He-uniform for ReLU; LeCun-uniform when there is no rectification.
      const double gain = spec.activation == Activation::Relu ? 6.0 : 3.0;
      const double limit = std::sqrt(gain / static_cast<double>(fan_in));
      Rng rng(derive_seed(seed, "init/" + b.name));
      for (auto& v : values) v = static_cast<float>((rng.uniform() * 2.0 - 1.0) * limit);
    }
    ckpt.tensors.push_back({b.name, Tensor::from_floats(b.shape, std::move(values))});
  }
  return ckpt;
}

template class Network<float>;
template class Network<double>;
template float softmax_cross_entropy<float>(std::span<const float>, int, std::span<float>);
template double softmax_cross_entropy<double>(std::span<const double>, int, std::span<double>);
template int argmax<float>(std::span<const float>);
template int argmax<double>(std::span<const double>);

}  // namespace rws
