#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rws/checkpoint.hpp"

namespace rws {

enum class Architecture { Mlp, ConvNet };
enum class Activation { Relu, Identity };

/*
 * Desk-scale classifier description. A convnet stacks valid 3x3 (by default)
 * convolutions, each followed by the activation and 2x2 max pooling, then
 * fully connected layers. Groups are named conv1.., fc1.. in forward order.
 */
struct NetSpec {
  Architecture architecture = Architecture::ConvNet;
  int height = 28;
  int width = 28;
  int classes = 10;
  std::vector<int> conv_channels = {8, 16};
  int kernel = 3;
  std::vector<int> hidden = {64};
  Activation activation = Activation::Relu;

  static NetSpec convnet();
  static NetSpec mlp();

  std::vector<std::string> layer_order() const;
  void validate() const;

  void write_metadata(Checkpoint& ckpt) const;
  static NetSpec from_checkpoint(const Checkpoint& ckpt);
};

// He-uniform weights (LeCun-uniform for identity activations), zero biases.
Checkpoint init_checkpoint(const NetSpec& spec, std::uint64_t seed);

struct ParamBlock {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

template <typename T>
class Network {
 public:
  struct Layer {
    bool conv = false;
    bool activate = true;
    bool pool = false;
    int in_c = 0, in_h = 0, in_w = 0;  // conv input; fc uses in_c as input width
    int out_c = 0, out_h = 0, out_w = 0;
    int pool_h = 0, pool_w = 0;
    std::size_t weight = 0;  // offsets into the flat parameter vector
    std::size_t bias = 0;
    std::string group;
  };

  // Per-sample forward record used by backward.
  struct Trace {
    std::vector<std::vector<T>> inputs;  // input to each layer
    std::vector<std::vector<T>> pre;     // pre-activation
    std::vector<std::vector<T>> post;    // after activation, before pooling
    std::vector<std::vector<std::uint32_t>> argmax;
    std::vector<T> logits;

    // Identical ReLU masks and pooling winners.
    bool same_pattern(const Trace& other) const;
  };

  explicit Network(const NetSpec& spec);

  const NetSpec& spec() const { return spec_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t num_params() const { return params_.size(); }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }

  void load(const Checkpoint& ckpt);
  // Copies parameters into the matching float tensors of `ckpt`.
  void store(Checkpoint& ckpt) const;

  void forward(std::span<const float> image, Trace& trace) const;
  // Adds d(loss)/d(params) to grad given d(loss)/d(logits).
  void backward(const Trace& trace, std::span<const T> dlogits, std::span<T> grad) const;

  // Post-activation maps of a conv group, channel-major.
  std::vector<T> feature_maps(std::span<const float> image, const std::string& group, int& channels, int& height,
                              int& width) const;

 private:
  NetSpec spec_;
  std::vector<Layer> layers_;
  std::vector<ParamBlock> blocks_;
  std::vector<T> params_;
};

// Softmax cross-entropy; writes d(loss)/d(logits) and returns the loss.
template <typename T>
T softmax_cross_entropy(std::span<const T> logits, int label, std::span<T> dlogits);

// Index of the largest logit, ties to the lowest index.
template <typename T>
int argmax(std::span<const T> logits);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace rws
