#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rws/checkpoint.hpp"
#include "rws/corruption.hpp"
#include "rws/dataset.hpp"
#include "rws/network.hpp"

namespace rws {

enum class InitStrategy { PretextPretrain, StdAsInit };

struct TrainConfig {
  std::string dataset = "synthA";
  std::size_t train_size = 2000;
  std::uint64_t data_seed = 1;
  int epochs = 4;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  InitStrategy init_strategy = InitStrategy::PretextPretrain;

  // Digest of every field; recorded as training provenance.
  std::string hash() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

/*
 * Minibatch SGD with momentum on softmax cross-entropy. With a corruption,
 * every training image is corrupted with a fresh seeded draw each epoch.
 * Zero epochs return `init` unchanged. Throws DivergenceError on a
 * non-finite loss.
 */
Checkpoint train(const TrainConfig& config, const ImageSet& data, const Checkpoint& init,
                 const std::optional<CorruptionSpec>& corruption = std::nullopt, TrainLog* log = nullptr);

// Seed behind the fixed evaluation corruption draws.
inline constexpr std::uint64_t kEvalSeed = 0x5EEDE7A1ULL;

// Fraction of argmax-correct predictions.
double evaluate(const Checkpoint& model, const ImageSet& set, const std::optional<CorruptionSpec>& corruption = std::nullopt);

// Mean accuracy over all corruption kinds at one severity.
double evaluate_mean_corrupted(const Checkpoint& model, const ImageSet& set, int severity);

// Corrupted copy of a set using the evaluation seeds.
ImageSet corrupt_set(const ImageSet& set, CorruptionKind kind, int severity);

// Lets tests tamper with the analytic gradient before comparison.
using GradientMutator = std::function<void(std::span<double>)>;

/*
 * Max relative error between backprop gradients and central differences
 * (step 1e-3, float64) over >= 20 sampled parameters per layer group. A
 * sample is redrawn when the perturbation flips a ReLU or pooling decision,
 * since the loss is not differentiable across those boundaries.
 */
double grad_check(const NetSpec& spec, std::uint64_t seed, const GradientMutator& mutate = nullptr);

}  // namespace rws
