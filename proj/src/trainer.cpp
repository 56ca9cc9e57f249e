#include "rws/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "rws/digest.hpp"
#include "rws/errors.hpp"
#include "rws/rng.hpp"

namespace rws {

using nlohmann::json;

std::string TrainConfig::to_json() const {
  json j;
  j["dataset"] = dataset;
  j["train_size"] = train_size;
  j["data_seed"] = data_seed;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["momentum"] = momentum;
  j["seed"] = seed;
  j["init_strategy"] = init_strategy == InitStrategy::PretextPretrain ? "pretext-pretrain" : "std-as-init";
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(ParseError::BadHeader, std::string("malformed training config: ") + e.what());
  }
  try {
    c.dataset = j.value("dataset", c.dataset);
    c.train_size = j.value("train_size", c.train_size);
    c.data_seed = j.value("data_seed", c.data_seed);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.seed = j.value("seed", c.seed);
    const std::string strategy = j.value("init_strategy", std::string("pretext-pretrain"));
    if (strategy == "pretext-pretrain") {
      c.init_strategy = InitStrategy::PretextPretrain;
    } else if (strategy == "std-as-init") {
      c.init_strategy = InitStrategy::StdAsInit;
    } else {
      throw ValidationError("unknown init_strategy '" + strategy + "'");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid training config: ") + e.what());
  }
  if (c.epochs < 0 || c.batch_size <= 0 || !(c.learning_rate > 0) || c.momentum < 0 || c.momentum >= 1) {
    throw ValidationError("training config out of range");
  }
  return c;
}

std::string TrainConfig::hash() const { return sha256_hex(to_json()); }

Checkpoint train(const TrainConfig& config, const ImageSet& data, const Checkpoint& init,
                 const std::optional<CorruptionSpec>& corruption, TrainLog* log) {
  if (config.epochs == 0) return init;
  if (config.batch_size <= 0) throw ValidationError("batch size must be positive");
  const NetSpec spec = NetSpec::from_checkpoint(init);
  if (spec.height != data.height || spec.width != data.width || spec.classes < data.classes) {
    throw DimensionError("training data does not match the model input");
  }
  Network<float> net(spec);
  net.load(init);

  const std::size_t n = data.size();
  std::vector<float> velocity(net.num_params(), 0.0f);
  std::vector<float> grad(net.num_params(), 0.0f);
  std::vector<float> dlogits(spec.classes);
  std::vector<std::size_t> order(n);
  Network<float>::Trace trace;
  const float lr = static_cast<float>(config.learning_rate);
  const float mu = static_cast<float>(config.momentum);
  const std::string aug_tag = corruption ? "augment/" + std::string(corruption_name(corruption->kind)) : "";

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0f);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        if (corruption) {
          CorruptionSpec draw = *corruption;
          draw.seed = derive_seed(config.seed, aug_tag, static_cast<std::uint64_t>(epoch) * n + idx);
          const auto img = corrupt(data.image(idx), data.height, data.width, draw);
          net.forward(img, trace);
        } else {
          net.forward(data.image(idx), trace);
        }
        const float loss = softmax_cross_entropy<float>(trace.logits, data.labels[idx], dlogits);
        if (!std::isfinite(loss)) {
          throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                std::to_string(b));
        }
        epoch_loss += loss;
        net.backward(trace, dlogits, grad);
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      auto& p = net.params();
      for (std::size_t i = 0; i < p.size(); ++i) {
        velocity[i] = mu * velocity[i] + grad[i] * inv;
        p[i] -= lr * velocity[i];
      }
    }
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }

  Checkpoint out = init;
  net.store(out);
  out.metadata["train.config_hash"] = config.hash();
  out.metadata["train.seed"] = std::to_string(config.seed);
  out.metadata["train.dataset"] = config.dataset;
  out.metadata["train.epochs"] = std::to_string(config.epochs);
  out.metadata["train.init_strategy"] =
      config.init_strategy == InitStrategy::PretextPretrain ? "pretext-pretrain" : "std-as-init";
  out.metadata["train.corruption"] = corruption ? std::string(corruption_name(corruption->kind)) : "none";
  out.metadata["train.severity"] = corruption ? std::to_string(corruption->severity) : "0";
  return out;
}

ImageSet corrupt_set(const ImageSet& set, CorruptionKind kind, int severity) {
  ImageSet out = set;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const CorruptionSpec spec{kind, severity, derive_seed(kEvalSeed, corruption_name(kind), i)};
    const auto img = corrupt(set.image(i), set.height, set.width, spec);
    std::copy(img.begin(), img.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(i * set.image_size()));
  }
  return out;
}

double evaluate(const Checkpoint& model, const ImageSet& set, const std::optional<CorruptionSpec>& corruption) {
  const NetSpec spec = NetSpec::from_checkpoint(model);
  if (spec.height != set.height || spec.width != set.width) throw DimensionError("evaluation set does not match the model input");
  if (set.size() == 0) return 0.0;
  Network<float> net(spec);
  net.load(model);
  Network<float>::Trace trace;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (corruption) {
      const CorruptionSpec draw{corruption->kind, corruption->severity,
                                derive_seed(kEvalSeed, corruption_name(corruption->kind), i)};
      net.forward(corrupt(set.image(i), set.height, set.width, draw), trace);
    } else {
      net.forward(set.image(i), trace);
    }
    if (argmax<float>(trace.logits) == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

double evaluate_mean_corrupted(const Checkpoint& model, const ImageSet& set, int severity) {
  double sum = 0.0;
  for (auto kind : kAllCorruptions) sum += evaluate(model, set, CorruptionSpec{kind, severity, 0});
  return sum / static_cast<double>(kAllCorruptions.size());
}

namespace {

double batch_loss(const Network<double>& net, const std::vector<std::vector<float>>& images, const std::vector<int>& labels,
                  std::vector<Network<double>::Trace>& traces) {
  double total = 0.0;
  std::vector<double> d(net.spec().classes);
  for (std::size_t i = 0; i < images.size(); ++i) {
    net.forward(images[i], traces[i]);
    total += softmax_cross_entropy<double>(traces[i].logits, labels[i], d);
  }
  return total / static_cast<double>(images.size());
}

}  // namespace

double grad_check(const NetSpec& spec, std::uint64_t seed, const GradientMutator& mutate) {
  Network<double> net(spec);
  const Checkpoint init = init_checkpoint(spec, seed);
  net.load(init);
  Rng rng(derive_seed(seed, "grad_check"));
  // Non-zero biases keep pre-activations off the ReLU kink.
  for (const auto& b : net.blocks()) {
    if (!b.name.ends_with(".bias")) continue;
    for (std::size_t i = 0; i < b.size; ++i) net.params()[b.offset + i] = (rng.uniform() * 2.0 - 1.0) * 0.1;
  }

  constexpr int kBatch = 2;
  std::vector<std::vector<float>> images(kBatch, std::vector<float>(static_cast<std::size_t>(spec.height) * spec.width));
  std::vector<int> labels(kBatch);
  for (int i = 0; i < kBatch; ++i) {
    // Mostly dark images with sparse bright pixels, like the glyph data.
    for (auto& p : images[i]) p = static_cast<float>(rng.uniform() < 0.25 ? rng.uniform() : 0.1 * rng.uniform());
    labels[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.classes)));
  }

  std::vector<Network<double>::Trace> base(kBatch);
  batch_loss(net, images, labels, base);
  std::vector<double> grad(net.num_params(), 0.0);
  std::vector<double> d(spec.classes);
  for (int i = 0; i < kBatch; ++i) {
    softmax_cross_entropy<double>(base[i].logits, labels[i], d);
    net.backward(base[i], d, grad);
  }
  for (auto& g : grad) g /= kBatch;
  if (mutate) mutate(grad);

  constexpr double kStep = 1e-3;
  constexpr int kPerGroup = 24;
  constexpr int kMaxAttempts = 400;
  std::vector<Network<double>::Trace> plus(kBatch);
  std::vector<Network<double>::Trace> minus(kBatch);
  double worst = 0.0;
  for (const auto& group : spec.layer_order()) {
    std::vector<const ParamBlock*> blocks;
    std::size_t group_size = 0;
    for (const auto& b : net.blocks()) {
      if (b.name.rfind(group + ".", 0) == 0) {
        blocks.push_back(&b);
        group_size += b.size;
      }
    }
    int accepted = 0;
    for (int attempt = 0; attempt < kMaxAttempts && accepted < kPerGroup; ++attempt) {
      std::size_t pick = rng.below(group_size);
      std::size_t index = 0;
      for (const auto* b : blocks) {
        if (pick < b->size) {
          index = b->offset + pick;
          break;
        }
        pick -= b->size;
      }
      const double saved = net.params()[index];
      net.params()[index] = saved + kStep;
      const double lp = batch_loss(net, images, labels, plus);
      net.params()[index] = saved - kStep;
      const double lm = batch_loss(net, images, labels, minus);
      net.params()[index] = saved;
      bool smooth = true;
      for (int i = 0; i < kBatch; ++i) smooth = smooth && plus[i].same_pattern(base[i]) && minus[i].same_pattern(base[i]);
      if (!smooth) continue;
      const double numeric = (lp - lm) / (2.0 * kStep);
      const double analytic = grad[index];
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-7});
      worst = std::max(worst, std::fabs(numeric - analytic) / denom);
      ++accepted;
    }
    if (accepted < kPerGroup) throw std::runtime_error("grad_check could not sample enough smooth parameters in " + group);
  }
  return worst;
}

}  // namespace rws
