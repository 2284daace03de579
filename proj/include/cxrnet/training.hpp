#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "cxrnet/data.hpp"
#include "cxrnet/errors.hpp"
#include "cxrnet/metrics.hpp"
#include "cxrnet/model.hpp"
#include "cxrnet/tensor.hpp"

namespace cxrnet {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log
/// so the loss stays finite at saturated outputs.
inline constexpr double kProbClamp = 1e-7;

struct TrainConfig {
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-7;
  std::uint64_t seed = 0;
  double threshold = 0.5;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must be in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0, 1)");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

inline int label_to_int(Label l) { return l == Label::covid ? 1 : 0; }

template <typename T>
void check_binary_labels(const Tensor<T>& p, const std::vector<int>& y) {
  if (p.shape().rank() != 2 || p.shape()[1] != 1 ||
      p.shape()[0] != static_cast<std::int64_t>(y.size())) {
    throw ShapeError("expected (N, 1) probabilities with N labels, got " + p.shape().str() + " and " +
                     std::to_string(y.size()) + " labels");
  }
  for (int v : y) {
    if (v != 0 && v != 1) throw std::invalid_argument("binary label outside {0, 1}: " + std::to_string(v));
  }
}

/// Mean binary cross entropy -[y ln p + (1-y) ln(1-p)] over the batch.
template <typename T>
double bce_loss(const Tensor<T>& p, const std::vector<int>& y) {
  check_binary_labels(p, y);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double pi = std::clamp(static_cast<double>(p[static_cast<std::int64_t>(i)]), kProbClamp,
                                 1.0 - kProbClamp);
    sum -= y[i] == 1 ? std::log(pi) : std::log(1.0 - pi);
  }
  return sum / static_cast<double>(y.size());
}

/// Gradient of the mean BCE w.r.t. the head's pre-sigmoid activation:
/// (p - y) / N per sample, the numerically stable fused form.
template <typename T>
Tensor<T> bce_sigmoid_grad(const Tensor<T>& p, const std::vector<int>& y) {
  check_binary_labels(p, y);
  Tensor<T> g(p.shape());
  const T inv_n = T(1) / static_cast<T>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto idx = static_cast<std::int64_t>(i);
    g[idx] = (p[idx] - static_cast<T>(y[i])) * inv_n;
  }
  return g;
}

/// RMSProp: acc <- rho * acc + (1 - rho) * g^2,
///          param <- param - lr * g / (sqrt(acc) + eps).
template <typename T>
class RmsProp {
 public:
  explicit RmsProp(const TrainConfig& cfg)
      : lr_(static_cast<T>(cfg.learning_rate)),
        rho_(static_cast<T>(cfg.rho)),
        eps_(static_cast<T>(cfg.epsilon)) {}

  void step(const std::vector<ParamRef<T>>& params) {
    if (acc_.empty()) {
      acc_.reserve(params.size());
      for (const auto& p : params) acc_.emplace_back(p.value->shape());
    }
    if (acc_.size() != params.size()) {
      throw ShapeError("optimizer state tracks " + std::to_string(acc_.size()) + " tensors, step got " +
                       std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& acc = acc_[i];
      Tensor<T>& value = *params[i].value;
      const Tensor<T>& grad = *params[i].grad;
      ensure_same_shape(acc, value, "rmsprop step");
      ensure_same_shape(grad, value, "rmsprop step");
      const std::int64_t n = value.numel();
      for (std::int64_t j = 0; j < n; ++j) {
        const T g = grad[j];
        acc[j] = rho_ * acc[j] + (T(1) - rho_) * g * g;
        value[j] -= lr_ * g / (std::sqrt(acc[j]) + eps_);
      }
    }
  }

  const std::vector<Tensor<T>>& accumulators() const { return acc_; }

 private:
  T lr_, rho_, eps_;
  std::vector<Tensor<T>> acc_;
};

/// Stacks (H, W, 1) images into an (N, H, W, 1) batch.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& images) {
  if (images.empty()) throw DataError("stack_batch: empty batch");
  const Shape& s = images.front().shape();
  Tensor<T> batch(Shape{static_cast<std::int64_t>(images.size()), s[0], s[1], s[2]});
  const std::int64_t per = s.numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    ensure_same_shape(images[i], images.front(), "stack_batch");
    std::copy(images[i].data(), images[i].data() + per,
              batch.data() + static_cast<std::int64_t>(i) * per);
  }
  return batch;
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  ConfusionMatrix cm;
};

/// Eval-mode pass over a dataset: crop -> resize -> normalize, no
/// augmentation, no parameter mutation.
template <typename T>
EvalResult evaluate(Model<T>& model, const Dataset& ds, const AugmentConfig& aug, int batch_size,
                    double threshold) {
  if (ds.samples.empty()) throw DataError("evaluate: empty dataset");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  double loss_sum = 0.0;
  std::vector<Label> pred, truth;
  pred.reserve(ds.size());
  truth.reserve(ds.size());
  for (std::size_t start = 0; start < ds.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(ds.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<Tensor<T>> images;
    std::vector<int> y;
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(preprocess<T>(ds.samples[i].image, aug));
      y.push_back(label_to_int(ds.samples[i].label));
      truth.push_back(ds.samples[i].label);
    }
    const Tensor<T> probs = model.forward(stack_batch(images), Mode::eval);
    loss_sum += bce_loss(probs, y) * static_cast<double>(y.size());
    for (std::int64_t i = 0; i < probs.shape()[0]; ++i) {
      pred.push_back(static_cast<double>(probs(i, 0)) >= threshold ? Label::covid : Label::normal);
    }
  }
  EvalResult res;
  res.cm = confusion(pred, truth);
  res.loss = loss_sum / static_cast<double>(ds.size());
  res.accuracy = static_cast<double>(res.cm.tp + res.cm.tn) / static_cast<double>(res.cm.total());
  return res;
}

namespace detail {
inline constexpr std::uint64_t kShuffleStream = 0x5affe1u;
}

/// One epoch: seeded shuffle, per-sample seeded augmentation, train-mode
/// forward, fused-head backward, RMSProp update; then an eval-mode pass
/// over both sets for the epoch record. Deterministic given (seed, data).
template <typename T>
std::vector<EpochRecord> train(Model<T>& model, const Dataset& train_set, const Dataset& val_set,
                               const TrainConfig& cfg, const AugmentConfig& aug,
                               std::ostream* log = nullptr) {
  cfg.validate();
  aug.validate();
  if (train_set.samples.empty() || val_set.samples.empty()) throw DataError("train: empty dataset");
  if (train_set.count(Label::normal) == 0 || train_set.count(Label::covid) == 0) {
    throw DataError("train: training set does not contain both classes");
  }

  RmsProp<T> opt(cfg);
  std::vector<EpochRecord> records;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::derive(cfg.seed, detail::kShuffleStream, static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Tensor<T>> images;
      std::vector<int> y;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const Sample& s = train_set.samples[idx];
        Rng arng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch), idx);
        const AugmentParams params = sample_augment_params(aug, aug.target_width, aug.target_height, arng);
        images.push_back(augment_tensor(preprocess<T>(s.image, aug), params));
        y.push_back(label_to_int(s.label));
      }
      const Tensor<T> probs = model.forward(stack_batch(images), Mode::train);
      model.backward_from_logits(bce_sigmoid_grad(probs, y));
      opt.step(model.trainable());
    }

    const EvalResult tr = evaluate(model, train_set, aug, cfg.batch_size, cfg.threshold);
    const EvalResult va = evaluate(model, val_set, aug, cfg.batch_size, cfg.threshold);
    records.push_back({epoch, tr.loss, tr.accuracy, va.loss, va.accuracy});
    if (log) {
      *log << "epoch " << epoch << "/" << cfg.epochs << "  train_loss=" << tr.loss
           << " train_acc=" << tr.accuracy << " val_loss=" << va.loss << " val_acc=" << va.accuracy
           << "\n";
    }
  }
  return records;
}

/// CSV behind the per-epoch loss/accuracy curves.
inline std::string history_csv(const std::vector<EpochRecord>& records) {
  auto num = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + "," + num(r.train_loss) + "," + num(r.train_acc) + "," +
           num(r.val_loss) + "," + num(r.val_acc) + "\n";
  }
  return out;
}

}  // namespace cxrnet
