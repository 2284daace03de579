#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cxrnet/errors.hpp"
#include "cxrnet/labels.hpp"
#include "cxrnet/layers.hpp"
#include "cxrnet/rng.hpp"
#include "cxrnet/tensor.hpp"

namespace cxrnet {

struct LayerTableRow {
  std::string name;
  std::string type;
  std::string output_shape;
  std::int64_t params = 0;
};

struct LayerTable {
  std::vector<LayerTableRow> rows;
  std::int64_t total_params = 0;

  std::string str() const {
    std::ostringstream os;
    os << std::left << std::setw(46) << "Layer (type)" << std::setw(26) << "Output Shape"
       << "Param #" << "\n";
    os << std::string(80, '=') << "\n";
    for (const auto& r : rows) {
      os << std::left << std::setw(46) << (r.name + " (" + r.type + ")") << std::setw(26)
         << r.output_shape << r.params << "\n";
    }
    os << std::string(80, '=') << "\n";
    os << "Total params: " << total_params << "\n";
    return os.str();
  }
};

namespace detail {

inline void write_u32le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool read_u32le(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline void write_f32le(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  write_u32le(os, v);
}

inline bool read_f32le(std::istream& is, float& f) {
  std::uint32_t v;
  if (!read_u32le(is, v)) return false;
  std::memcpy(&f, &v, 4);
  return true;
}

}  // namespace detail

inline constexpr char kWeightsMagic[4] = {'C', 'X', 'R', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

/// Ordered layer stack with a run-level random stream for dropout masks.
/// An eval-mode model with frozen weights is safe to share across threads;
/// training requires exclusive access.
template <typename T>
class Model {
 public:
  Model(Shape input_shape, std::uint64_t seed)
      : input_shape_(std::move(input_shape)), rng_(Rng::derive(seed, 0xd17075u, 0)) {}

  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  std::size_t layer_count() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }
  const Shape& input_shape() const { return input_shape_; }
  Rng& rng() { return rng_; }
  void set_rng(const Rng& rng) { rng_ = rng; }

  Tensor<T> forward(const Tensor<T>& batch, Mode mode) {
    if (batch.shape().rank() != input_shape_.rank() + 1) {
      throw ShapeError("forward: expected batched input of rank " +
                       std::to_string(input_shape_.rank() + 1) + ", got " + batch.shape().str());
    }
    for (int i = 0; i < input_shape_.rank(); ++i) {
      if (batch.shape()[i + 1] != input_shape_[i]) {
        throw ShapeError("forward: input shape " + batch.shape().str() + " does not match model input " +
                         input_shape_.str());
      }
    }
    Tensor<T> x = batch;
    for (auto& layer : layers_) x = layer->forward(x, mode, rng_);
    return x;
  }

  /// Backpropagates a gradient w.r.t. the head's pre-activation. The head
  /// must be a Dense layer; the sigmoid + binary-cross-entropy fusion hands
  /// in (p - y)/N directly.
  Tensor<T> backward_from_logits(const Tensor<T>& dlogits) {
    if (layers_.empty()) throw StateError("backward on an empty model");
    auto* head = dynamic_cast<Dense<T>*>(layers_.back().get());
    if (head == nullptr) throw StateError("model head is not a dense layer");
    Tensor<T> g = head->backward_from_preactivation(dlogits);
    for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i]->backward(g);
    return g;
  }

  std::vector<ParamRef<T>> trainable() {
    std::vector<ParamRef<T>> out;
    for (auto& layer : layers_)
      for (auto& p : layer->trainable()) out.push_back(std::move(p));
    return out;
  }

  /// Every persisted tensor, in file order: per layer, trainable then state.
  std::vector<ParamRef<T>> persisted() {
    std::vector<ParamRef<T>> out;
    for (auto& layer : layers_) {
      for (auto& p : layer->trainable()) {
        out.push_back({layer->name() + "/" + p.name, p.value, p.grad});
      }
      for (auto& p : layer->state()) {
        out.push_back({layer->name() + "/" + p.name, p.value, nullptr});
      }
    }
    return out;
  }

  LayerTable summary() const {
    LayerTable table;
    Shape shape = batched(input_shape_);
    for (const auto& layer : layers_) {
      shape = layer->output_shape(shape);
      table.rows.push_back({layer->name(), layer->type_name(), shape_with_none(shape), layer->param_count()});
      table.total_params += layer->param_count();
    }
    return table;
  }

  std::vector<Label> predict(const Tensor<T>& batch, double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
      throw ConfigError("prediction threshold must be in (0, 1), got " + std::to_string(threshold));
    }
    const Tensor<T> probs = forward(batch, Mode::eval);
    std::vector<Label> labels;
    labels.reserve(static_cast<std::size_t>(probs.shape()[0]));
    for (std::int64_t i = 0; i < probs.shape()[0]; ++i) {
      labels.push_back(static_cast<double>(probs(i, 0)) >= threshold ? Label::covid : Label::normal);
    }
    return labels;
  }

  void save_weights(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw WeightsError("cannot open " + path + " for writing");
    os.write(kWeightsMagic, 4);
    detail::write_u32le(os, kWeightsVersion);
    for (const auto& p : persisted()) {
      detail::write_u32le(os, static_cast<std::uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      const Shape& s = p.value->shape();
      detail::write_u32le(os, static_cast<std::uint32_t>(s.rank()));
      for (int d = 0; d < s.rank(); ++d) detail::write_u32le(os, static_cast<std::uint32_t>(s[d]));
      for (std::int64_t i = 0; i < p.value->numel(); ++i)
        detail::write_f32le(os, static_cast<float>((*p.value)[i]));
    }
    if (!os) throw WeightsError("short write to " + path);
  }

  void load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw WeightsError("cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kWeightsMagic, 4) != 0) {
      throw WeightsError(path + ": bad magic bytes, not a weights file");
    }
    std::uint32_t version = 0;
    if (!detail::read_u32le(is, version) || version != kWeightsVersion) {
      throw WeightsError(path + ": unsupported format version " + std::to_string(version));
    }
    std::map<std::string, std::pair<Shape, std::vector<float>>> entries;
    for (;;) {
      std::uint32_t name_len = 0;
      if (!detail::read_u32le(is, name_len)) break;  // clean EOF
      std::string name(name_len, '\0');
      if (!is.read(name.data(), name_len)) throw WeightsError(path + ": truncated tensor name");
      std::uint32_t rank = 0;
      if (!detail::read_u32le(is, rank) || rank < 1 || rank > 4) {
        throw WeightsError(path + ": bad rank for tensor " + name);
      }
      std::vector<std::int64_t> dims(rank);
      std::int64_t count = 1;
      for (auto& d : dims) {
        std::uint32_t v = 0;
        if (!detail::read_u32le(is, v) || v == 0) throw WeightsError(path + ": bad dims for tensor " + name);
        d = v;
        count *= v;
      }
      std::vector<float> data(static_cast<std::size_t>(count));
      for (auto& f : data) {
        if (!detail::read_f32le(is, f)) throw WeightsError(path + ": truncated data for tensor " + name);
      }
      Shape shape = [&dims] {
        switch (dims.size()) {
          case 1: return Shape{dims[0]};
          case 2: return Shape{dims[0], dims[1]};
          case 3: return Shape{dims[0], dims[1], dims[2]};
          default: return Shape{dims[0], dims[1], dims[2], dims[3]};
        }
      }();
      if (!entries.emplace(name, std::make_pair(shape, std::move(data))).second) {
        throw WeightsError(path + ": duplicate tensor " + name);
      }
    }
    auto params = persisted();
    if (entries.size() != params.size()) {
      throw WeightsError(path + ": file holds " + std::to_string(entries.size()) + " tensors, architecture has " +
                         std::to_string(params.size()));
    }
    for (auto& p : params) {
      auto it = entries.find(p.name);
      if (it == entries.end()) throw WeightsError(path + ": missing tensor " + p.name);
      if (it->second.first != p.value->shape()) {
        throw WeightsError(path + ": tensor " + p.name + " has shape " + it->second.first.str() +
                           ", architecture expects " + p.value->shape().str());
      }
      const auto& data = it->second.second;
      for (std::int64_t i = 0; i < p.value->numel(); ++i)
        (*p.value)[i] = static_cast<T>(data[static_cast<std::size_t>(i)]);
    }
    for (auto& layer : layers_) {
      if (auto* bn = dynamic_cast<BatchNorm<T>*>(layer.get())) bn->mark_stats_initialized();
    }
  }

 private:
  static Shape batched(const Shape& s) {
    switch (s.rank()) {
      case 1: return Shape{1, s[0]};
      case 2: return Shape{1, s[0], s[1]};
      default: return Shape{1, s[0], s[1], s[2]};
    }
  }

  static std::string shape_with_none(const Shape& s) {
    std::ostringstream os;
    os << "(None";
    for (int i = 1; i < s.rank(); ++i) os << ", " << s[i];
    os << ")";
    return os.str();
  }

  Shape input_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  Rng rng_;
};

/// Builds the 22-layer stack: five conv/batchnorm/pool blocks with 32, 64,
/// 64, 128, 256 kernels, dropout after conv blocks 2, 4 and 5, then
/// flatten, a 128-unit ReLU dense layer, dropout, and a single sigmoid
/// output unit. Input is one 150x150 grayscale channel.
template <typename T>
Model<T> build_proposed_model(std::uint64_t seed) {
  Rng init = Rng::derive(seed, 0x1417u, 0);
  Model<T> model(Shape{150, 150, 1}, seed);
  int conv = 0, bn = 0, pool = 0, drop = 0, dense = 0;
  auto conv_name = [&] { return "conv2d_" + std::to_string(++conv); };
  auto bn_name = [&] { return "batch_normalization_" + std::to_string(++bn); };
  auto pool_name = [&] { return "max_pooling2d_" + std::to_string(++pool); };
  auto drop_name = [&] { return "dropout_" + std::to_string(++drop); };
  auto dense_name = [&] { return "dense_" + std::to_string(++dense); };

  model.add(std::make_unique<Conv2D<T>>(conv_name(), 1, 32, init));
  model.add(std::make_unique<BatchNorm<T>>(bn_name(), 32));
  model.add(std::make_unique<MaxPool2D<T>>(pool_name()));

  model.add(std::make_unique<Conv2D<T>>(conv_name(), 32, 64, init));
  model.add(std::make_unique<Dropout<T>>(drop_name(), 0.2));
  model.add(std::make_unique<BatchNorm<T>>(bn_name(), 64));
  model.add(std::make_unique<MaxPool2D<T>>(pool_name()));

  model.add(std::make_unique<Conv2D<T>>(conv_name(), 64, 64, init));
  model.add(std::make_unique<BatchNorm<T>>(bn_name(), 64));
  model.add(std::make_unique<MaxPool2D<T>>(pool_name()));

  model.add(std::make_unique<Conv2D<T>>(conv_name(), 64, 128, init));
  model.add(std::make_unique<Dropout<T>>(drop_name(), 0.2));
  model.add(std::make_unique<BatchNorm<T>>(bn_name(), 128));
  model.add(std::make_unique<MaxPool2D<T>>(pool_name()));

  model.add(std::make_unique<Conv2D<T>>(conv_name(), 128, 256, init));
  model.add(std::make_unique<Dropout<T>>(drop_name(), 0.2));
  model.add(std::make_unique<BatchNorm<T>>(bn_name(), 256));
  model.add(std::make_unique<MaxPool2D<T>>(pool_name()));

  model.add(std::make_unique<Flatten<T>>("flatten_1"));
  model.add(std::make_unique<Dense<T>>(dense_name(), 6400, 128, Activation::relu, init));
  model.add(std::make_unique<Dropout<T>>(drop_name(), 0.2));
  model.add(std::make_unique<Dense<T>>(dense_name(), 128, 1, Activation::sigmoid, init));
  return model;
}

/// Builds the architecture and replaces every parameter from the file.
template <typename T>
Model<T> load_model(const std::string& path, std::uint64_t seed = 0) {
  Model<T> model = build_proposed_model<T>(seed);
  model.load_weights(path);
  return model;
}

}  // namespace cxrnet
