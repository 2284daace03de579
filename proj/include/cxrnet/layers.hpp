#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cxrnet/errors.hpp"
#include "cxrnet/parallel.hpp"
#include "cxrnet/rng.hpp"
#include "cxrnet/tensor.hpp"

namespace cxrnet {

enum class Mode { train, eval };

enum class Activation { none, relu, sigmoid };

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;

/// Named view of one parameter tensor and, for trainable parameters, the
/// gradient written by the latest backward pass.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
  return out;
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = sigmoid_scalar(px[i]);
  return out;
}

/// Shift-invariant softmax over a rank-1 tensor. Library utility; the
/// model head itself is a single sigmoid unit.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.shape().rank() != 1) throw ShapeError("softmax requires a rank-1 tensor");
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const std::int64_t n = x.numel();
  T mx = px[0];
  for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, px[i]);
  T sum = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    po[i] = std::exp(px[i] - mx);
    sum += po[i];
  }
  for (std::int64_t i = 0; i < n; ++i) po[i] /= sum;
  return out;
}

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual const char* type_name() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  /// Reported parameter count (trainable plus persistent state).
  virtual std::int64_t param_count() const { return 0; }

  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) = 0;
  /// Gradient w.r.t. this layer's input; parameter gradients land in the
  /// tensors exposed by trainable(). Requires a preceding forward call.
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;

  virtual std::vector<ParamRef<T>> trainable() { return {}; }
  /// Persisted non-trainable state (batchnorm moving statistics).
  virtual std::vector<ParamRef<T>> state() { return {}; }

 protected:
  void require_forward_context(bool have) const {
    if (!have) throw StateError(name_ + ": backward called without a cached forward pass");
  }

 private:
  std::string name_;
};

/// 2-D cross-correlation, stride 1, same zero padding, NHWC. The kernel
/// tensor is (kh, kw, in_ch, out_ch); flattened it is exactly the
/// (kh*kw*in_ch) x out_ch matrix the im2col product needs.
template <typename T>
class Conv2D : public Layer<T> {
 public:
  Conv2D(std::string name, std::int64_t in_ch, std::int64_t out_ch, Rng& init_rng, std::int64_t kernel = 3)
      : Layer<T>(std::move(name)),
        kh_(kernel),
        kw_(kernel),
        in_ch_(in_ch),
        out_ch_(out_ch),
        kernel_(Shape{kernel, kernel, in_ch, out_ch}),
        bias_(Shape{out_ch}),
        dkernel_(Shape{kernel, kernel, in_ch, out_ch}),
        dbias_(Shape{out_ch}) {
    const double bound = std::sqrt(6.0 / static_cast<double>(kh_ * kw_ * in_ch_));
    for (std::int64_t i = 0; i < kernel_.numel(); ++i)
      kernel_[i] = static_cast<T>(init_rng.uniform(-bound, bound));
  }

  const char* type_name() const override { return "Conv2D"; }

  Shape output_shape(const Shape& in) const override {
    if (in.rank() != 4) throw ShapeError(this->name() + ": expected rank-4 NHWC input, got " + in.str());
    if (in[3] != in_ch_) {
      throw ShapeError(this->name() + ": input has " + std::to_string(in[3]) + " channels, kernel expects " +
                       std::to_string(in_ch_));
    }
    return Shape{in[0], in[1], in[2], out_ch_};
  }

  std::int64_t param_count() const override { return (kh_ * kw_ * in_ch_ + 1) * out_ch_; }

  Tensor<T> forward(const Tensor<T>& x, Mode, Rng&) override {
    const Shape out_shape = output_shape(x.shape());
    x_ = x;
    have_ctx_ = true;
    const std::int64_t batch = x.shape()[0], height = x.shape()[1], width = x.shape()[2];
    const std::int64_t m = height * width, k = kh_ * kw_ * in_ch_;
    Tensor<T> out(out_shape);
    auto run_sample = [&](std::int64_t n, std::vector<T>& col, bool par) {
      im2col(x, n, col.data());
      T* dst = out.data() + n * m * out_ch_;
      detail::gemm_nn(m, out_ch_, k, col.data(), k, kernel_.data(), out_ch_, dst, out_ch_, false, par);
      const T* b = bias_.data();
      for (std::int64_t r = 0; r < m; ++r)
        for (std::int64_t c = 0; c < out_ch_; ++c) dst[r * out_ch_ + c] += b[c];
    };
    if (batch > 1) {
      parallel_for(batch, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<T> col(static_cast<std::size_t>(m * k));
        for (std::int64_t n = lo; n < hi; ++n) run_sample(n, col, false);
      });
    } else {
      std::vector<T> col(static_cast<std::size_t>(m * k));
      run_sample(0, col, true);
    }
    ensure_finite(out, "conv2d");
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward_context(have_ctx_);
    const std::int64_t batch = x_.shape()[0], height = x_.shape()[1], width = x_.shape()[2];
    const std::int64_t m = height * width, k = kh_ * kw_ * in_ch_;

    // Kernel gradient: per-chunk partials reduced in fixed chunk order. The
    // chunk count depends only on the batch size, not on the thread count.
    const std::int64_t nchunks = std::min<std::int64_t>(batch, 8);
    const std::int64_t per_chunk = (batch + nchunks - 1) / nchunks;
    std::vector<std::vector<T>> partial(static_cast<std::size_t>(nchunks));
    parallel_for(nchunks, [&](std::int64_t c0, std::int64_t c1) {
      std::vector<T> col(static_cast<std::size_t>(m * k));
      for (std::int64_t c = c0; c < c1; ++c) {
        auto& acc = partial[static_cast<std::size_t>(c)];
        acc.assign(static_cast<std::size_t>(k * out_ch_), T(0));
        const std::int64_t n_end = std::min(batch, (c + 1) * per_chunk);
        for (std::int64_t n = c * per_chunk; n < n_end; ++n) {
          im2col(x_, n, col.data());
          detail::gemm_tn(k, out_ch_, m, col.data(), k, dy.data() + n * m * out_ch_, out_ch_,
                          acc.data(), out_ch_, true, false);
        }
      }
    });
    std::fill(dkernel_.values().begin(), dkernel_.values().end(), T(0));
    for (std::int64_t c = 0; c < nchunks; ++c) {
      const auto& acc = partial[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < k * out_ch_; ++i) dkernel_[i] += acc[static_cast<std::size_t>(i)];
    }

    std::fill(dbias_.values().begin(), dbias_.values().end(), T(0));
    const T* pdy = dy.data();
    for (std::int64_t r = 0; r < batch * m; ++r)
      for (std::int64_t c = 0; c < out_ch_; ++c) dbias_[c] += pdy[r * out_ch_ + c];

    // Input gradient: dcol = dy_n * kernel^T, scattered back per sample.
    Tensor<T> kernel_t = transpose2d(Tensor<T>(Shape{k, out_ch_}, kernel_.values()));
    Tensor<T> dx(x_.shape());
    parallel_for(batch, [&](std::int64_t lo, std::int64_t hi) {
      std::vector<T> dcol(static_cast<std::size_t>(m * k));
      for (std::int64_t n = lo; n < hi; ++n) {
        detail::gemm_nn(m, k, out_ch_, dy.data() + n * m * out_ch_, out_ch_, kernel_t.data(), k,
                        dcol.data(), k, false, false);
        col2im_add(dcol.data(), n, dx);
      }
    });
    return dx;
  }

  std::vector<ParamRef<T>> trainable() override {
    return {{"kernel", &kernel_, &dkernel_}, {"bias", &bias_, &dbias_}};
  }

 private:
  void im2col(const Tensor<T>& x, std::int64_t n, T* col) const {
    const std::int64_t height = x.shape()[1], width = x.shape()[2];
    const std::int64_t pad_h = (kh_ - 1) / 2, pad_w = (kw_ - 1) / 2;
    const std::int64_t k = kh_ * kw_ * in_ch_;
    const T* src = x.data() + n * height * width * in_ch_;
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t xw = 0; xw < width; ++xw) {
        T* row = col + (y * width + xw) * k;
        for (std::int64_t ky = 0; ky < kh_; ++ky) {
          const std::int64_t iy = y + ky - pad_h;
          for (std::int64_t kx = 0; kx < kw_; ++kx) {
            const std::int64_t ix = xw + kx - pad_w;
            T* cell = row + (ky * kw_ + kx) * in_ch_;
            if (iy < 0 || iy >= height || ix < 0 || ix >= width) {
              std::fill(cell, cell + in_ch_, T(0));
            } else {
              const T* px = src + (iy * width + ix) * in_ch_;
              std::copy(px, px + in_ch_, cell);
            }
          }
        }
      }
    }
  }

  void col2im_add(const T* dcol, std::int64_t n, Tensor<T>& dx) const {
    const std::int64_t height = dx.shape()[1], width = dx.shape()[2];
    const std::int64_t pad_h = (kh_ - 1) / 2, pad_w = (kw_ - 1) / 2;
    const std::int64_t k = kh_ * kw_ * in_ch_;
    T* dst = dx.data() + n * height * width * in_ch_;
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t xw = 0; xw < width; ++xw) {
        const T* row = dcol + (y * width + xw) * k;
        for (std::int64_t ky = 0; ky < kh_; ++ky) {
          const std::int64_t iy = y + ky - pad_h;
          if (iy < 0 || iy >= height) continue;
          for (std::int64_t kx = 0; kx < kw_; ++kx) {
            const std::int64_t ix = xw + kx - pad_w;
            if (ix < 0 || ix >= width) continue;
            const T* cell = row + (ky * kw_ + kx) * in_ch_;
            T* px = dst + (iy * width + ix) * in_ch_;
            for (std::int64_t c = 0; c < in_ch_; ++c) px[c] += cell[c];
          }
        }
      }
    }
  }

  std::int64_t kh_, kw_, in_ch_, out_ch_;
  Tensor<T> kernel_, bias_, dkernel_, dbias_;
  Tensor<T> x_;
  bool have_ctx_ = false;
};

/// 2x2 stride-2 max pooling with edge-truncated windows, so the output
/// extent is ceil(input / 2). The argmax of each window is recorded and
/// backward routes the incoming gradient only to those positions.
template <typename T>
class MaxPool2D : public Layer<T> {
 public:
  explicit MaxPool2D(std::string name) : Layer<T>(std::move(name)) {}

  const char* type_name() const override { return "MaxPooling2D"; }

  static std::int64_t pooled_extent(std::int64_t in) { return (in + 1) / 2; }

  Shape output_shape(const Shape& in) const override {
    if (in.rank() != 4) throw ShapeError(this->name() + ": expected rank-4 NHWC input, got " + in.str());
    return Shape{in[0], pooled_extent(in[1]), pooled_extent(in[2]), in[3]};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode, Rng&) override {
    const Shape out_shape = output_shape(x.shape());
    in_shape_ = x.shape();
    have_ctx_ = true;
    const std::int64_t batch = x.shape()[0], height = x.shape()[1], width = x.shape()[2], ch = x.shape()[3];
    const std::int64_t oh = out_shape[1], ow = out_shape[2];
    Tensor<T> out(out_shape);
    argmax_.assign(static_cast<std::size_t>(out.numel()), 0);
    parallel_for(batch, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t n = lo; n < hi; ++n) {
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t y1 = std::min(2 * oy + 2, height);
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t x1 = std::min(2 * ox + 2, width);
            for (std::int64_t c = 0; c < ch; ++c) {
              T best{};
              std::int64_t best_idx = -1;
              for (std::int64_t y = 2 * oy; y < y1; ++y) {
                for (std::int64_t xw = 2 * ox; xw < x1; ++xw) {
                  const std::int64_t idx = ((n * height + y) * width + xw) * ch + c;
                  const T v = x[idx];
                  if (best_idx < 0 || v > best) {
                    best = v;
                    best_idx = idx;
                  }
                }
              }
              const std::int64_t oidx = ((n * oh + oy) * ow + ox) * ch + c;
              out[oidx] = best;
              argmax_[static_cast<std::size_t>(oidx)] = best_idx;
            }
          }
        }
      }
    });
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward_context(have_ctx_);
    Tensor<T> dx(in_shape_);
    const std::int64_t n = dy.numel();
    for (std::int64_t i = 0; i < n; ++i) dx[argmax_[static_cast<std::size_t>(i)]] += dy[i];
    return dx;
  }

 private:
  Shape in_shape_;
  std::vector<std::int64_t> argmax_;
  bool have_ctx_ = false;
};

/// Per-channel batch normalization over NHWC. Train mode standardizes by
/// batch statistics and updates the moving estimates; eval mode uses the
/// moving estimates and refuses to run before any exist.
template <typename T>
class BatchNorm : public Layer<T> {
 public:
  BatchNorm(std::string name, std::int64_t ch, double epsilon = kBatchNormEpsilon)
      : Layer<T>(std::move(name)),
        ch_(ch),
        epsilon_(epsilon),
        gamma_(Tensor<T>::full(Shape{ch}, T(1))),
        beta_(Shape{ch}),
        moving_mean_(Shape{ch}),
        moving_var_(Tensor<T>::full(Shape{ch}, T(1))),
        dgamma_(Shape{ch}),
        dbeta_(Shape{ch}) {}

  const char* type_name() const override { return "BatchNormalization"; }

  Shape output_shape(const Shape& in) const override {
    if (in.rank() != 4) throw ShapeError(this->name() + ": expected rank-4 NHWC input, got " + in.str());
    if (in[3] != ch_) {
      throw ShapeError(this->name() + ": input has " + std::to_string(in[3]) + " channels, expected " +
                       std::to_string(ch_));
    }
    return in;
  }

  std::int64_t param_count() const override { return 4 * ch_; }

  bool stats_initialized() const { return stats_initialized_; }
  void mark_stats_initialized() { stats_initialized_ = true; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng&) override {
    output_shape(x.shape());
    const std::int64_t rows = x.numel() / ch_;
    mode_ = mode;
    have_ctx_ = true;
    xhat_ = Tensor<T>(x.shape());
    inv_std_ = Tensor<T>(Shape{ch_});
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* pxh = xhat_.data();
    T* po = out.data();

    if (mode == Mode::eval && !stats_initialized_) {
      throw StateError(this->name() + ": eval-mode forward before moving statistics exist");
    }

    std::vector<T> mean(static_cast<std::size_t>(ch_)), var(static_cast<std::size_t>(ch_));
    if (mode == Mode::train) {
      std::vector<T> sums = channel_reduce(rows, [&](std::int64_t r, T* acc) {
        const T* row = px + r * ch_;
        for (std::int64_t c = 0; c < ch_; ++c) acc[c] += row[c];
      });
      for (std::int64_t c = 0; c < ch_; ++c) mean[static_cast<std::size_t>(c)] = sums[static_cast<std::size_t>(c)] / static_cast<T>(rows);
      std::vector<T> sqs = channel_reduce(rows, [&](std::int64_t r, T* acc) {
        const T* row = px + r * ch_;
        for (std::int64_t c = 0; c < ch_; ++c) {
          const T d = row[c] - mean[static_cast<std::size_t>(c)];
          acc[c] += d * d;
        }
      });
      const T mom = static_cast<T>(kBatchNormMomentum);
      for (std::int64_t c = 0; c < ch_; ++c) {
        var[static_cast<std::size_t>(c)] = sqs[static_cast<std::size_t>(c)] / static_cast<T>(rows);
        moving_mean_[c] = mom * moving_mean_[c] + (T(1) - mom) * mean[static_cast<std::size_t>(c)];
        moving_var_[c] = mom * moving_var_[c] + (T(1) - mom) * var[static_cast<std::size_t>(c)];
      }
    } else {
      for (std::int64_t c = 0; c < ch_; ++c) {
        mean[static_cast<std::size_t>(c)] = moving_mean_[c];
        var[static_cast<std::size_t>(c)] = moving_var_[c];
      }
    }
    for (std::int64_t c = 0; c < ch_; ++c) {
      inv_std_[c] = T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + static_cast<T>(epsilon_));
    }
    parallel_for(rows, [&](std::int64_t r0, std::int64_t r1) {
      for (std::int64_t r = r0; r < r1; ++r) {
        const T* row = px + r * ch_;
        T* rxh = pxh + r * ch_;
        T* ro = po + r * ch_;
        for (std::int64_t c = 0; c < ch_; ++c) {
          const T xh = (row[c] - mean[static_cast<std::size_t>(c)]) * inv_std_[c];
          rxh[c] = xh;
          ro[c] = gamma_[c] * xh + beta_[c];
        }
      }
    }, 1024);
    if (mode == Mode::train) stats_initialized_ = true;
    ensure_finite(out, "batchnorm");
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward_context(have_ctx_);
    ensure_same_shape(dy, xhat_, "batchnorm backward");
    const std::int64_t rows = dy.numel() / ch_;
    Tensor<T> dx(dy.shape());
    const T* pdy = dy.data();
    const T* pxh = xhat_.data();
    T* pdx = dx.data();
    std::vector<T> sum_dy = channel_reduce(rows, [&](std::int64_t r, T* acc) {
      const T* row = pdy + r * ch_;
      for (std::int64_t c = 0; c < ch_; ++c) acc[c] += row[c];
    });
    std::vector<T> sum_dy_xh = channel_reduce(rows, [&](std::int64_t r, T* acc) {
      const T* rdy = pdy + r * ch_;
      const T* rxh = pxh + r * ch_;
      for (std::int64_t c = 0; c < ch_; ++c) acc[c] += rdy[c] * rxh[c];
    });
    for (std::int64_t c = 0; c < ch_; ++c) {
      dgamma_[c] = sum_dy_xh[static_cast<std::size_t>(c)];
      dbeta_[c] = sum_dy[static_cast<std::size_t>(c)];
    }
    const T inv_rows = T(1) / static_cast<T>(rows);
    parallel_for(rows, [&](std::int64_t r0, std::int64_t r1) {
      for (std::int64_t r = r0; r < r1; ++r) {
        const T* rdy = pdy + r * ch_;
        const T* rxh = pxh + r * ch_;
        T* rdx = pdx + r * ch_;
        for (std::int64_t c = 0; c < ch_; ++c) {
          const T g = gamma_[c];
          if (mode_ == Mode::train) {
            // Differentiates through the batch mean and variance.
            rdx[c] = inv_std_[c] * (rdy[c] * g - inv_rows * (sum_dy[static_cast<std::size_t>(c)] * g +
                                                             rxh[c] * sum_dy_xh[static_cast<std::size_t>(c)] * g));
          } else {
            rdx[c] = rdy[c] * g * inv_std_[c];
          }
        }
      }
    }, 1024);
    return dx;
  }

  std::vector<ParamRef<T>> trainable() override {
    return {{"gamma", &gamma_, &dgamma_}, {"beta", &beta_, &dbeta_}};
  }

  std::vector<ParamRef<T>> state() override {
    return {{"moving_mean", &moving_mean_, nullptr}, {"moving_var", &moving_var_, nullptr}};
  }

 private:
  /// Per-channel reduction over rows with a fixed chunk partition, partials
  /// combined in chunk order; independent of thread count.
  template <typename Body>
  std::vector<T> channel_reduce(std::int64_t rows, const Body& body) const {
    const std::int64_t nchunks = std::min<std::int64_t>(rows, 16);
    const std::int64_t per_chunk = (rows + nchunks - 1) / nchunks;
    std::vector<std::vector<T>> partial(static_cast<std::size_t>(nchunks));
    parallel_for(nchunks, [&](std::int64_t k0, std::int64_t k1) {
      for (std::int64_t k = k0; k < k1; ++k) {
        auto& acc = partial[static_cast<std::size_t>(k)];
        acc.assign(static_cast<std::size_t>(ch_), T(0));
        const std::int64_t r_end = std::min(rows, (k + 1) * per_chunk);
        for (std::int64_t r = k * per_chunk; r < r_end; ++r) body(r, acc.data());
      }
    });
    std::vector<T> total(static_cast<std::size_t>(ch_), T(0));
    for (const auto& acc : partial)
      for (std::int64_t c = 0; c < ch_; ++c) total[static_cast<std::size_t>(c)] += acc[static_cast<std::size_t>(c)];
    return total;
  }

  std::int64_t ch_;
  double epsilon_;
  Tensor<T> gamma_, beta_, moving_mean_, moving_var_, dgamma_, dbeta_;
  Tensor<T> xhat_, inv_std_;
  Mode mode_ = Mode::train;
  bool stats_initialized_ = false;
  bool have_ctx_ = false;
};

/// Inverted dropout: train mode zeroes each element with probability rate
/// and scales survivors by 1/(1-rate); eval mode is the identity.
template <typename T>
class Dropout : public Layer<T> {
 public:
  Dropout(std::string name, double rate) : Layer<T>(std::move(name)), rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) {
      throw ConfigError(this->name() + ": dropout rate must be in [0, 1), got " + std::to_string(rate));
    }
  }

  const char* type_name() const override { return "Dropout"; }

  Shape output_shape(const Shape& in) const override { return in; }

  double rate() const { return rate_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override {
    mode_ = mode;
    have_ctx_ = true;
    if (mode == Mode::eval || rate_ == 0.0) return x;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_ = Tensor<T>(x.shape());
    Tensor<T> out(x.shape());
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      const T m = rng.uniform() < rate_ ? T(0) : keep_scale;
      mask_[i] = m;
      out[i] = x[i] * m;
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward_context(have_ctx_);
    if (mode_ == Mode::eval || rate_ == 0.0) return dy;
    return mul(dy, mask_);
  }

 private:
  double rate_;
  Tensor<T> mask_;
  Mode mode_ = Mode::train;
  bool have_ctx_ = false;
};

/// Row-major flatten of NHWC feature maps to (batch, features).
template <typename T>
class Flatten : public Layer<T> {
 public:
  explicit Flatten(std::string name) : Layer<T>(std::move(name)) {}

  const char* type_name() const override { return "Flatten"; }

  Shape output_shape(const Shape& in) const override {
    if (in.rank() != 4) throw ShapeError(this->name() + ": expected rank-4 NHWC input, got " + in.str());
    return Shape{in[0], in[1] * in[2] * in[3]};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode, Rng&) override {
    in_shape_ = x.shape();
    have_ctx_ = true;
    return x.reshaped(output_shape(x.shape()));
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward_context(have_ctx_);
    return dy.reshaped(in_shape_);
  }

 private:
  Shape in_shape_;
  bool have_ctx_ = false;
};

/// Fully connected layer with an optional fused activation.
template <typename T>
class Dense : public Layer<T> {
 public:
  Dense(std::string name, std::int64_t in, std::int64_t out, Activation act, Rng& init_rng)
      : Layer<T>(std::move(name)),
        in_(in),
        out_(out),
        act_(act),
        weights_(Shape{in, out}),
        bias_(Shape{out}),
        dweights_(Shape{in, out}),
        dbias_(Shape{out}) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    for (std::int64_t i = 0; i < weights_.numel(); ++i)
      weights_[i] = static_cast<T>(init_rng.uniform(-bound, bound));
  }

  const char* type_name() const override { return "Dense"; }

  Shape output_shape(const Shape& in) const override {
    if (in.rank() != 2) throw ShapeError(this->name() + ": expected rank-2 input, got " + in.str());
    if (in[1] != in_) {
      throw ShapeError(this->name() + ": input has " + std::to_string(in[1]) + " features, expected " +
                       std::to_string(in_));
    }
    return Shape{in[0], out_};
  }

  std::int64_t param_count() const override { return (in_ + 1) * out_; }

  Activation activation() const { return act_; }

  Tensor<T> forward(const Tensor<T>& x, Mode, Rng&) override {
    output_shape(x.shape());
    x_ = x;
    have_ctx_ = true;
    z_ = add_channels(matmul(x, weights_), bias_);
    switch (act_) {
      case Activation::none:
        a_ = z_;
        break;
      case Activation::relu:
        a_ = relu(z_);
        break;
      case Activation::sigmoid:
        a_ = sigmoid(z_);
        break;
    }
    return a_;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward_context(have_ctx_);
    Tensor<T> dz(dy.shape());
    switch (act_) {
      case Activation::none:
        dz = dy;
        break;
      case Activation::relu:
        for (std::int64_t i = 0; i < dy.numel(); ++i) dz[i] = z_[i] > T(0) ? dy[i] : T(0);
        break;
      case Activation::sigmoid:
        for (std::int64_t i = 0; i < dy.numel(); ++i) dz[i] = dy[i] * a_[i] * (T(1) - a_[i]);
        break;
    }
    return backward_from_preactivation(dz);
  }

  /// Backward entry for losses fused with the activation (sigmoid + binary
  /// cross entropy), where dz w.r.t. the pre-activation is already known.
  Tensor<T> backward_from_preactivation(const Tensor<T>& dz) {
    this->require_forward_context(have_ctx_);
    dweights_ = matmul_tn(x_, dz);
    std::fill(dbias_.values().begin(), dbias_.values().end(), T(0));
    for (std::int64_t r = 0; r < dz.shape()[0]; ++r)
      for (std::int64_t c = 0; c < out_; ++c) dbias_[c] += dz(r, c);
    return matmul_nt(dz, weights_);
  }

  std::vector<ParamRef<T>> trainable() override {
    return {{"kernel", &weights_, &dweights_}, {"bias", &bias_, &dbias_}};
  }

 private:
  std::int64_t in_, out_;
  Activation act_;
  Tensor<T> weights_, bias_, dweights_, dbias_;
  Tensor<T> x_, z_, a_;
  bool have_ctx_ = false;
};

}  // namespace cxrnet
