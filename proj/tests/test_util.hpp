#pragma once

// Shared test helpers and the independent oracles the suites check against.
// The oracles are deliberately written as direct definitional loops with no
// code shared with the library implementations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cxrnet/cxrnet.hpp"

namespace testutil {

inline cxrnet::Tensor<double> random_tensor(const cxrnet::Shape& shape, cxrnet::Rng& rng,
                                            double lo = -1.0, double hi = 1.0) {
  cxrnet::Tensor<double> t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

template <typename T>
cxrnet::Tensor<T> random_tensor_t(const cxrnet::Shape& shape, cxrnet::Rng& rng, double lo = -1.0,
                                  double hi = 1.0) {
  cxrnet::Tensor<T> t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Direct six-nested-loop cross-correlation with same zero padding and
/// stride 1, NHWC. kernel is (kh, kw, in_ch, out_ch).
inline cxrnet::Tensor<double> naive_conv2d(const cxrnet::Tensor<double>& x,
                                           const cxrnet::Tensor<double>& kernel,
                                           const std::vector<double>& bias) {
  const std::int64_t batch = x.shape()[0], height = x.shape()[1], width = x.shape()[2], cin = x.shape()[3];
  const std::int64_t kh = kernel.shape()[0], kw = kernel.shape()[1], cout = kernel.shape()[3];
  const std::int64_t pad_h = (kh - 1) / 2, pad_w = (kw - 1) / 2;
  cxrnet::Tensor<double> out(cxrnet::Shape{batch, height, width, cout});
  for (std::int64_t n = 0; n < batch; ++n)
    for (std::int64_t y = 0; y < height; ++y)
      for (std::int64_t xx = 0; xx < width; ++xx)
        for (std::int64_t o = 0; o < cout; ++o) {
          double acc = bias[static_cast<std::size_t>(o)];
          for (std::int64_t ky = 0; ky < kh; ++ky)
            for (std::int64_t kx = 0; kx < kw; ++kx)
              for (std::int64_t c = 0; c < cin; ++c) {
                const std::int64_t iy = y + ky - pad_h;
                const std::int64_t ix = xx + kx - pad_w;
                if (iy < 0 || iy >= height || ix < 0 || ix >= width) continue;
                acc += x(n, iy, ix, c) * kernel(ky, kx, c, o);
              }
          out(n, y, xx, o) = acc;
        }
  return out;
}

/// Direct 2x2 stride-2 max pooling with edge-truncated windows.
inline cxrnet::Tensor<double> naive_maxpool(const cxrnet::Tensor<double>& x) {
  const std::int64_t batch = x.shape()[0], height = x.shape()[1], width = x.shape()[2], ch = x.shape()[3];
  const std::int64_t oh = (height + 1) / 2, ow = (width + 1) / 2;
  cxrnet::Tensor<double> out(cxrnet::Shape{batch, oh, ow, ch});
  for (std::int64_t n = 0; n < batch; ++n)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox)
        for (std::int64_t c = 0; c < ch; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          for (std::int64_t y = 2 * oy; y < std::min(2 * oy + 2, height); ++y)
            for (std::int64_t xx = 2 * ox; xx < std::min(2 * ox + 2, width); ++xx)
              best = std::max(best, x(n, y, xx, c));
          out(n, oy, ox, c) = best;
        }
  return out;
}

/// Straight transliteration of the ten performance-measure formulas.
struct NaiveMetrics {
  double sensitivity, specificity, precision, npv, fpr, fdr, fnr, accuracy, f1, mcc;
  bool has_sensitivity, has_specificity, has_precision, has_npv, has_fpr, has_fdr, has_fnr,
      has_accuracy, has_f1, has_mcc;
};

inline NaiveMetrics naive_metrics(std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn) {
  NaiveMetrics m{};
  auto set = [](double num, double den, double& out, bool& has) {
    has = den != 0.0;
    if (has) out = num / den;
  };
  const double dtp = static_cast<double>(tp), dfp = static_cast<double>(fp);
  const double dtn = static_cast<double>(tn), dfn = static_cast<double>(fn);
  set(dtp, dtp + dfn, m.sensitivity, m.has_sensitivity);
  set(dtn, dfp + dtn, m.specificity, m.has_specificity);
  set(dtp, dtp + dfp, m.precision, m.has_precision);
  set(dtn, dtn + dfn, m.npv, m.has_npv);
  set(dfp, dfp + dtn, m.fpr, m.has_fpr);
  set(dfp, dfp + dtp, m.fdr, m.has_fdr);
  set(dfn, dfn + dtp, m.fnr, m.has_fnr);
  set(dtp + dtn, dtp + dfp + dtn + dfn, m.accuracy, m.has_accuracy);
  set(2.0 * dtp, 2.0 * dtp + dfp + dfn, m.f1, m.has_f1);
  const double prod = (dtp + dfp) * (dtp + dfn) * (dtn + dfp) * (dtn + dfn);
  m.has_mcc = prod != 0.0;
  if (m.has_mcc) m.mcc = (dtp * dtn - dfp * dfn) / std::sqrt(prod);
  return m;
}

/// Loss of the whole model on a fixed batch, used as the objective for
/// finite-difference checks. Dropout masks are frozen by restoring the
/// model's random stream before every forward pass.
template <typename T>
double model_bce(cxrnet::Model<T>& model, const cxrnet::Rng& rng_state, const cxrnet::Tensor<T>& x,
                 const std::vector<int>& y) {
  model.set_rng(rng_state);
  return cxrnet::bce_loss(model.forward(x, cxrnet::Mode::train), y);
}

}  // namespace testutil
