#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "cxrnet/tensor.hpp"

namespace cxrnet {

/// Central-difference gradient check over every coordinate of one tensor.
/// loss() must evaluate the scalar objective with the tensor's current
/// values; analytic holds d loss / d tensor. Returns the worst relative
/// error (absolute error where both gradients are tiny). Meant for 64-bit
/// runs on small tensors.
inline double grad_check_max_rel_error(Tensor<double>& tensor, const Tensor<double>& analytic,
                                       const std::function<double()>& loss, double step = 1e-5) {
  ensure_same_shape(tensor, analytic, "grad_check");
  double worst = 0.0;
  for (std::int64_t i = 0; i < tensor.numel(); ++i) {
    const double saved = tensor[i];
    tensor[i] = saved + step;
    const double up = loss();
    tensor[i] = saved - step;
    const double down = loss();
    tensor[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max(std::fabs(a), std::fabs(numeric));
    const double err = denom < 1e-6 ? std::fabs(a - numeric) : std::fabs(a - numeric) / denom;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace cxrnet
