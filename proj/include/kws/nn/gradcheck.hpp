#pragma once

#include "kws/nn/loss.hpp"
#include "kws/nn/network.hpp"

namespace kws::nn {

struct GradCheckResult {
  double max_param_rel_error = 0.0;
  double max_input_rel_error = 0.0;
  int checked = 0;
};

// Central finite differences of the eval-mode loss against backward(),
// over every parameter (tied layers through their source weight) and every
// input element. Relative error |a - n| / max(|a|, |n|, floor).
GradCheckResult check_gradients(const NetworkSpec& spec, NetworkState state, const Tensor& input,
                                const Tensor& target, LossKind loss, double step = 1e-6,
                                double floor = 1e-7);

}  // namespace kws::nn
