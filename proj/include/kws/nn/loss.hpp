#pragma once

#include "kws/nn/tensor.hpp"

namespace kws::nn {

enum class LossKind {
  kCategoricalCrossEntropy,     // -sum_k t_k log p_k  (one-hot t: -log p_i)
  kSummedBinaryCrossEntropy,    // -sum_k [t_k log g_k + (1 - t_k) log(1 - g_k)]
  kSquaredError,                // ||t - p||^2
};

// Probabilities are clamped to [kLogEpsilon, 1 - kLogEpsilon] inside log().
inline constexpr double kLogEpsilon = 1e-12;

struct LossResult {
  double value = 0.0;  // mean over the batch of the per-example loss
  Tensor grad;         // d value / d prediction
};

LossResult compute_loss(LossKind kind, const Tensor& prediction, const Tensor& target);

// Per-example loss values.
std::vector<double> per_example_loss(LossKind kind, const Tensor& prediction, const Tensor& target);

}  // namespace kws::nn
