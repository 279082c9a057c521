#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kws/nn/loss.hpp"
#include "kws/nn/network.hpp"
#include "kws/nn/optimizer.hpp"

namespace kws::nn {

struct Example {
  Tensor input;                // n == 1
  std::vector<double> target;  // flattened output-shaped target
};

struct EarlyStopping {
  std::span<const Example> monitor;
  int patience = 10;  // epochs without improvement tolerated before stopping
};

struct TrainOptions {
  LossKind loss = LossKind::kSquaredError;
  OptimizerSpec optimizer;
  // Training runs until state.epochs_completed == epochs, so a reloaded
  // state resumes where it stopped.
  int epochs = 1;
  int batch_size = 32;
  bool shuffle = true;
  std::optional<EarlyStopping> early_stopping;
  // Called after every epoch with (epoch, train loss, monitor loss or NaN).
  std::function<void(int, double, double)> on_epoch;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> monitor_loss;
  int best_epoch = -1;
  bool stopped_early = false;
};

// Mini-batch training. Batch loss is the mean per-example loss; examples of
// different shapes inside one batch are run as separate sub-batches and their
// gradients summed in a fixed order. Softmax + categorical cross-entropy and
// sigmoid + binary cross-entropy heads are differentiated at the logits.
// With early stopping the best monitored state is restored at the end.
TrainHistory train(const NetworkSpec& spec, NetworkState& state, std::span<const Example> data,
                   const TrainOptions& opts);

// Mean per-example loss in eval mode.
double evaluate_loss(const NetworkSpec& spec, const NetworkState& state, std::span<const Example> data,
                     LossKind loss, int batch_size = 256);

// Eval-mode forward of a single example.
Tensor predict(const NetworkSpec& spec, const NetworkState& state, const Tensor& input);

// SplitMix64-based mixing used for every derived seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Loss value and gradient for one forward pass; `end_layer` receives the
// layer count to backpropagate through (fused heads stop one layer early).
struct HeadGradient {
  double loss = 0.0;
  Tensor grad;
  int end_layer = 0;
};
HeadGradient head_gradient(const NetworkSpec& spec, const ForwardCache& cache, const Tensor& target,
                           LossKind loss);

}  // namespace kws::nn
