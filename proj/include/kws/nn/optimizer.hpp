#pragma once

#include "kws/nn/network.hpp"

namespace kws::nn {

enum class OptimizerKind { kSgdNesterov, kAdam, kAdadelta };

// Linear interpolation from start (epoch 0) to end (epoch total_epochs - 1).
struct LearningRateSchedule {
  double start = 1e-3;
  double end = 1e-3;
  int total_epochs = 1;

  double at(int epoch) const;
};

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::kAdam;
  LearningRateSchedule lr;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double rho = 0.95;
  double adadelta_epsilon = 1e-6;

  void validate() const;
};

// Zero slots shaped like the parameters (no-op if already present).
void init_slots(NetworkState& state);

// One update with the rate for `epoch`. Throws NumericError when a gradient
// is not finite; the state is left untouched in that case.
void optimizer_step(const OptimizerSpec& opt, NetworkState& state, const Gradients& grads, int epoch);

std::string to_string(OptimizerKind k);

}  // namespace kws::nn
