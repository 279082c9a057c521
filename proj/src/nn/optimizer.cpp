#include "kws/nn/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "kws/error.hpp"

namespace kws::nn {

double LearningRateSchedule::at(int epoch) const {
  if (total_epochs <= 1) return start;
  const double f = std::clamp(static_cast<double>(epoch) / (total_epochs - 1), 0.0, 1.0);
  return start + (end - start) * f;
}

void OptimizerSpec::validate() const {
  if (!(lr.start > 0.0) || !(lr.end > 0.0)) throw ConfigError("learning rates must be > 0");
  if (lr.total_epochs < 1) throw ConfigError("schedule needs >= 1 epoch");
}

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgdNesterov: return "sgd_nesterov";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kAdadelta: return "adadelta";
  }
  return "?";
}

void init_slots(NetworkState& state) {
  auto zero_like = [&](std::vector<LayerParams>& slots) {
    if (slots.size() == state.params.size()) return;
    slots.resize(state.params.size());
    for (std::size_t l = 0; l < slots.size(); ++l) {
      slots[l].weight = Eigen::MatrixXd::Zero(state.params[l].weight.rows(), state.params[l].weight.cols());
      slots[l].bias = Eigen::VectorXd::Zero(state.params[l].bias.size());
    }
  };
  zero_like(state.slot1);
  zero_like(state.slot2);
}

namespace {

template <typename P, typename G, typename S>
void update(const OptimizerSpec& opt, double lr, double bias1, double bias2, P& p, const G& g, S& s1, S& s2) {
  switch (opt.kind) {
    case OptimizerKind::kSgdNesterov: {
      // v <- mu v - lr g ; p <- p + mu v - lr g
      s1 = opt.momentum * s1 - lr * g;
      p += opt.momentum * s1 - lr * g;
      break;
    }
    case OptimizerKind::kAdam: {
      s1 = opt.beta1 * s1 + (1.0 - opt.beta1) * g;
      s2 = opt.beta2 * s2 + (1.0 - opt.beta2) * g.cwiseProduct(g);
      p.array() -= lr * (s1.array() / bias1) / ((s2.array() / bias2).sqrt() + opt.epsilon);
      break;
    }
    case OptimizerKind::kAdadelta: {
      s1 = opt.rho * s1 + (1.0 - opt.rho) * g.cwiseProduct(g);
      S dx = (-((s2.array() + opt.adadelta_epsilon).sqrt() / (s1.array() + opt.adadelta_epsilon).sqrt()) *
              g.array()).matrix();
      s2 = opt.rho * s2 + (1.0 - opt.rho) * dx.cwiseProduct(dx);
      p += lr * dx;
      break;
    }
  }
}

}  // namespace

void optimizer_step(const OptimizerSpec& opt, NetworkState& state, const Gradients& grads, int epoch) {
  if (grads.size() != state.params.size()) throw ConfigError("optimizer: gradient layout mismatch");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    if (!grads[l].weight.allFinite() || !grads[l].bias.allFinite())
      throw NumericError("non-finite gradient in layer " + std::to_string(l) + " at epoch " +
                         std::to_string(epoch) + ", step " + std::to_string(state.step + 1));
  }
  init_slots(state);
  const double lr = opt.lr.at(epoch);
  const std::uint64_t t = state.step + 1;
  const double bias1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto& p = state.params[l];
    if (p.weight.size() > 0)
      update(opt, lr, bias1, bias2, p.weight, grads[l].weight, state.slot1[l].weight, state.slot2[l].weight);
    if (p.bias.size() > 0)
      update(opt, lr, bias1, bias2, p.bias, grads[l].bias, state.slot1[l].bias, state.slot2[l].bias);
  }
  state.step = t;
  ++state.version;
}

}  // namespace kws::nn
