#include "kws/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace kws::nn {
namespace {

double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace

GradCheckResult check_gradients(const NetworkSpec& spec, NetworkState state, const Tensor& input,
                                const Tensor& target, LossKind loss, double step, double floor) {
  auto loss_at = [&](const NetworkState& s, const Tensor& x) {
    return compute_loss(loss, forward(spec, s, x, Mode::kEval), target).value;
  };

  ForwardCache cache;
  const Tensor out = forward(spec, state, input, Mode::kEval, 0, &cache);
  const auto lr = compute_loss(loss, out, target);
  Tensor input_grad;
  const Gradients g = backward(spec, state, cache, lr.grad, &input_grad);

  GradCheckResult res;
  for (std::size_t l = 0; l < state.params.size(); ++l) {
    auto probe = [&](double& param, double analytic) {
      const double orig = param;
      param = orig + step;
      const double up = loss_at(state, input);
      param = orig - step;
      const double down = loss_at(state, input);
      param = orig;
      res.max_param_rel_error = std::max(res.max_param_rel_error, rel_error(analytic, (up - down) / (2 * step), floor));
      ++res.checked;
    };
    auto& p = state.params[l];
    for (Eigen::Index i = 0; i < p.weight.size(); ++i) probe(p.weight.data()[i], g[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) probe(p.bias[i], g[l].bias[i]);
  }
  Tensor x = input;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double orig = x.data[i];
    x.data[i] = orig + step;
    const double up = loss_at(state, x);
    x.data[i] = orig - step;
    const double down = loss_at(state, x);
    x.data[i] = orig;
    res.max_input_rel_error = std::max(res.max_input_rel_error, rel_error(input_grad.data[i], (up - down) / (2 * step), floor));
    ++res.checked;
  }
  return res;
}

}  // namespace kws::nn
