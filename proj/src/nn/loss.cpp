#include "kws/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "kws/error.hpp"

namespace kws::nn {
namespace {

void check(const Tensor& p, const Tensor& t) {
  if (p.n != t.n || p.shape.size() != t.shape.size())
    throw DataError("loss: prediction " + std::to_string(p.n) + "x" + p.shape.str() +
                    " vs target " + std::to_string(t.n) + "x" + t.shape.str());
}

}  // namespace

std::vector<double> per_example_loss(LossKind kind, const Tensor& prediction, const Tensor& target) {
  check(prediction, target);
  const int d = prediction.shape.size();
  std::vector<double> out(static_cast<std::size_t>(prediction.n), 0.0);
  for (int e = 0; e < prediction.n; ++e) {
    const auto p = prediction.example(e);
    const auto t = target.example(e);
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
      const double pc = std::clamp(p[k], kLogEpsilon, 1.0 - kLogEpsilon);
      switch (kind) {
        case LossKind::kCategoricalCrossEntropy:
          if (t[k] != 0.0) s -= t[k] * std::log(pc);
          break;
        case LossKind::kSummedBinaryCrossEntropy:
          s -= t[k] * std::log(pc) + (1.0 - t[k]) * std::log(1.0 - pc);
          break;
        case LossKind::kSquaredError: {
          const double r = p[k] - t[k];
          s += r * r;
          break;
        }
      }
    }
    out[static_cast<std::size_t>(e)] = s;
  }
  return out;
}

LossResult compute_loss(LossKind kind, const Tensor& prediction, const Tensor& target) {
  const auto per = per_example_loss(kind, prediction, target);
  LossResult r;
  for (double v : per) r.value += v;
  r.value /= prediction.n;
  r.grad = Tensor(prediction.n, prediction.shape);
  const double inv_n = 1.0 / prediction.n;
  for (std::size_t i = 0; i < prediction.data.size(); ++i) {
    const double p = prediction.data[i], t = target.data[i];
    const bool clamped = p < kLogEpsilon || p > 1.0 - kLogEpsilon;
    double g = 0.0;
    switch (kind) {
      case LossKind::kCategoricalCrossEntropy:
        g = clamped ? 0.0 : -t / p;
        break;
      case LossKind::kSummedBinaryCrossEntropy:
        g = clamped ? 0.0 : -t / p + (1.0 - t) / (1.0 - p);
        break;
      case LossKind::kSquaredError:
        g = 2.0 * (p - t);
        break;
    }
    r.grad.data[i] = g * inv_n;
  }
  return r;
}

}  // namespace kws::nn
