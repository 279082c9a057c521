#include "kws/nn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "kws/error.hpp"

namespace kws::nn {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

Tensor targets_tensor(std::span<const Example* const> batch, const Shape& out_shape) {
  Tensor t(static_cast<int>(batch.size()), out_shape);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& tg = batch[i]->target;
    if (static_cast<int>(tg.size()) != out_shape.size())
      throw DataError("target size " + std::to_string(tg.size()) + " does not match output " + out_shape.str());
    std::copy(tg.begin(), tg.end(), t.example(static_cast<int>(i)).begin());
  }
  return t;
}

Tensor inputs_tensor(std::span<const Example* const> batch) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto* e : batch) ptrs.push_back(&e->input);
  return stack(ptrs);
}

// Splits a batch into runs of equal input shape, preserving first-seen order.
std::vector<std::vector<const Example*>> group_by_shape(std::span<const Example* const> batch) {
  std::vector<std::vector<const Example*>> groups;
  std::vector<Shape> keys;
  for (const auto* e : batch) {
    if (e->input.n != 1) throw DataError("training examples must hold exactly one input");
    auto it = std::find(keys.begin(), keys.end(), e->input.shape);
    if (it == keys.end()) {
      keys.push_back(e->input.shape);
      groups.emplace_back();
      groups.back().push_back(e);
    } else {
      groups[static_cast<std::size_t>(it - keys.begin())].push_back(e);
    }
  }
  return groups;
}

void accumulate(Gradients& into, const Gradients& g, double scale) {
  for (std::size_t l = 0; l < into.size(); ++l) {
    if (into[l].weight.size()) into[l].weight += scale * g[l].weight;
    if (into[l].bias.size()) into[l].bias += scale * g[l].bias;
  }
}

}  // namespace

HeadGradient head_gradient(const NetworkSpec& spec, const ForwardCache& cache, const Tensor& target,
                           LossKind loss) {
  const int L = static_cast<int>(spec.layers.size());
  const Tensor& out = cache.values.back();
  HeadGradient h;
  const bool last_is_act = L > 0 && spec.layers.back().kind == LayerKind::kActivation;
  const auto act = last_is_act ? spec.layers.back().activation : Activation::kIdentity;
  const bool fused = last_is_act && ((act == Activation::kSoftmax && loss == LossKind::kCategoricalCrossEntropy) ||
                                     (act == Activation::kSigmoid && loss == LossKind::kSummedBinaryCrossEntropy));
  if (!fused) {
    auto r = compute_loss(loss, out, target);
    h.loss = r.value;
    h.grad = std::move(r.grad);
    h.end_layer = L;
    return h;
  }
  const auto per = per_example_loss(loss, out, target);
  h.loss = std::accumulate(per.begin(), per.end(), 0.0) / out.n;
  h.grad = Tensor(out.n, cache.values[L - 1].shape);
  const int k = out.shape.size();
  const double inv_n = 1.0 / out.n;
  for (int e = 0; e < out.n; ++e) {
    const auto p = out.example(e);
    const auto t = target.example(e);
    auto g = h.grad.example(e);
    if (act == Activation::kSoftmax) {
      const double tsum = std::accumulate(t.begin(), t.end(), 0.0);
      for (int j = 0; j < k; ++j) g[j] = (p[j] * tsum - t[j]) * inv_n;
    } else {
      for (int j = 0; j < k; ++j) g[j] = (p[j] - t[j]) * inv_n;
    }
  }
  h.end_layer = L - 1;
  return h;
}

Tensor predict(const NetworkSpec& spec, const NetworkState& state, const Tensor& input) {
  return forward(spec, state, input, Mode::kEval);
}

double evaluate_loss(const NetworkSpec& spec, const NetworkState& state, std::span<const Example> data,
                     LossKind loss, int batch_size) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  std::vector<const Example*> all;
  all.reserve(data.size());
  for (const auto& e : data) all.push_back(&e);
  for (std::size_t b = 0; b < all.size(); b += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(all.size(), b + static_cast<std::size_t>(batch_size));
    for (const auto& group : group_by_shape(std::span(all).subspan(b, end - b))) {
      const Tensor x = inputs_tensor(group);
      const Tensor y = forward(spec, state, x, Mode::kEval);
      const Tensor t = targets_tensor(group, y.shape);
      for (double v : per_example_loss(loss, y, t)) total += v;
    }
  }
  return total / static_cast<double>(data.size());
}

TrainHistory train(const NetworkSpec& spec, NetworkState& state, std::span<const Example> data,
                   const TrainOptions& opts) {
  if (data.empty()) throw DataError("train: empty dataset");
  if (opts.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  opts.optimizer.validate();
  if (opts.early_stopping && opts.early_stopping->monitor.empty())
    throw DataError("train: early stopping requested with an empty monitor set");
  init_slots(state);

  TrainHistory hist;
  std::vector<const Example*> order;
  order.reserve(data.size());
  for (const auto& e : data) order.push_back(&e);

  double best_monitor = std::numeric_limits<double>::infinity();
  NetworkState best_state;
  int since_best = 0;

  for (int epoch = static_cast<int>(state.epochs_completed); epoch < opts.epochs; ++epoch) {
    if (opts.shuffle) {
      std::mt19937_64 rng(mix_seed(state.seed, static_cast<std::uint64_t>(epoch)));
      order.assign(order.size(), nullptr);
      for (std::size_t i = 0; i < data.size(); ++i) order[i] = &data[i];
      std::shuffle(order.begin(), order.end(), rng);
    }
    double epoch_loss = 0.0;
    std::uint64_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(opts.batch_size), ++batch_index) {
      const auto end = std::min(order.size(), b + static_cast<std::size_t>(opts.batch_size));
      const auto batch = std::span<const Example* const>(order).subspan(b, end - b);
      const double batch_n = static_cast<double>(batch.size());
      Gradients total = zero_gradients(spec, state);
      std::uint64_t group_index = 0;
      for (const auto& group : group_by_shape(batch)) {
        const Tensor x = inputs_tensor(group);
        ForwardCache cache;
        const std::uint64_t dseed =
            mix_seed(mix_seed(mix_seed(state.seed, 0xd10u + static_cast<std::uint64_t>(epoch)), batch_index), group_index++);
        forward(spec, state, x, Mode::kTrain, dseed, &cache);
        const Tensor t = targets_tensor(group, cache.values.back().shape);
        const auto head = head_gradient(spec, cache, t, opts.loss);
        const double gsize = static_cast<double>(group.size());
        epoch_loss += head.loss * gsize;
        const Gradients g = backward(spec, state, cache, head.grad, nullptr, head.end_layer);
        // head gradients are per-group means; rescale to the batch mean
        accumulate(total, g, gsize / batch_n);
      }
      optimizer_step(opts.optimizer, state, total, epoch);
    }
    state.epochs_completed = static_cast<std::uint64_t>(epoch) + 1;
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss))
      throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
    hist.train_loss.push_back(epoch_loss);

    double monitor = std::numeric_limits<double>::quiet_NaN();
    if (opts.early_stopping) {
      monitor = evaluate_loss(spec, state, opts.early_stopping->monitor, opts.loss);
      hist.monitor_loss.push_back(monitor);
      if (monitor < best_monitor) {
        best_monitor = monitor;
        best_state = state;
        hist.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best > opts.early_stopping->patience) {
        hist.stopped_early = true;
        if (opts.on_epoch) opts.on_epoch(epoch, epoch_loss, monitor);
        break;
      }
    }
    if (opts.on_epoch) opts.on_epoch(epoch, epoch_loss, monitor);
  }
  if (opts.early_stopping && hist.best_epoch >= 0) {
    const auto version = state.version;
    state = std::move(best_state);
    state.version = version + 1;
  }
  return hist;
}

}  // namespace kws::nn
