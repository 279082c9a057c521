#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "kws/nn/tensor.hpp"

namespace kws::nn {

enum class LayerKind {
  kDense,
  kConv2d,
  kMaxPool,
  kGlobalTemporalMaxPool,
  kDropout,
  kActivation,
  kTiedDense,
};

enum class Activation { kIdentity, kRelu, kLeakyRelu, kTanh, kSigmoid, kSoftmax };

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  int units = 0;       // dense
  int filters = 0;     // conv2d
  int kernel_h = 0;    // conv2d, along time
  int kernel_w = 0;    // conv2d, along features
  int pool_h = 0;      // maxpool (stride == window)
  int pool_w = 0;
  double rate = 0.0;   // dropout probability
  Activation activation = Activation::kIdentity;
  double alpha = 0.0;  // leaky ReLU slope
  int source = -1;     // tied_dense: index of the dense layer whose weight is reused transposed

  static LayerSpec dense(int units);
  static LayerSpec conv2d(int filters, int kernel_h, int kernel_w);
  static LayerSpec maxpool(int pool_h, int pool_w);
  static LayerSpec global_temporal_maxpool();
  static LayerSpec dropout(double rate);
  static LayerSpec act(Activation a, double alpha = 0.0);
  static LayerSpec tied_dense(int source);

  bool has_params() const {
    return kind == LayerKind::kDense || kind == LayerKind::kConv2d || kind == LayerKind::kTiedDense;
  }
};

// Layer stack over a fixed per-example input shape. input.h == 0 declares a
// variable-length time axis; parameter shapes must then not depend on it.
struct NetworkSpec {
  Shape input;
  std::vector<LayerSpec> layers;

  // One line per item, e.g. "input 1 0 39", "conv2d 80 10 39", "activation leaky_relu 0.333...".
  std::string canonical_text() const;
  static NetworkSpec parse(const std::string& text);
  // 32-byte SHA-256 of canonical_text().
  std::vector<std::uint8_t> hash() const;

  // Smallest time length accepted by the layer stack.
  int min_input_height() const;
  // Output shape of every layer for a concrete input shape; throws
  // ConfigError naming the first incompatible layer.
  std::vector<Shape> infer_shapes(const Shape& in) const;
  // Checks compatibility and tied-layer references.
  void validate() const;
  Shape output_shape(int input_height = 0) const;
};

struct LayerParams {
  Eigen::MatrixXd weight;  // dense: out x in; conv2d: filters x (c * kh * kw); empty for tied
  Eigen::VectorXd bias;

  bool operator==(const LayerParams& o) const {
    return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() &&
           bias.size() == o.bias.size() && weight == o.weight && bias == o.bias;
  }
};

// Gradients share the parameter layout; a tied layer's weight gradient is
// accumulated into its source layer's entry.
using Gradients = std::vector<LayerParams>;

struct NetworkState {
  std::vector<LayerParams> params;
  // Optimizer slots, same layout as params (momentum / first moment /
  // squared-gradient accumulator in slot1; second moment / update
  // accumulator in slot2).
  std::vector<LayerParams> slot1;
  std::vector<LayerParams> slot2;
  std::uint64_t seed = 0;
  std::uint64_t epochs_completed = 0;
  std::uint64_t step = 0;
  // Bumped by every optimizer step; not persisted.
  std::uint64_t version = 0;

  bool same_values(const NetworkState& o) const {
    return params == o.params && slot1 == o.slot1 && slot2 == o.slot2 && seed == o.seed &&
           epochs_completed == o.epochs_completed && step == o.step;
  }
};

// He-uniform before ReLU/leaky ReLU, Glorot-uniform otherwise; zero biases.
NetworkState init_state(const NetworkSpec& spec, std::uint64_t seed);

// Weight actually applied by layer l (the source weight for tied layers,
// which is used transposed).
const Eigen::MatrixXd& effective_weight(const NetworkSpec& spec, const NetworkState& state, int l);

Gradients zero_gradients(const NetworkSpec& spec, const NetworkState& state);

enum class Mode { kTrain, kEval };

struct ForwardCache {
  std::uint64_t state_version = 0;
  Mode mode = Mode::kEval;
  std::vector<Tensor> values;                  // values[l] = input of layer l; back() = output
  std::vector<std::vector<int>> argmax;        // pooling layers
  std::vector<std::vector<double>> dropout;    // per-unit scale (0 or 1/(1-p))
  bool valid = false;
};

// Dropout is active only in kTrain, with masks drawn from dropout_seed.
Tensor forward(const NetworkSpec& spec, const NetworkState& state, const Tensor& input, Mode mode,
               std::uint64_t dropout_seed = 0, ForwardCache* cache = nullptr);

// Backpropagates output_grad, the gradient w.r.t. the output of layer
// end_layer - 1 (default: the network output), through layers
// [0, end_layer). Optionally returns the gradient w.r.t. the input.
Gradients backward(const NetworkSpec& spec, const NetworkState& state, const ForwardCache& cache,
                   const Tensor& output_grad, Tensor* input_grad = nullptr, int end_layer = -1);

std::string to_string(Activation a);
std::string to_string(LayerKind k);

}  // namespace kws::nn
