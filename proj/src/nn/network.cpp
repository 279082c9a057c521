#include "kws/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "kws/binary_io.hpp"
#include "kws/error.hpp"

namespace kws::nn {

std::string Shape::str() const {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

Tensor stack(std::span<const Tensor* const> examples) {
  if (examples.empty()) return {};
  const Shape s = examples.front()->shape;
  int n = 0;
  for (const auto* t : examples) {
    if (t->shape != s) throw DataError("stack: mixed shapes " + s.str() + " and " + t->shape.str());
    n += t->n;
  }
  Tensor out(n, s);
  auto it = out.data.begin();
  for (const auto* t : examples) it = std::copy(t->data.begin(), t->data.end(), it);
  return out;
}

LayerSpec LayerSpec::dense(int units) {
  LayerSpec l;
  l.kind = LayerKind::kDense;
  l.units = units;
  return l;
}
LayerSpec LayerSpec::conv2d(int filters, int kernel_h, int kernel_w) {
  LayerSpec l;
  l.kind = LayerKind::kConv2d;
  l.filters = filters;
  l.kernel_h = kernel_h;
  l.kernel_w = kernel_w;
  return l;
}
LayerSpec LayerSpec::maxpool(int pool_h, int pool_w) {
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.pool_h = pool_h;
  l.pool_w = pool_w;
  return l;
}
LayerSpec LayerSpec::global_temporal_maxpool() {
  LayerSpec l;
  l.kind = LayerKind::kGlobalTemporalMaxPool;
  return l;
}
LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec l;
  l.kind = LayerKind::kDropout;
  l.rate = rate;
  return l;
}
LayerSpec LayerSpec::act(Activation a, double alpha) {
  LayerSpec l;
  l.kind = LayerKind::kActivation;
  l.activation = a;
  l.alpha = alpha;
  return l;
}
LayerSpec LayerSpec::tied_dense(int source) {
  LayerSpec l;
  l.kind = LayerKind::kTiedDense;
  l.source = source;
  return l;
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kSoftmax: return "softmax";
  }
  return "identity";
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kGlobalTemporalMaxPool: return "global_temporal_maxpool";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kActivation: return "activation";
    case LayerKind::kTiedDense: return "tied_dense";
  }
  return "?";
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Activation activation_from(const std::string& s) {
  for (auto a : {Activation::kIdentity, Activation::kRelu, Activation::kLeakyRelu,
                 Activation::kTanh, Activation::kSigmoid, Activation::kSoftmax})
    if (to_string(a) == s) return a;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string layer_name(int l, const LayerSpec& spec) {
  return "layer " + std::to_string(l) + " (" + to_string(spec.kind) + ")";
}

}  // namespace

std::string NetworkSpec::canonical_text() const {
  std::ostringstream os;
  os << "input " << input.c << ' ' << input.h << ' ' << input.w << '\n';
  for (const auto& l : layers) {
    os << to_string(l.kind);
    switch (l.kind) {
      case LayerKind::kDense: os << ' ' << l.units; break;
      case LayerKind::kConv2d: os << ' ' << l.filters << ' ' << l.kernel_h << ' ' << l.kernel_w; break;
      case LayerKind::kMaxPool: os << ' ' << l.pool_h << ' ' << l.pool_w; break;
      case LayerKind::kGlobalTemporalMaxPool: break;
      case LayerKind::kDropout: os << ' ' << fmt_double(l.rate); break;
      case LayerKind::kActivation:
        os << ' ' << to_string(l.activation);
        if (l.activation == Activation::kLeakyRelu) os << ' ' << fmt_double(l.alpha);
        break;
      case LayerKind::kTiedDense: os << ' ' << l.source; break;
    }
    os << '\n';
  }
  return os.str();
}

NetworkSpec NetworkSpec::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  NetworkSpec spec;
  bool have_input = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    auto fail = [&] { throw ConfigError("bad network spec line " + std::to_string(line_no) + ": '" + line + "'"); };
    if (kind == "input") {
      if (!(ls >> spec.input.c >> spec.input.h >> spec.input.w)) fail();
      have_input = true;
      continue;
    }
    LayerSpec l;
    if (kind == "dense") {
      l = LayerSpec::dense(0);
      if (!(ls >> l.units)) fail();
    } else if (kind == "conv2d") {
      l = LayerSpec::conv2d(0, 0, 0);
      if (!(ls >> l.filters >> l.kernel_h >> l.kernel_w)) fail();
    } else if (kind == "maxpool") {
      l = LayerSpec::maxpool(0, 0);
      if (!(ls >> l.pool_h >> l.pool_w)) fail();
    } else if (kind == "global_temporal_maxpool") {
      l = LayerSpec::global_temporal_maxpool();
    } else if (kind == "dropout") {
      l = LayerSpec::dropout(0);
      if (!(ls >> l.rate)) fail();
    } else if (kind == "activation") {
      std::string a;
      if (!(ls >> a)) fail();
      l = LayerSpec::act(activation_from(a));
      if (l.activation == Activation::kLeakyRelu && !(ls >> l.alpha)) fail();
    } else if (kind == "tied_dense") {
      l = LayerSpec::tied_dense(0);
      if (!(ls >> l.source)) fail();
    } else {
      fail();
    }
    spec.layers.push_back(l);
  }
  if (!have_input) throw ConfigError("network spec has no input line");
  spec.validate();
  return spec;
}

std::vector<std::uint8_t> NetworkSpec::hash() const {
  const auto text = canonical_text();
  return io::sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

int NetworkSpec::min_input_height() const {
  if (input.h > 0) return input.h;
  int need = 1;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    switch (it->kind) {
      case LayerKind::kConv2d: need += it->kernel_h - 1; break;
      case LayerKind::kMaxPool: need *= it->pool_h; break;
      case LayerKind::kGlobalTemporalMaxPool: need = 1; break;
      default: break;
    }
  }
  return need;
}

std::vector<Shape> NetworkSpec::infer_shapes(const Shape& in) const {
  if (in.c != input.c || in.w != input.w || (input.h > 0 && in.h != input.h))
    throw DataError("input shape " + in.str() + " does not match network input " + input.str());
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  Shape cur = in;
  for (int l = 0; l < static_cast<int>(layers.size()); ++l) {
    const auto& ls = layers[l];
    auto fail = [&](const std::string& why) {
      throw DataError(layer_name(l, ls) + ": " + why + " (input " + cur.str() + ")");
    };
    switch (ls.kind) {
      case LayerKind::kDense:
        if (ls.units < 1) fail("units must be >= 1");
        cur = {ls.units, 1, 1};
        break;
      case LayerKind::kConv2d:
        if (ls.filters < 1 || ls.kernel_h < 1 || ls.kernel_w < 1) fail("bad conv2d parameters");
        if (cur.h < ls.kernel_h || cur.w < ls.kernel_w) fail("input smaller than kernel");
        cur = {ls.filters, cur.h - ls.kernel_h + 1, cur.w - ls.kernel_w + 1};
        break;
      case LayerKind::kMaxPool:
        if (ls.pool_h < 1 || ls.pool_w < 1) fail("bad pool size");
        if (cur.h < ls.pool_h || cur.w < ls.pool_w) fail("input smaller than pool window");
        cur = {cur.c, cur.h / ls.pool_h, cur.w / ls.pool_w};
        break;
      case LayerKind::kGlobalTemporalMaxPool:
        cur = {cur.c, 1, cur.w};
        break;
      case LayerKind::kDropout:
        if (!(ls.rate >= 0.0 && ls.rate < 1.0)) fail("dropout rate must be in [0, 1)");
        break;
      case LayerKind::kActivation:
        break;
      case LayerKind::kTiedDense: {
        if (ls.source < 0 || ls.source >= l || layers[ls.source].kind != LayerKind::kDense)
          fail("tied_dense must reference an earlier dense layer");
        if (cur.size() != layers[ls.source].units)
          fail("input size must equal the source layer's output size");
        const Shape src_in = ls.source == 0 ? in : shapes[ls.source - 1];
        cur = {src_in.size(), 1, 1};
        break;
      }
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void NetworkSpec::validate() const {
  if (input.c < 1 || input.w < 1 || input.h < 0) throw ConfigError("bad network input shape " + input.str());
  try {
    const int h = min_input_height();
    const auto a = infer_shapes({input.c, h, input.w});
    if (input.h == 0) {
      // Parameter shapes must not depend on the time length.
      const auto b = infer_shapes({input.c, h + 5, input.w});
      Shape prev_a{input.c, h, input.w}, prev_b{input.c, h + 5, input.w};
      for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].kind == LayerKind::kDense && prev_a.size() != prev_b.size())
          throw ConfigError(layer_name(static_cast<int>(l), layers[l]) +
                            ": input size depends on the variable time length");
        prev_a = a[l];
        prev_b = b[l];
      }
    }
  } catch (const DataError& e) {
    throw ConfigError(std::string("invalid network spec: ") + e.what());
  }
}

Shape NetworkSpec::output_shape(int input_height) const {
  const int h = input_height > 0 ? input_height : min_input_height();
  const auto s = infer_shapes({input.c, h, input.w});
  return s.empty() ? Shape{input.c, h, input.w} : s.back();
}

namespace {

std::vector<Shape> probe_shapes(const NetworkSpec& spec) {
  return spec.infer_shapes({spec.input.c, spec.min_input_height(), spec.input.w});
}

Shape input_of(const NetworkSpec& spec, const std::vector<Shape>& shapes, int l) {
  return l == 0 ? Shape{spec.input.c, spec.min_input_height(), spec.input.w} : shapes[l - 1];
}

// Activation following layer l, skipping shape-only layers.
Activation next_activation(const NetworkSpec& spec, int l) {
  for (int k = l + 1; k < static_cast<int>(spec.layers.size()); ++k) {
    const auto kind = spec.layers[k].kind;
    if (kind == LayerKind::kActivation) return spec.layers[k].activation;
    if (kind == LayerKind::kDense || kind == LayerKind::kConv2d || kind == LayerKind::kTiedDense) break;
  }
  return Activation::kIdentity;
}

}  // namespace

NetworkState init_state(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto shapes = probe_shapes(spec);
  NetworkState st;
  st.seed = seed;
  st.params.resize(spec.layers.size());
  std::mt19937_64 rng(seed);
  for (int l = 0; l < static_cast<int>(spec.layers.size()); ++l) {
    const auto& ls = spec.layers[l];
    const Shape in = input_of(spec, shapes, l);
    int fan_in = 0, fan_out = 0, rows = 0, cols = 0;
    if (ls.kind == LayerKind::kDense) {
      rows = ls.units, cols = in.size(), fan_in = cols, fan_out = rows;
    } else if (ls.kind == LayerKind::kConv2d) {
      rows = ls.filters, cols = in.c * ls.kernel_h * ls.kernel_w;
      fan_in = cols, fan_out = ls.filters * ls.kernel_h * ls.kernel_w;
    } else if (ls.kind == LayerKind::kTiedDense) {
      st.params[l].bias = Eigen::VectorXd::Zero(shapes[l].size());
      continue;
    } else {
      continue;
    }
    const Activation a = next_activation(spec, l);
    const bool rectifier = a == Activation::kRelu || a == Activation::kLeakyRelu;
    const double limit = rectifier ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd w(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = dist(rng);
    st.params[l].weight = std::move(w);
    st.params[l].bias = Eigen::VectorXd::Zero(rows);
  }
  return st;
}

const Eigen::MatrixXd& effective_weight(const NetworkSpec& spec, const NetworkState& state, int l) {
  const auto& ls = spec.layers[l];
  return ls.kind == LayerKind::kTiedDense ? state.params[ls.source].weight : state.params[l].weight;
}

Gradients zero_gradients(const NetworkSpec& spec, const NetworkState& state) {
  Gradients g(spec.layers.size());
  for (std::size_t l = 0; l < g.size(); ++l) {
    g[l].weight = Eigen::MatrixXd::Zero(state.params[l].weight.rows(), state.params[l].weight.cols());
    g[l].bias = Eigen::VectorXd::Zero(state.params[l].bias.size());
  }
  return g;
}

namespace {

// cols(c*kh*kw, oh*ow) for one example laid out c x h x w.
void im2col(const double* x, const Shape& in, int kh, int kw, MatrixRM& cols) {
  const int oh = in.h - kh + 1, ow = in.w - kw + 1;
  cols.resize(static_cast<Eigen::Index>(in.c) * kh * kw, static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < in.c; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        double* dst = cols.row((static_cast<Eigen::Index>(c) * kh + i) * kw + j).data();
        for (int y = 0; y < oh; ++y) {
          const double* src = x + (static_cast<std::ptrdiff_t>(c) * in.h + y + i) * in.w + j;
          std::copy(src, src + ow, dst + static_cast<std::ptrdiff_t>(y) * ow);
        }
      }
}

void col2im_add(const MatrixRM& cols, const Shape& in, int kh, int kw, double* dx) {
  const int oh = in.h - kh + 1, ow = in.w - kw + 1;
  for (int c = 0; c < in.c; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        const double* src = cols.row((static_cast<Eigen::Index>(c) * kh + i) * kw + j).data();
        for (int y = 0; y < oh; ++y) {
          double* dst = dx + (static_cast<std::ptrdiff_t>(c) * in.h + y + i) * in.w + j;
          const double* s = src + static_cast<std::ptrdiff_t>(y) * ow;
          for (int x = 0; x < ow; ++x) dst[x] += s[x];
        }
      }
}

void apply_activation(const LayerSpec& ls, const Tensor& in, Tensor& out) {
  const auto n = in.data.size();
  const double* x = in.data.data();
  double* y = out.data.data();
  switch (ls.activation) {
    case Activation::kIdentity:
      std::copy(x, x + n, y);
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Activation::kLeakyRelu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : ls.alpha * x[i];
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < n; ++i)
        y[i] = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
      break;
    case Activation::kSoftmax: {
      const int d = in.shape.size();
      for (int e = 0; e < in.n; ++e) {
        const double* xe = x + static_cast<std::ptrdiff_t>(e) * d;
        double* ye = y + static_cast<std::ptrdiff_t>(e) * d;
        const double mx = *std::max_element(xe, xe + d);
        double sum = 0.0;
        for (int k = 0; k < d; ++k) sum += (ye[k] = std::exp(xe[k] - mx));
        for (int k = 0; k < d; ++k) ye[k] /= sum;
      }
      break;
    }
  }
}

void activation_backward(const LayerSpec& ls, const Tensor& in, const Tensor& out, const Tensor& dy,
                         Tensor& dx) {
  const auto n = in.data.size();
  const double* x = in.data.data();
  const double* y = out.data.data();
  const double* g = dy.data.data();
  double* d = dx.data.data();
  switch (ls.activation) {
    case Activation::kIdentity:
      std::copy(g, g + n, d);
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < n; ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
      break;
    case Activation::kLeakyRelu:
      for (std::size_t i = 0; i < n; ++i) d[i] = x[i] > 0.0 ? g[i] : ls.alpha * g[i];
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < n; ++i) d[i] = g[i] * (1.0 - y[i] * y[i]);
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) d[i] = g[i] * y[i] * (1.0 - y[i]);
      break;
    case Activation::kSoftmax: {
      const int k = in.shape.size();
      for (int e = 0; e < in.n; ++e) {
        const auto off = static_cast<std::ptrdiff_t>(e) * k;
        double dot = 0.0;
        for (int j = 0; j < k; ++j) dot += g[off + j] * y[off + j];
        for (int j = 0; j < k; ++j) d[off + j] = y[off + j] * (g[off + j] - dot);
      }
      break;
    }
  }
}

}  // namespace

Tensor forward(const NetworkSpec& spec, const NetworkState& state, const Tensor& input, Mode mode,
               std::uint64_t dropout_seed, ForwardCache* cache) {
  const auto shapes = spec.infer_shapes(input.shape);
  if (input.n < 1) throw DataError("forward: empty batch");
  const int L = static_cast<int>(spec.layers.size());
  std::vector<Tensor> local;
  std::vector<Tensor>& values = cache ? cache->values : local;
  values.assign(1, input);
  values.reserve(static_cast<std::size_t>(L) + 1);
  if (cache) {
    cache->argmax.assign(static_cast<std::size_t>(L), {});
    cache->dropout.assign(static_cast<std::size_t>(L), {});
    cache->mode = mode;
    cache->state_version = state.version;
  }
  std::mt19937_64 rng(dropout_seed);

  for (int l = 0; l < L; ++l) {
    const auto& ls = spec.layers[l];
    const Tensor& x = values.back();
    Tensor y(x.n, shapes[l]);
    switch (ls.kind) {
      case LayerKind::kDense: {
        const auto& p = state.params[l];
        y.matrix().noalias() = x.matrix() * p.weight.transpose();
        y.matrix().rowwise() += p.bias.transpose();
        break;
      }
      case LayerKind::kTiedDense: {
        const auto& w = effective_weight(spec, state, l);
        y.matrix().noalias() = x.matrix() * w;
        y.matrix().rowwise() += state.params[l].bias.transpose();
        break;
      }
      case LayerKind::kConv2d: {
        const auto& p = state.params[l];
        MatrixRM cols;
        const int P = y.shape.h * y.shape.w;
        for (int e = 0; e < x.n; ++e) {
          im2col(x.example(e).data(), x.shape, ls.kernel_h, ls.kernel_w, cols);
          Eigen::Map<MatrixRM> out(y.example(e).data(), ls.filters, P);
          out.noalias() = p.weight * cols;
          out.colwise() += p.bias;
        }
        break;
      }
      case LayerKind::kMaxPool: {
        std::vector<int> arg(y.data.size());
        const Shape& is = x.shape;
        const Shape& os = y.shape;
        for (int e = 0; e < x.n; ++e)
          for (int c = 0; c < os.c; ++c)
            for (int oy = 0; oy < os.h; ++oy)
              for (int ox = 0; ox < os.w; ++ox) {
                int best = -1;
                double bv = 0.0;
                for (int i = 0; i < ls.pool_h; ++i)
                  for (int j = 0; j < ls.pool_w; ++j) {
                    const int idx = ((e * is.c + c) * is.h + oy * ls.pool_h + i) * is.w + ox * ls.pool_w + j;
                    if (best < 0 || x.data[idx] > bv) best = idx, bv = x.data[idx];
                  }
                const int o = ((e * os.c + c) * os.h + oy) * os.w + ox;
                y.data[o] = bv;
                arg[o] = best;
              }
        if (cache) cache->argmax[l] = std::move(arg);
        break;
      }
      case LayerKind::kGlobalTemporalMaxPool: {
        std::vector<int> arg(y.data.size());
        const Shape& is = x.shape;
        for (int e = 0; e < x.n; ++e)
          for (int c = 0; c < is.c; ++c)
            for (int w = 0; w < is.w; ++w) {
              int best = -1;
              double bv = 0.0;
              for (int t = 0; t < is.h; ++t) {
                const int idx = ((e * is.c + c) * is.h + t) * is.w + w;
                if (best < 0 || x.data[idx] > bv) best = idx, bv = x.data[idx];
              }
              const int o = (e * is.c + c) * is.w + w;
              y.data[o] = bv;
              arg[o] = best;
            }
        if (cache) cache->argmax[l] = std::move(arg);
        break;
      }
      case LayerKind::kDropout: {
        if (mode == Mode::kTrain && ls.rate > 0.0) {
          std::vector<double> scale(y.data.size());
          std::bernoulli_distribution keep(1.0 - ls.rate);
          const double inv = 1.0 / (1.0 - ls.rate);
          for (std::size_t i = 0; i < scale.size(); ++i) {
            scale[i] = keep(rng) ? inv : 0.0;
            y.data[i] = x.data[i] * scale[i];
          }
          if (cache) cache->dropout[l] = std::move(scale);
        } else {
          y.data = x.data;
        }
        break;
      }
      case LayerKind::kActivation:
        apply_activation(ls, x, y);
        break;
    }
    values.push_back(std::move(y));
  }
  if (cache) cache->valid = true;
  return values.back();
}

Gradients backward(const NetworkSpec& spec, const NetworkState& state, const ForwardCache& cache,
                   const Tensor& output_grad, Tensor* input_grad, int end_layer) {
  const int L = static_cast<int>(spec.layers.size());
  if (end_layer < 0) end_layer = L;
  if (!cache.valid || cache.values.size() != static_cast<std::size_t>(L) + 1)
    throw ConfigError("backward: cache does not come from a forward pass of this network");
  if (cache.state_version != state.version)
    throw ConfigError("backward: stale cache (state changed since the forward pass)");
  if (output_grad.shape != cache.values[end_layer].shape || output_grad.n != cache.values[end_layer].n)
    throw DataError("backward: gradient shape " + output_grad.shape.str() + " does not match layer output " +
                    cache.values[end_layer].shape.str());

  Gradients grads = zero_gradients(spec, state);
  Tensor dy = output_grad;
  for (int l = end_layer - 1; l >= 0; --l) {
    const auto& ls = spec.layers[l];
    const Tensor& x = cache.values[l];
    Tensor dx(x.n, x.shape);
    switch (ls.kind) {
      case LayerKind::kDense: {
        const auto& w = state.params[l].weight;
        grads[l].weight.noalias() += dy.matrix().transpose() * x.matrix();
        grads[l].bias += dy.matrix().colwise().sum().transpose();
        if (l > 0 || input_grad) dx.matrix().noalias() = dy.matrix() * w;
        break;
      }
      case LayerKind::kTiedDense: {
        const auto& w = effective_weight(spec, state, l);
        grads[ls.source].weight.noalias() += x.matrix().transpose() * dy.matrix();
        grads[l].bias += dy.matrix().colwise().sum().transpose();
        if (l > 0 || input_grad) dx.matrix().noalias() = dy.matrix() * w.transpose();
        break;
      }
      case LayerKind::kConv2d: {
        const auto& w = state.params[l].weight;
        const Shape& os = cache.values[l + 1].shape;
        const int P = os.h * os.w;
        MatrixRM cols, dcols;
        for (int e = 0; e < x.n; ++e) {
          im2col(x.example(e).data(), x.shape, ls.kernel_h, ls.kernel_w, cols);
          Eigen::Map<const MatrixRM> g(dy.example(e).data(), ls.filters, P);
          grads[l].weight.noalias() += g * cols.transpose();
          grads[l].bias += g.rowwise().sum();
          if (l > 0 || input_grad) {
            dcols.noalias() = w.transpose() * g;
            col2im_add(dcols, x.shape, ls.kernel_h, ls.kernel_w, dx.example(e).data());
          }
        }
        break;
      }
      case LayerKind::kMaxPool:
      case LayerKind::kGlobalTemporalMaxPool: {
        const auto& arg = cache.argmax[l];
        for (std::size_t o = 0; o < arg.size(); ++o) dx.data[arg[o]] += dy.data[o];
        break;
      }
      case LayerKind::kDropout: {
        const auto& scale = cache.dropout[l];
        if (scale.empty()) {
          dx.data = dy.data;
        } else {
          for (std::size_t i = 0; i < scale.size(); ++i) dx.data[i] = dy.data[i] * scale[i];
        }
        break;
      }
      case LayerKind::kActivation:
        activation_backward(ls, x, cache.values[l + 1], dy, dx);
        break;
    }
    dy = std::move(dx);
  }
  if (input_grad) *input_grad = std::move(dy);
  return grads;
}

}  // namespace kws::nn
