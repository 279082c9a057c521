#include "kws/models/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "kws/error.hpp"
#include "kws/log.hpp"
#include "kws/models/resample.hpp"

namespace kws::models {

using nn::Activation;
using nn::LayerSpec;

namespace {

nn::Tensor to_tensor(const FeatureSequence& f) {
  nn::Tensor t(1, {1, f.num_frames(), f.dim()});
  for (int i = 0; i < f.num_frames(); ++i) {
    const auto row = f.frame(i);
    std::copy(row.begin(), row.end(), t.data.begin() + static_cast<std::ptrdiff_t>(i) * f.dim());
  }
  return t;
}

FeatureSequence pad_to(const FeatureSequence& f, int T) {
  FeatureSequence out = f;
  out.frames.resize(T, f.dim());
  out.frames.topRows(f.num_frames()) = f.frames;
  for (int t = f.num_frames(); t < T; ++t) out.frames.row(t) = f.frames.row(f.num_frames() - 1);
  return out;
}

void check_schedule(const TrainingSchedule& s) {
  if (s.epochs < 0 || s.patience < 0 || s.batch_size < 1) throw ConfigError("bad training schedule");
  if (!(s.held_out >= 0.0 && s.held_out < 1.0)) throw ConfigError("held_out fraction must be in [0, 1)");
  if (!(s.lr_start > 0.0 && s.lr_end > 0.0)) throw ConfigError("learning rates must be positive");
}

nn::TrainOptions options_for(const TrainingSchedule& s, nn::LossKind loss, nn::OptimizerSpec opt) {
  nn::TrainOptions o;
  o.loss = loss;
  opt.lr = {s.lr_start, s.lr_end, std::max(1, s.epochs)};
  o.optimizer = opt;
  o.epochs = s.epochs;
  o.batch_size = s.batch_size;
  return o;
}

void log_epoch(const std::string& what, int epoch, double train, double monitor) {
  if (log::level() > log::Level::kDebug) return;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s epoch %d: train %.6g, held-out %.6g", what.c_str(), epoch, train, monitor);
  log::debug(buf);
}

}  // namespace

CnnClassifierConfig CnnClassifierConfig::desk() {
  CnnClassifierConfig c;
  c.filters = {8, 16, 16};
  c.dense = {64, 32, 64};
  c.schedule = {300, 30, 8, 0.1, 1e-3, 1e-4};
  return c;
}

void CnnClassifierConfig::validate() const {
  if (window < 1 || dim < 1) throw ConfigError("classifier window and dim must be positive");
  if (filters.size() != 3 || kernels.size() != 3) throw ConfigError("classifier needs exactly 3 convolutions");
  if (dense.size() != 3) throw ConfigError("classifier needs exactly 3 dense layers");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  check_schedule(schedule);
}

nn::NetworkSpec cnn_classifier_spec(const CnnClassifierConfig& cfg, int num_keywords) {
  cfg.validate();
  if (num_keywords < 1) throw ConfigError("classifier needs at least one keyword type");
  const auto relu = LayerSpec::act(Activation::kRelu);
  nn::NetworkSpec s;
  s.input = {1, cfg.window, cfg.dim};
  s.layers = {LayerSpec::conv2d(cfg.filters[0], cfg.kernels[0], cfg.kernels[0]), relu,
              LayerSpec::conv2d(cfg.filters[1], cfg.kernels[1], cfg.kernels[1]), relu,
              LayerSpec::maxpool(cfg.pool, cfg.pool),
              LayerSpec::conv2d(cfg.filters[2], cfg.kernels[2], cfg.kernels[2]), relu,
              LayerSpec::maxpool(cfg.pool, cfg.pool),
              LayerSpec::dense(cfg.dense[0]), relu, LayerSpec::dropout(cfg.dropout),
              LayerSpec::dense(cfg.dense[1]), relu,
              LayerSpec::dense(cfg.dense[2]), relu, LayerSpec::dropout(cfg.dropout),
              LayerSpec::dense(num_keywords), LayerSpec::act(Activation::kSoftmax)};
  s.validate();
  return s;
}

nn::NetworkState train_cnn_classifier(const dtw::TemplateBank& bank, const CnnClassifierConfig& cfg,
                                      std::uint64_t seed, nn::TrainHistory* history) {
  bank.validate();
  if (bank.feature_dim() != cfg.dim)
    throw DataError("templates have dimension " + std::to_string(bank.feature_dim()) + ", classifier expects " +
                    std::to_string(cfg.dim));
  const int K = bank.num_keywords();
  const auto spec = cnn_classifier_spec(cfg, K);

  std::vector<std::vector<int>> by_type(static_cast<std::size_t>(K));
  for (int i = 0; i < static_cast<int>(bank.templates.size()); ++i)
    by_type[bank.templates[i].keyword_id].push_back(i);
  std::mt19937_64 rng(nn::mix_seed(seed, 0x5911));
  std::vector<nn::Example> train_set, held;
  for (int k = 0; k < K; ++k) {
    auto ids = by_type[k];
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_held = static_cast<std::size_t>(std::floor(cfg.schedule.held_out * static_cast<double>(ids.size())));
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const auto& t = bank.templates[ids[j]];
      nn::Example e;
      e.input = to_tensor(resample_time(t.features, cfg.window));
      e.target.assign(static_cast<std::size_t>(K), 0.0);
      e.target[k] = 1.0;
      (j < n_held ? held : train_set).push_back(std::move(e));
    }
  }

  nn::OptimizerSpec opt;
  opt.kind = nn::OptimizerKind::kSgdNesterov;
  opt.momentum = cfg.momentum;
  auto o = options_for(cfg.schedule, nn::LossKind::kCategoricalCrossEntropy, opt);
  if (!held.empty()) o.early_stopping = nn::EarlyStopping{held, cfg.schedule.patience};
  o.on_epoch = [](int e, double tr, double mo) { log_epoch("cnn classifier", e, tr, mo); };
  auto state = nn::init_state(spec, seed);
  auto h = nn::train(spec, state, train_set, o);
  if (history) *history = std::move(h);
  return state;
}

std::vector<double> cnn_score_utterance(const nn::NetworkSpec& spec, const nn::NetworkState& state,
                                        const FeatureSequence& utterance) {
  const int window = spec.input.h, D = spec.input.w;
  if (utterance.dim() != D)
    throw DataError("utterance has dimension " + std::to_string(utterance.dim()) + ", classifier expects " +
                    std::to_string(D));
  if (utterance.num_frames() < 2) throw DataError("classifier scoring needs at least 2 frames");
  if (utterance.num_frames() < window) {
    const auto out = nn::forward(spec, state, to_tensor(resample_time(utterance, window)), nn::Mode::kEval);
    return {out.data.begin(), out.data.end()};
  }
  const int positions = utterance.num_frames() - window + 1;
  const int K = spec.output_shape().size();
  std::vector<double> best(static_cast<std::size_t>(K), 0.0);
  constexpr int kChunk = 32;
  for (int q0 = 0; q0 < positions; q0 += kChunk) {
    const int n = std::min(kChunk, positions - q0);
    nn::Tensor x(n, spec.input);
    for (int i = 0; i < n; ++i) {
      const float* src = utterance.frames.data() + static_cast<std::ptrdiff_t>(q0 + i) * D;
      std::copy(src, src + static_cast<std::ptrdiff_t>(window) * D, x.example(i).begin());
    }
    const auto y = nn::forward(spec, state, x, nn::Mode::kEval);
    for (int i = 0; i < n; ++i) {
      const auto p = y.example(i);
      for (int k = 0; k < K; ++k) best[k] = std::max(best[k], p[k]);
    }
  }
  return best;
}

CnnDtwConfig CnnDtwConfig::desk() {
  CnnDtwConfig c;
  c.first_filters = 8;
  c.blocks = {8, 16, 16};
  c.dense = {128, 128};
  c.dropout = 0.2;
  // Every utterance length is its own shape group, so larger batches only
  // mean fewer updates per epoch.
  c.schedule = {60, 60, 1, 0.1, 1e-3, 1e-4};
  return c;
}

void CnnDtwConfig::validate() const {
  if (dim < 1 || first_filters < 1 || kernel < 1 || block_depth < 0) throw ConfigError("bad CNN-DTW sizes");
  for (int b : blocks)
    if (b < 1) throw ConfigError("bad CNN-DTW block width");
  for (int d : dense)
    if (d < 1) throw ConfigError("bad CNN-DTW dense width");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  check_schedule(schedule);
}

nn::NetworkSpec cnn_dtw_spec(const CnnDtwConfig& cfg, int num_keywords) {
  cfg.validate();
  if (num_keywords < 1) throw ConfigError("CNN-DTW needs at least one keyword type");
  const auto leaky = LayerSpec::act(Activation::kLeakyRelu, cfg.leaky_alpha);
  nn::NetworkSpec s;
  s.input = {1, 0, cfg.dim};
  s.layers = {LayerSpec::conv2d(cfg.first_filters, cfg.kernel, cfg.dim), leaky};
  for (int width : cfg.blocks)
    for (int r = 0; r < cfg.block_depth; ++r) {
      s.layers.push_back(LayerSpec::conv2d(width, cfg.kernel, 1));
      s.layers.push_back(leaky);
    }
  s.layers.push_back(LayerSpec::global_temporal_maxpool());
  for (int d : cfg.dense) {
    s.layers.push_back(LayerSpec::dense(d));
    s.layers.push_back(leaky);
    s.layers.push_back(LayerSpec::dropout(cfg.dropout));
  }
  s.layers.push_back(LayerSpec::dense(num_keywords));
  s.layers.push_back(LayerSpec::act(Activation::kSigmoid));
  s.validate();
  return s;
}

namespace {

FeatureSequence fit_length(const nn::NetworkSpec& spec, const FeatureSequence& f, const std::string& what) {
  const int first = spec.layers.empty() ? 1 : spec.layers.front().kernel_h;
  const int need = spec.min_input_height();
  if (f.num_frames() < first)
    throw DataError(what + " has " + std::to_string(f.num_frames()) + " frames; CNN-DTW needs at least " +
                    std::to_string(first));
  if (f.num_frames() < need) {
    log::warn(what + " has " + std::to_string(f.num_frames()) + " frames, padded to " + std::to_string(need) +
              " by repeating the last frame");
    return pad_to(f, need);
  }
  return f;
}

}  // namespace

nn::NetworkState train_cnn_dtw(std::span<const FeatureSequence> utterances, std::span<const dtw::ScoreVector> targets,
                               const CnnDtwConfig& cfg, std::uint64_t seed, nn::TrainHistory* history) {
  if (utterances.size() != targets.size())
    throw DataError("train_cnn_dtw: " + std::to_string(utterances.size()) + " utterances but " +
                    std::to_string(targets.size()) + " score vectors");
  if (utterances.empty()) throw DataError("train_cnn_dtw: empty training set");
  const int K = static_cast<int>(targets.front().scores.size());
  const auto spec = cnn_dtw_spec(cfg, K);
  std::vector<nn::Example> all;
  all.reserve(utterances.size());
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& tg = targets[i];
    const std::string name = "utterance '" + tg.utterance_id + "'";
    if (static_cast<int>(tg.scores.size()) != K) throw DataError(name + " has a score vector of the wrong size");
    for (double v : tg.scores)
      if (!(v >= 0.0 && v <= 1.0)) throw DataError(name + " has a target outside [0, 1]: " + std::to_string(v));
    if (utterances[i].dim() != cfg.dim)
      throw DataError(name + " has dimension " + std::to_string(utterances[i].dim()) + ", expected " +
                      std::to_string(cfg.dim));
    all.push_back({to_tensor(fit_length(spec, utterances[i], name)), tg.scores});
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(nn::mix_seed(seed, 0xd7f));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_held = static_cast<std::size_t>(std::floor(cfg.schedule.held_out * static_cast<double>(all.size())));
  std::vector<nn::Example> train_set, held;
  for (std::size_t j = 0; j < order.size(); ++j) (j < n_held ? held : train_set).push_back(std::move(all[order[j]]));

  nn::OptimizerSpec opt;
  opt.kind = nn::OptimizerKind::kAdam;
  auto o = options_for(cfg.schedule, nn::LossKind::kSummedBinaryCrossEntropy, opt);
  if (!held.empty()) o.early_stopping = nn::EarlyStopping{held, cfg.schedule.patience};
  o.on_epoch = [](int e, double tr, double mo) { log_epoch("cnn-dtw", e, tr, mo); };
  auto state = nn::init_state(spec, seed);
  auto h = nn::train(spec, state, train_set, o);
  if (history) *history = std::move(h);
  return state;
}

std::vector<double> cnn_dtw_score_utterance(const nn::NetworkSpec& spec, const nn::NetworkState& state,
                                            const FeatureSequence& utterance) {
  if (utterance.dim() != spec.input.w)
    throw DataError("utterance has dimension " + std::to_string(utterance.dim()) + ", CNN-DTW expects " +
                    std::to_string(spec.input.w));
  const auto out = nn::forward(spec, state, to_tensor(fit_length(spec, utterance, "utterance")), nn::Mode::kEval);
  return {out.data.begin(), out.data.end()};
}

std::vector<Detection> detect(const dtw::ScoreVector& scores, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("detection threshold must be in [0, 1]");
  std::vector<Detection> out;
  for (int k = 0; k < static_cast<int>(scores.scores.size()); ++k) {
    const double s = scores.scores[k];
    if (!std::isfinite(s)) throw NumericError("non-finite score for keyword " + std::to_string(k));
    if (s >= threshold) out.push_back({scores.utterance_id, k, s});
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

std::string format_detections(std::span<const std::string> keyword_names, std::span<const Detection> detections) {
  std::string out;
  char buf[64];
  for (const auto& d : detections) {
    if (d.keyword_id < 0 || d.keyword_id >= static_cast<int>(keyword_names.size()))
      throw DataError("detection refers to unknown keyword " + std::to_string(d.keyword_id));
    std::snprintf(buf, sizeof buf, "%.9g", d.score);
    out += d.utterance_id + "\t" + keyword_names[d.keyword_id] + "\t" + buf + "\n";
  }
  return out;
}

}  // namespace kws::models
