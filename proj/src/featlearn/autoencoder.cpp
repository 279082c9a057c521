#include "kws/featlearn/autoencoder.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "kws/binary_io.hpp"
#include "kws/dtw/dtw.hpp"
#include "kws/error.hpp"
#include "kws/log.hpp"
#include "kws/nn/loss.hpp"
#include "kws/nn/trainer.hpp"

namespace kws::featlearn {

using nn::Activation;
using nn::LayerSpec;

nn::OptimizerSpec AeConfig::default_optimizer() {
  nn::OptimizerSpec o;
  o.kind = nn::OptimizerKind::kAdadelta;
  o.lr = {1.0, 1.0, 1};
  return o;
}

AeConfig AeConfig::desk() {
  AeConfig c;
  c.batch_size = 256;
  c.cae_epochs = 5;
  return c;
}

void AeConfig::validate() const {
  if (input_dim < 1 || hidden_layers < 0 || hidden_units < 1 || fe_units < 1)
    throw ConfigError("autoencoder layer sizes must be positive");
  if (layer_epochs < 0 || finetune_epochs < 0 || cae_epochs < 0)
    throw ConfigError("autoencoder epoch counts must be >= 0");
  if (batch_size < 1) throw ConfigError("autoencoder batch size must be >= 1");
  optimizer.validate();
}

namespace {

struct KeywordTemplateRef {
  const FeatureSequence* f;
  int id;
};

int stage_count(const AeConfig& cfg) { return cfg.hidden_layers + 1; }

int stage_units(const AeConfig& cfg, int s) { return s < cfg.hidden_layers ? cfg.hidden_units : cfg.fe_units; }

// Layer index of the decoder layer mirroring encoder stage s.
int mirror_layer(const AeConfig& cfg, int s) { return 2 * stage_count(cfg) + 2 * (stage_count(cfg) - 1 - s); }

nn::Example frame_example(std::span<const float> frame) {
  nn::Example e;
  e.input = nn::Tensor(1, {1, 1, static_cast<int>(frame.size())});
  std::copy(frame.begin(), frame.end(), e.input.data.begin());
  e.target.assign(e.input.data.begin(), e.input.data.end());
  return e;
}

// Runs every example input through the (dense, tanh) encoder stage.
void advance_stage(const nn::NetworkSpec& stage_spec, const nn::NetworkState& stage_state,
                   std::vector<nn::Example>& examples) {
  const nn::NetworkSpec enc{stage_spec.input, {stage_spec.layers[0], stage_spec.layers[1]}};
  nn::NetworkState st;
  st.params = {stage_state.params[0], stage_state.params[1]};
  constexpr std::size_t kChunk = 4096;
  for (std::size_t b = 0; b < examples.size(); b += kChunk) {
    const std::size_t e = std::min(examples.size(), b + kChunk);
    nn::Tensor x(static_cast<int>(e - b), stage_spec.input);
    for (std::size_t i = b; i < e; ++i)
      std::copy(examples[i].input.data.begin(), examples[i].input.data.end(),
                x.example(static_cast<int>(i - b)).begin());
    const nn::Tensor y = nn::forward(enc, st, x, nn::Mode::kEval);
    for (std::size_t i = b; i < e; ++i) {
      const auto out = y.example(static_cast<int>(i - b));
      auto& ex = examples[i];
      ex.input = nn::Tensor(1, {1, 1, static_cast<int>(out.size())});
      std::copy(out.begin(), out.end(), ex.input.data.begin());
      ex.target.assign(out.begin(), out.end());
    }
  }
}

void check_dim(const AeConfig& cfg, const FeatureSequence& f, const std::string& what) {
  if (f.dim() != cfg.input_dim)
    throw DataError(what + " has dimension " + std::to_string(f.dim()) + ", the autoencoder expects " +
                    std::to_string(cfg.input_dim));
}

void check_state(const AeConfig& cfg, const nn::NetworkState& state) {
  const auto like = nn::init_state(ae_spec(cfg), 0);
  if (like.params.size() != state.params.size())
    throw ConfigError("state does not match the autoencoder spec");
  for (std::size_t l = 0; l < like.params.size(); ++l)
    if (like.params[l].weight.rows() != state.params[l].weight.rows() ||
        like.params[l].weight.cols() != state.params[l].weight.cols() ||
        like.params[l].bias.size() != state.params[l].bias.size())
      throw ConfigError("state does not match the autoencoder spec (layer " + std::to_string(l) + ")");
}

}  // namespace

nn::NetworkSpec ae_spec(const AeConfig& cfg) {
  cfg.validate();
  nn::NetworkSpec spec;
  spec.input = {1, 1, cfg.input_dim};
  const int stages = stage_count(cfg);
  for (int s = 0; s < stages; ++s) {
    spec.layers.push_back(LayerSpec::dense(stage_units(cfg, s)));
    spec.layers.push_back(LayerSpec::act(Activation::kTanh));
  }
  for (int s = stages - 1; s >= 0; --s) {
    spec.layers.push_back(LayerSpec::tied_dense(2 * s));
    if (s > 0) spec.layers.push_back(LayerSpec::act(Activation::kTanh));
  }
  return spec;
}

int encoder_layer_count(const AeConfig& cfg) { return 2 * stage_count(cfg); }

nn::NetworkState pretrain_ae(std::span<const FeatureSequence> features, std::uint64_t seed, const AeConfig& cfg,
                             AeHistory* history) {
  cfg.validate();
  if (features.empty()) throw DataError("pretrain_ae: no training utterances");
  std::vector<nn::Example> frames;
  for (std::size_t u = 0; u < features.size(); ++u) {
    check_dim(cfg, features[u], "utterance " + std::to_string(u));
    for (int t = 0; t < features[u].num_frames(); ++t) frames.push_back(frame_example(features[u].frame(t)));
  }
  if (frames.empty()) throw DataError("pretrain_ae: all utterances are empty");

  const auto spec = ae_spec(cfg);
  auto state = nn::init_state(spec, seed);

  // Fixed validation batch, tracked through the stages alongside the data.
  std::vector<std::size_t> val_idx(frames.size());
  std::iota(val_idx.begin(), val_idx.end(), 0);
  std::mt19937_64 rng(nn::mix_seed(seed, 0x7a1));
  std::shuffle(val_idx.begin(), val_idx.end(), rng);
  val_idx.resize(std::min<std::size_t>(val_idx.size(), static_cast<std::size_t>(cfg.batch_size)));
  std::vector<nn::Example> val;
  for (auto i : val_idx) val.push_back(frames[i]);
  const auto full_val = val;

  std::vector<nn::Example> current = frames;
  AeHistory hist;
  for (int s = 0; s < stage_count(cfg); ++s) {
    const int in_dim = current.front().input.shape.size();
    const nn::NetworkSpec stage{{1, 1, in_dim},
                                {LayerSpec::dense(stage_units(cfg, s)), LayerSpec::act(Activation::kTanh),
                                 LayerSpec::tied_dense(0)}};
    auto st = nn::init_state(stage, nn::mix_seed(seed, static_cast<std::uint64_t>(s) + 1));
    nn::TrainOptions opts;
    opts.loss = nn::LossKind::kSquaredError;
    opts.optimizer = cfg.optimizer;
    opts.optimizer.lr.total_epochs = std::max(1, cfg.layer_epochs);
    opts.epochs = cfg.layer_epochs;
    opts.batch_size = cfg.batch_size;
    std::vector<double> losses;
    opts.on_epoch = [&](int, double, double) {
      losses.push_back(nn::evaluate_loss(stage, st, val, nn::LossKind::kSquaredError));
    };
    nn::train(stage, st, current, opts);
    log::debug("AE stage " + std::to_string(s) + " done" +
               (losses.empty() ? std::string() : ", loss " + std::to_string(losses.back())));
    hist.stage_loss.push_back(std::move(losses));
    state.params[2 * s] = st.params[0];
    state.params[mirror_layer(cfg, s)].bias = st.params[2].bias;
    if (s + 1 < stage_count(cfg)) {
      advance_stage(stage, st, current);
      advance_stage(stage, st, val);
    }
  }
  current.clear();
  current.shrink_to_fit();

  nn::TrainOptions opts;
  opts.loss = nn::LossKind::kSquaredError;
  opts.optimizer = cfg.optimizer;
  opts.optimizer.lr.total_epochs = std::max(1, cfg.finetune_epochs);
  opts.epochs = cfg.finetune_epochs;
  opts.batch_size = cfg.batch_size;
  hist.finetune_loss.push_back(nn::evaluate_loss(spec, state, full_val, nn::LossKind::kSquaredError));
  opts.on_epoch = [&](int, double, double) {
    hist.finetune_loss.push_back(nn::evaluate_loss(spec, state, full_val, nn::LossKind::kSquaredError));
  };
  nn::train(spec, state, frames, opts);
  if (history) *history = std::move(hist);
  return state;
}

PairSet mine_pairs(const dtw::TemplateBank& bank, int threads) {
  bank.validate();
  struct Job {
    int a, b;
  };
  std::vector<Job> jobs;
  PairSet out;
  out.template_pairs.assign(static_cast<std::size_t>(bank.num_keywords()), 0);
  std::vector<std::vector<int>> by_type(static_cast<std::size_t>(bank.num_keywords()));
  for (int i = 0; i < static_cast<int>(bank.templates.size()); ++i)
    by_type[bank.templates[i].keyword_id].push_back(i);
  std::vector<std::string> skipped;
  for (std::size_t k = 0; k < by_type.size(); ++k) {
    const auto& ids = by_type[k];
    if (ids.size() < 2) {
      skipped.push_back(bank.keyword_names[k]);
      continue;
    }
    for (std::size_t a = 0; a < ids.size(); ++a)
      for (std::size_t b = a + 1; b < ids.size(); ++b) jobs.push_back({ids[a], ids[b]});
    out.template_pairs[k] = static_cast<int>(ids.size() * (ids.size() - 1) / 2);
  }
  if (!skipped.empty()) {
    std::string list;
    for (const auto& s : skipped) list += (list.empty() ? "" : ", ") + s;
    log::warn("pair mining skips keyword types with fewer than 2 templates: " + list);
  }
  if (jobs.empty()) throw DataError("pair mining needs at least one keyword type with 2 or more templates");

  std::vector<dtw::AlignmentPath> paths(jobs.size());
  const int nt = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nt));
  auto work = [&](int t) {
    try {
      for (std::size_t j = static_cast<std::size_t>(t); j < jobs.size(); j += static_cast<std::size_t>(nt))
        paths[j] = dtw::dtw_align(bank.templates[jobs[j].a].features, bank.templates[jobs[j].b].features).path;
    } catch (...) {
      errors[static_cast<std::size_t>(t)] = std::current_exception();
    }
  };
  if (nt == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::size_t total = 0;
  for (const auto& p : paths) total += 2 * p.pairs.size();
  out.pairs.reserve(total);
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& ta = bank.templates[jobs[j].a];
    const auto& tb = bank.templates[jobs[j].b];
    auto emit = [&](const KeywordTemplateRef& from, const KeywordTemplateRef& to, int fi, int ti) {
      FramePair fp;
      fp.keyword_id = ta.keyword_id;
      fp.template_a = from.id;
      fp.template_b = to.id;
      const auto x = from.f->frame(fi), y = to.f->frame(ti);
      fp.x_a.assign(x.begin(), x.end());
      fp.x_b.assign(y.begin(), y.end());
      out.pairs.push_back(std::move(fp));
    };
    const KeywordTemplateRef ra{&ta.features, ta.template_id}, rb{&tb.features, tb.template_id};
    for (auto [i, k] : paths[j].pairs) emit(ra, rb, i, k);
    for (auto [i, k] : paths[j].pairs) emit(rb, ra, k, i);
  }
  return out;
}

nn::NetworkState train_cae(const nn::NetworkState& ae_state, std::span<const FramePair> pairs, std::uint64_t seed,
                           const AeConfig& cfg, std::vector<double>* loss_history) {
  cfg.validate();
  check_state(cfg, ae_state);
  if (pairs.empty()) throw DataError("train_cae: empty frame-pair set");
  std::vector<nn::Example> data;
  data.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (static_cast<int>(p.x_a.size()) != cfg.input_dim || static_cast<int>(p.x_b.size()) != cfg.input_dim)
      throw DataError("frame pair dimension does not match the autoencoder input");
    nn::Example e = frame_example(p.x_a);
    e.target.assign(p.x_b.begin(), p.x_b.end());
    data.push_back(std::move(e));
  }
  const auto spec = ae_spec(cfg);
  nn::NetworkState state;
  state.params = ae_state.params;
  state.seed = seed;
  nn::TrainOptions opts;
  opts.loss = nn::LossKind::kSquaredError;
  opts.optimizer = cfg.optimizer;
  opts.optimizer.lr.total_epochs = std::max(1, cfg.cae_epochs);
  opts.epochs = cfg.cae_epochs;
  opts.batch_size = cfg.batch_size;
  const auto hist = nn::train(spec, state, data, opts);
  if (loss_history) *loss_history = hist.train_loss;
  return state;
}

FeatureSequence encode(const AeConfig& cfg, const nn::NetworkState& state, const FeatureSequence& features,
                       FeatureKind kind) {
  check_dim(cfg, features, "encoder input");
  check_state(cfg, state);
  const auto spec = ae_spec(cfg);
  const int n_enc = encoder_layer_count(cfg);
  nn::NetworkSpec enc{spec.input, {spec.layers.begin(), spec.layers.begin() + n_enc}};
  nn::NetworkState st;
  st.params.assign(state.params.begin(), state.params.begin() + n_enc);
  const int T = features.num_frames();
  FeatureSequence out;
  out.frame_rate = features.frame_rate;
  out.kind = kind;
  out.frames.resize(T, cfg.fe_units);
  if (T == 0) return out;
  nn::Tensor x(T, spec.input);
  for (int t = 0; t < T; ++t) {
    const auto f = features.frame(t);
    std::copy(f.begin(), f.end(), x.example(t).begin());
  }
  const nn::Tensor y = nn::forward(enc, st, x, nn::Mode::kEval);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < cfg.fe_units; ++j) out.frames(t, j) = static_cast<float>(y.example(t)[j]);
  return out;
}

namespace {
constexpr int kPairDim = 39;
}

std::vector<std::uint8_t> encode_pairs(std::span<const FramePair> pairs) {
  io::ByteWriter w;
  w.magic("KWSP");
  w.u64(pairs.size());
  for (const auto& p : pairs) {
    if (p.x_a.size() != kPairDim || p.x_b.size() != kPairDim)
      throw DataError("pair cache records hold 39-dimensional frames");
    w.u32(static_cast<std::uint32_t>(p.keyword_id));
    for (float v : p.x_a) w.f32(v);
    for (float v : p.x_b) w.f32(v);
  }
  return w.release();
}

std::vector<FramePair> decode_pairs(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("KWSP", "pair cache");
  const auto n = r.u64("pair count");
  constexpr std::uint64_t kRecord = 4 + 8 * kPairDim;
  if (n > r.remaining() / kRecord) r.need(n * kRecord, "pair records");
  std::vector<FramePair> out(n);
  for (auto& p : out) {
    p.keyword_id = static_cast<int>(r.u32());
    p.x_a.resize(kPairDim);
    p.x_b.resize(kPairDim);
    for (auto& v : p.x_a) v = r.f32();
    for (auto& v : p.x_b) v = r.f32();
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in pair cache", r.offset());
  return out;
}

std::string bank_hash(const dtw::TemplateBank& bank) {
  io::ByteWriter w;
  for (const auto& name : bank.keyword_names) w.str(name);
  for (const auto& t : bank.templates) {
    w.u32(static_cast<std::uint32_t>(t.keyword_id));
    w.u32(static_cast<std::uint32_t>(t.template_id));
    w.u32(static_cast<std::uint32_t>(t.features.num_frames()));
    w.u32(static_cast<std::uint32_t>(t.features.dim()));
    for (int i = 0; i < t.features.num_frames(); ++i)
      for (float v : t.features.frame(i)) w.f32(v);
  }
  return io::sha256_hex(w.data());
}

std::vector<FramePair> load_or_mine_pairs(const std::filesystem::path& path, const dtw::TemplateBank& bank,
                                          int threads) {
  const auto hash = bank_hash(bank);
  auto sidecar = path;
  sidecar += ".hash";
  if (std::filesystem::exists(path) && std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    std::string stored;
    in >> stored;
    if (stored == hash) return decode_pairs(io::read_file(path));
    log::info("pair cache " + path.string() + " is stale, regenerating");
  }
  auto mined = mine_pairs(bank, threads);
  io::write_file(path, encode_pairs(mined.pairs));
  io::write_text_file(sidecar, hash + "\n");
  return std::move(mined.pairs);
}

}  // namespace kws::featlearn
