#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "kws/binary_io.hpp"
#include "kws/dtw/dtw.hpp"
#include "kws/error.hpp"
#include "kws/featlearn/autoencoder.hpp"
#include "kws/nn/serialize.hpp"

namespace kws::featlearn {
namespace {

FeatureSequence random_seq(std::mt19937& rng, int T, int D, float sigma = 1.0f) {
  std::normal_distribution<float> n(0.0f, sigma);
  FeatureSequence f;
  f.frames.resize(T, D);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < D; ++j) f.frames(i, j) = n(rng);
  return f;
}

AeConfig small_config() {
  AeConfig c;
  c.hidden_layers = 2;
  c.hidden_units = 24;
  c.batch_size = 64;
  return c;
}

dtw::TemplateBank make_bank(std::vector<std::pair<int, FeatureSequence>> items, int K) {
  dtw::TemplateBank b;
  for (int k = 0; k < K; ++k) b.keyword_names.push_back("kw" + std::to_string(k));
  int id = 0;
  for (auto& [k, f] : items) b.templates.push_back({std::move(f), k, id++, ""});
  return b;
}

TEST(AeSpec, MirroredTiedLayout) {
  const AeConfig cfg;
  const auto spec = ae_spec(cfg);
  EXPECT_NO_THROW(spec.validate());
  int dense = 0, tied = 0;
  for (const auto& l : spec.layers) {
    if (l.kind == nn::LayerKind::kDense) ++dense;
    if (l.kind == nn::LayerKind::kTiedDense) ++tied;
  }
  EXPECT_EQ(dense, 9);
  EXPECT_EQ(tied, 9);
  EXPECT_EQ(spec.layers[16].units, 39);
  EXPECT_EQ(encoder_layer_count(cfg), 18);
  EXPECT_EQ(spec.output_shape().size(), 39);
  EXPECT_EQ(spec.layers.back().kind, nn::LayerKind::kTiedDense);
  EXPECT_EQ(spec.layers.back().source, 0);
  EXPECT_EQ(spec.layers[18].source, 16);
}

TEST(PretrainAe, MemorizesSingleRepeatedVector) {
  std::mt19937 rng(1);
  const auto v = random_seq(rng, 1, 39, 0.5f);
  FeatureSequence data;
  data.frames = v.frames.replicate(2000, 1);
  AeConfig cfg;
  cfg.batch_size = 32;
  cfg.finetune_epochs = 30;
  // constant-rate ADADELTA keeps oscillating around a single-point optimum
  cfg.optimizer.lr = {1.0, 0.02, 1};
  const auto state = pretrain_ae(std::span(&data, 1), 3, cfg);
  nn::Tensor x(1, {1, 1, 39});
  for (int j = 0; j < 39; ++j) x.data[j] = v.frames(0, j);
  const auto y = nn::forward(ae_spec(cfg), state, x, nn::Mode::kEval);
  double err = 0.0;
  for (int j = 0; j < 39; ++j) err += (y.data[j] - x.data[j]) * (y.data[j] - x.data[j]);
  EXPECT_LT(err, 1e-3);
}

TEST(PretrainAe, StageLossesNonIncreasingWithinTolerance) {
  std::mt19937 rng(2);
  std::vector<FeatureSequence> data;
  for (int u = 0; u < 6; ++u) data.push_back(random_seq(rng, 300, 39, 0.7f));
  AeConfig cfg = small_config();
  AeHistory h;
  pretrain_ae(data, 4, cfg, &h);
  ASSERT_EQ(h.stage_loss.size(), 3u);
  for (const auto& stage : h.stage_loss) {
    ASSERT_EQ(stage.size(), 5u);
    for (std::size_t e = 1; e < stage.size(); ++e) EXPECT_LE(stage[e], stage[e - 1] * 1.05);
  }
  ASSERT_EQ(h.finetune_loss.size(), 6u);
  EXPECT_LE(h.finetune_loss.back(), h.finetune_loss.front() * 1.05);
}

TEST(PretrainAe, DeterministicAndRejectsWrongDimension) {
  std::mt19937 rng(3);
  std::vector<FeatureSequence> data{random_seq(rng, 200, 39), random_seq(rng, 150, 39)};
  const auto cfg = small_config();
  const auto a = pretrain_ae(data, 9, cfg);
  const auto b = pretrain_ae(data, 9, cfg);
  EXPECT_TRUE(a.same_values(b));
  EXPECT_EQ(nn::encode_model(ae_spec(cfg), a), nn::encode_model(ae_spec(cfg), b));
  std::vector<FeatureSequence> bad{random_seq(rng, 10, 13)};
  EXPECT_THROW(pretrain_ae(bad, 1, cfg), DataError);
  EXPECT_THROW(pretrain_ae({}, 1, cfg), DataError);
}

TEST(MinePairs, HandEnumeratedToyBank) {
  FeatureSequence a, b;
  a.frames.resize(2, 2);
  a.frames << 1, 0, 0, 1;
  b.frames.resize(3, 2);
  b.frames << 1, 0, 1, 0, 0, 1;
  const auto bank = make_bank({{0, a}, {0, b}}, 1);
  const auto ps = mine_pairs(bank);
  ASSERT_EQ(ps.template_pairs, std::vector<int>{1});
  // path (0,0) (0,1) (1,2), then the reverse direction
  ASSERT_EQ(ps.pairs.size(), 6u);
  const std::vector<std::pair<int, int>> fwd{{0, 0}, {0, 1}, {1, 2}};
  for (int k = 0; k < 3; ++k) {
    const auto& p = ps.pairs[k];
    EXPECT_EQ(p.template_a, 0);
    EXPECT_EQ(p.template_b, 1);
    EXPECT_EQ(p.x_a[0], a.frames(fwd[k].first, 0));
    EXPECT_EQ(p.x_a[1], a.frames(fwd[k].first, 1));
    EXPECT_EQ(p.x_b[0], b.frames(fwd[k].second, 0));
    EXPECT_EQ(p.x_b[1], b.frames(fwd[k].second, 1));
    const auto& r = ps.pairs[3 + k];
    EXPECT_EQ(r.template_a, 1);
    EXPECT_EQ(r.x_a, p.x_b);
    EXPECT_EQ(r.x_b, p.x_a);
  }
}

TEST(MinePairs, CountLawAndDoubling) {
  std::mt19937 rng(4);
  for (int J : {2, 3, 5}) {
    std::vector<std::pair<int, FeatureSequence>> items;
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < J + k; ++j) items.push_back({k, random_seq(rng, 4 + j, 5)});
    const auto bank = make_bank(items, 2);
    const auto ps = mine_pairs(bank, 2);
    std::size_t single = 0;
    std::vector<int> expected_pairs(2, 0);
    for (std::size_t a = 0; a < bank.templates.size(); ++a)
      for (std::size_t b = a + 1; b < bank.templates.size(); ++b)
        if (bank.templates[a].keyword_id == bank.templates[b].keyword_id) {
          ++expected_pairs[bank.templates[a].keyword_id];
          single += dtw::dtw_align(bank.templates[a].features, bank.templates[b].features).path.pairs.size();
        }
    EXPECT_EQ(ps.template_pairs[0], J * (J - 1) / 2);
    EXPECT_EQ(ps.template_pairs[1], (J + 1) * J / 2);
    EXPECT_EQ(ps.template_pairs, expected_pairs);
    EXPECT_EQ(ps.pairs.size(), 2 * single);
    EXPECT_EQ(mine_pairs(bank, 1).pairs.size(), ps.pairs.size());
  }
}

TEST(MinePairs, IdenticalTemplatesGiveDiagonal) {
  std::mt19937 rng(5);
  const auto t = random_seq(rng, 7, 39);
  const auto ps = mine_pairs(make_bank({{0, t}, {0, t}}, 1));
  ASSERT_EQ(ps.pairs.size(), 14u);
  for (const auto& p : ps.pairs) EXPECT_EQ(p.x_a, p.x_b);
}

TEST(MinePairs, SkipsSingletonTypesAndFailsWithoutPairs) {
  std::mt19937 rng(6);
  const auto ps = mine_pairs(make_bank({{0, random_seq(rng, 3, 4)}, {1, random_seq(rng, 3, 4)},
                                        {1, random_seq(rng, 4, 4)}}, 2));
  EXPECT_EQ(ps.template_pairs, (std::vector<int>{0, 1}));
  for (const auto& p : ps.pairs) EXPECT_EQ(p.keyword_id, 1);
  EXPECT_THROW(mine_pairs(make_bank({{0, random_seq(rng, 3, 4)}, {1, random_seq(rng, 3, 4)}}, 2)), DataError);
}

TEST(Encode, ShapeDeterminismAndFramewise) {
  std::mt19937 rng(7);
  const AeConfig cfg;
  const auto state = nn::init_state(ae_spec(cfg), 11);
  auto x = random_seq(rng, 25, 39);
  x.frames.row(20) = x.frames.row(3);
  const auto y = encode(cfg, state, x, FeatureKind::kAe);
  EXPECT_EQ(y.num_frames(), 25);
  EXPECT_EQ(y.dim(), 39);
  EXPECT_EQ(y.kind, FeatureKind::kAe);
  EXPECT_EQ(y.frames, encode(cfg, state, x, FeatureKind::kAe).frames);
  EXPECT_EQ(y.frames.row(20), y.frames.row(3));
  EXPECT_THROW(encode(cfg, state, random_seq(rng, 5, 13), FeatureKind::kAe), DataError);
}

TEST(Encode, CommutesWithConcatenation) {
  std::mt19937 rng(8);
  const AeConfig cfg;
  const auto state = nn::init_state(ae_spec(cfg), 12);
  const auto a = random_seq(rng, 17, 39), b = random_seq(rng, 30, 39);
  FeatureSequence ab;
  ab.frames.resize(47, 39);
  ab.frames.topRows(17) = a.frames;
  ab.frames.bottomRows(30) = b.frames;
  const auto eab = encode(cfg, state, ab, FeatureKind::kAe);
  EXPECT_EQ(eab.frames.topRows(17), encode(cfg, state, a, FeatureKind::kAe).frames);
  EXPECT_EQ(eab.frames.bottomRows(30), encode(cfg, state, b, FeatureKind::kAe).frames);
}

std::vector<FramePair> cluster_pairs(std::mt19937& rng, const std::vector<std::vector<float>>& centroids, int n,
                                     float noise) {
  std::normal_distribution<float> g(0.0f, noise);
  std::vector<FramePair> out;
  for (int i = 0; i < n; ++i) {
    const int k = i % static_cast<int>(centroids.size());
    FramePair p;
    p.keyword_id = k;
    for (float c : centroids[k]) {
      p.x_a.push_back(c + g(rng));
      p.x_b.push_back(c + g(rng));
    }
    out.push_back(std::move(p));
  }
  return out;
}

TEST(TrainCae, ZeroEpochsReproducesAeEncoder) {
  std::mt19937 rng(9);
  auto cfg = small_config();
  const auto ae = pretrain_ae(std::vector<FeatureSequence>{random_seq(rng, 100, 39)}, 1, cfg);
  cfg.cae_epochs = 0;
  const auto pairs = cluster_pairs(rng, {std::vector<float>(39, 0.1f)}, 10, 0.1f);
  const auto cae = train_cae(ae, pairs, 2, cfg);
  const auto x = random_seq(rng, 9, 39);
  EXPECT_EQ(encode(cfg, cae, x, FeatureKind::kCae).frames, encode(cfg, ae, x, FeatureKind::kAe).frames);
  EXPECT_THROW(train_cae(ae, {}, 2, cfg), DataError);
  EXPECT_THROW(train_cae(nn::init_state(ae_spec(AeConfig{}), 1), pairs, 2, cfg), ConfigError);
}

TEST(TrainCae, IdentityPairsBehaveLikeAutoencoder) {
  std::mt19937 rng(10);
  auto cfg = small_config();
  std::vector<FeatureSequence> data{random_seq(rng, 600, 39, 0.5f)};
  const auto ae = pretrain_ae(data, 1, cfg);
  std::vector<FramePair> same;
  for (int t = 0; t < data[0].num_frames(); ++t) {
    FramePair p;
    const auto f = data[0].frame(t);
    p.x_a.assign(f.begin(), f.end());
    p.x_b = p.x_a;
    same.push_back(std::move(p));
  }
  cfg.cae_epochs = 5;
  std::vector<double> cae_loss;
  train_cae(ae, same, 2, cfg, &cae_loss);
  cfg.finetune_epochs = 10;
  AeHistory h;
  pretrain_ae(data, 1, cfg, &h);
  // same objective, so the CAE keeps improving on (or holding) the AE's loss
  ASSERT_EQ(cae_loss.size(), 5u);
  EXPECT_LE(cae_loss.back(), cae_loss.front() * 1.05);
  EXPECT_LT(cae_loss.back(), 2.0 * h.finetune_loss.back());
}

double separation_ratio(const std::vector<std::vector<float>>& x, const std::vector<int>& label) {
  double within = 0, between = 0;
  int nw = 0, nb = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      double d = 0;
      for (std::size_t k = 0; k < x[i].size(); ++k) d += (x[i][k] - x[j][k]) * (x[i][k] - x[j][k]);
      d = std::sqrt(d);
      if (label[i] == label[j]) within += d, ++nw;
      else between += d, ++nb;
    }
  return (between / nb) / (within / nw);
}

TEST(TrainCae, SeparatesTwoClusters) {
  std::mt19937 rng(11);
  std::normal_distribution<float> g(0.0f, 0.5f);
  std::vector<std::vector<float>> centroids(2, std::vector<float>(39));
  for (auto& c : centroids)
    for (auto& v : c) v = g(rng);
  auto cfg = small_config();
  const auto pairs = cluster_pairs(rng, centroids, 2000, 0.6f);
  std::vector<FeatureSequence> frames(1);
  frames[0].frames.resize(2000, 39);
  for (int i = 0; i < 2000; ++i)
    for (int j = 0; j < 39; ++j) frames[0].frames(i, j) = pairs[i].x_a[j];
  const auto ae = pretrain_ae(frames, 1, cfg);
  cfg.cae_epochs = 30;
  const auto cae = train_cae(ae, pairs, 2, cfg);
  const auto a = train_cae(ae, pairs, 2, cfg);
  EXPECT_TRUE(a.same_values(cae));

  const auto test = cluster_pairs(rng, centroids, 200, 0.6f);
  FeatureSequence tf;
  tf.frames.resize(200, 39);
  std::vector<int> labels;
  std::vector<std::vector<float>> raw, enc;
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 39; ++j) tf.frames(i, j) = test[i].x_a[j];
    labels.push_back(test[i].keyword_id);
    raw.push_back(test[i].x_a);
  }
  const auto e = encode(cfg, cae, tf, FeatureKind::kCae);
  for (int i = 0; i < 200; ++i) {
    const auto f = e.frame(i);
    enc.emplace_back(f.begin(), f.end());
  }
  const double r_raw = separation_ratio(raw, labels), r_cae = separation_ratio(enc, labels);
  EXPECT_GT(r_cae, 1.0);
  EXPECT_GT(r_cae, r_raw);
}

TEST(PairCache, RoundTripAndInvalidation) {
  std::mt19937 rng(12);
  auto bank = make_bank({{0, random_seq(rng, 5, 39)}, {0, random_seq(rng, 6, 39)}}, 1);
  const auto dir = std::filesystem::temp_directory_path() / "kws_pair_cache_test";
  std::filesystem::remove_all(dir);
  const auto path = dir / "pairs.kwsp";
  const auto first = load_or_mine_pairs(path, bank);
  ASSERT_TRUE(std::filesystem::exists(path));
  const auto cached = load_or_mine_pairs(path, bank);
  ASSERT_EQ(cached.size(), first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(cached[i].x_a, first[i].x_a);
    EXPECT_EQ(cached[i].x_b, first[i].x_b);
  }
  const auto old_hash = bank_hash(bank);
  bank.templates[1].features.frames(0, 0) += 1.0f;
  EXPECT_NE(bank_hash(bank), old_hash);
  const auto fresh = load_or_mine_pairs(path, bank);
  bool changed = false;
  for (std::size_t i = 0; i < std::min(fresh.size(), first.size()); ++i) changed |= fresh[i].x_a != first[i].x_a;
  EXPECT_TRUE(changed || fresh.size() != first.size());
  auto bytes = io::read_file(path);
  EXPECT_EQ(decode_pairs(bytes).size(), fresh.size());
  bytes.pop_back();
  EXPECT_THROW(decode_pairs(bytes), FormatError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace kws::featlearn
