#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kws/dtw/search.hpp"
#include "kws/features/feature_sequence.hpp"
#include "kws/nn/network.hpp"
#include "kws/nn/optimizer.hpp"

namespace kws::featlearn {

struct AeConfig {
  int input_dim = 39;
  int hidden_layers = 8;
  int hidden_units = 100;
  int fe_units = 39;
  int layer_epochs = 5;     // per pretraining stage
  int finetune_epochs = 5;
  int cae_epochs = 120;
  int batch_size = 2048;
  nn::OptimizerSpec optimizer = default_optimizer();

  static nn::OptimizerSpec default_optimizer();
  // Paper topology; smaller batches and a short CAE phase for single-core runs.
  static AeConfig desk();
  void validate() const;
};

// Encoder: hidden_layers x (dense hidden_units, tanh), dense fe_units, tanh.
// Decoder mirrors it with tied (transposed) weights, tanh on every decoder
// layer except the linear output.
nn::NetworkSpec ae_spec(const AeConfig& cfg);
// Number of leading layers whose output is the feature-extraction layer.
int encoder_layer_count(const AeConfig& cfg);

struct AeHistory {
  // Per pretraining stage, the stage loss on a fixed validation batch after
  // every epoch; then the whole-network loss on the same batch.
  std::vector<std::vector<double>> stage_loss;
  std::vector<double> finetune_loss;
};

// Layerwise pretraining followed by whole-network fine-tuning on all frames.
nn::NetworkState pretrain_ae(std::span<const FeatureSequence> features, std::uint64_t seed,
                             const AeConfig& cfg = {}, AeHistory* history = nullptr);

struct FramePair {
  int keyword_id = 0;
  int template_a = -1;
  int template_b = -1;
  std::vector<float> x_a;
  std::vector<float> x_b;
};

struct PairSet {
  std::vector<FramePair> pairs;
  std::vector<int> template_pairs;  // per keyword type
};

// DTW-aligns every unordered template pair of each keyword type and emits
// every aligned frame pair in both directions.
PairSet mine_pairs(const dtw::TemplateBank& bank, int threads = 1);

// Starts from the AE state and trains x_a -> x_b with a fresh optimizer.
nn::NetworkState train_cae(const nn::NetworkState& ae_state, std::span<const FramePair> pairs,
                           std::uint64_t seed, const AeConfig& cfg = {},
                           std::vector<double>* loss_history = nullptr);

// Per-frame feature-extraction layer output; kind should be kAe or kCae.
FeatureSequence encode(const AeConfig& cfg, const nn::NetworkState& state, const FeatureSequence& features,
                       FeatureKind kind);

// "KWSP" | count u64 | count x (keyword_id u32, dim f32, dim f32), dim = 39.
std::vector<std::uint8_t> encode_pairs(std::span<const FramePair> pairs);
std::vector<FramePair> decode_pairs(std::span<const std::uint8_t> bytes);
// Content hash of a template bank; used to invalidate cached pairs.
std::string bank_hash(const dtw::TemplateBank& bank);
// Reads `path` if its sidecar `path.hash` matches the bank, otherwise mines
// the pairs and rewrites both files.
std::vector<FramePair> load_or_mine_pairs(const std::filesystem::path& path, const dtw::TemplateBank& bank,
                                          int threads = 1);

}  // namespace kws::featlearn
