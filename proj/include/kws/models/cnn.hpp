#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kws/dtw/search.hpp"
#include "kws/features/feature_sequence.hpp"
#include "kws/nn/network.hpp"
#include "kws/nn/optimizer.hpp"
#include "kws/nn/trainer.hpp"

namespace kws::models {

struct TrainingSchedule {
  int epochs = 1000;
  int patience = 20;
  int batch_size = 32;
  double held_out = 0.1;
  double lr_start = 1e-4;
  double lr_end = 1e-6;
};

// Sliding-window keyword classifier over fixed 60 x 39 inputs.
struct CnnClassifierConfig {
  int window = 60;
  int dim = 39;
  std::vector<int> filters{64, 128, 256};
  std::vector<int> kernels{11, 7, 5};
  int pool = 2;  // 2 x 2 stride 2 after the 2nd and 3rd convolution
  std::vector<int> dense{500, 100, 300};
  double dropout = 0.5;
  double momentum = 0.9;
  TrainingSchedule schedule;

  // Same topology with reduced widths for single-core runs.
  static CnnClassifierConfig desk();
  void validate() const;
};

nn::NetworkSpec cnn_classifier_spec(const CnnClassifierConfig& cfg, int num_keywords);

// Trains on the bank's templates, each resampled to cfg.window frames, with a
// seed-determined stratified held-out split for early stopping.
nn::NetworkState train_cnn_classifier(const dtw::TemplateBank& bank, const CnnClassifierConfig& cfg,
                                      std::uint64_t seed, nn::TrainHistory* history = nullptr);

// Max over every complete cfg.window-frame window (step 1) of the softmax
// output; shorter utterances are resampled whole to one window.
std::vector<double> cnn_score_utterance(const nn::NetworkSpec& spec, const nn::NetworkState& state,
                                        const FeatureSequence& utterance);

// Distillation model regressing per-keyword DTW scores from a whole utterance.
struct CnnDtwConfig {
  int dim = 39;
  int first_filters = 80;
  int kernel = 10;
  std::vector<int> blocks{80, 256, 512};  // each block is 3 convolutions of width `kernel`
  int block_depth = 3;
  std::vector<int> dense{3000, 3000};
  double dropout = 0.5;
  double leaky_alpha = 1.0 / 3.0;
  TrainingSchedule schedule{1000, 20, 32, 0.1, 1e-4, 1e-5};

  static CnnDtwConfig desk();
  void validate() const;
};

nn::NetworkSpec cnn_dtw_spec(const CnnDtwConfig& cfg, int num_keywords);

// Targets must lie in [0, 1]; utterances and targets are index-aligned.
nn::NetworkState train_cnn_dtw(std::span<const FeatureSequence> utterances,
                               std::span<const dtw::ScoreVector> targets, const CnnDtwConfig& cfg,
                               std::uint64_t seed, nn::TrainHistory* history = nullptr);

// Whole-utterance forward pass. Utterances shorter than the first kernel are
// rejected; shorter than the full stack they are padded by repeating the
// last frame.
std::vector<double> cnn_dtw_score_utterance(const nn::NetworkSpec& spec, const nn::NetworkState& state,
                                            const FeatureSequence& utterance);

struct Detection {
  std::string utterance_id;
  int keyword_id = 0;
  double score = 0.0;
};

// Keywords scoring >= threshold, highest score first, ties by keyword index.
std::vector<Detection> detect(const dtw::ScoreVector& scores, double threshold);
std::string format_detections(std::span<const std::string> keyword_names, std::span<const Detection> detections);

}  // namespace kws::models
