#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kws/dtw/search.hpp"
#include "kws/features/audio.hpp"
#include "kws/features/feature_sequence.hpp"

namespace kws::synth {

// Generator for keyword corpora that live directly in feature space. Words
// are smooth trajectories through targets drawn from a shared phone
// inventory, so keywords and distractors overlap; every realization
// applies a random time warp, a per-speaker affine map and additive noise.
struct SynthSpec {
  int keywords = 5;
  int templates_per_keyword = 20;
  int train_utterances = 500;
  int test_utterances = 200;
  int dim = 39;
  int phones = 12;
  int min_word_frames = 40;
  int max_word_frames = 80;
  int distractor_words = 30;
  int template_speakers = 10;
  int utterance_speakers = 20;
  double noise = 1.0;           // additive per-frame Gaussian sigma
  double speaker_scale = 0.3;   // sigma of A_s - I
  double speaker_shift = 2.0;   // sigma of the per-speaker offset within the speaker subspace
  int speaker_subspace = 4;
  double warp_min = 0.8;
  double warp_max = 1.25;
  int min_utterance_frames = 150;
  int max_utterance_frames = 250;
  int max_keywords_per_utterance = 2;
  int max_pause_frames = 8;
  std::uint64_t seed = 1;

  // No warp, noise, pauses or speaker variation: every realization equals
  // its prototype.
  static SynthSpec clean();
  void validate() const;
};

struct Occurrence {
  int keyword_id = 0;
  int start = 0;  // first frame
  int end = 0;    // one past the last frame
};

struct LabeledUtterance {
  std::string id;
  std::string speaker;
  FeatureSequence features;
  std::vector<Occurrence> labels;
};

struct Corpus {
  dtw::TemplateBank templates;
  std::vector<LabeledUtterance> train;
  std::vector<LabeledUtterance> test;
  std::vector<FeatureSequence> prototypes;  // keyword prototypes, indexed by keyword id
};

Corpus generate_corpus(const SynthSpec& spec);

// Audio rendering of a word as a tone complex: each frame's first
// `partials` feature values set the amplitudes of fixed partials.
struct AudioSpec {
  int sample_rate = 16000;
  int partials = 12;
  double min_hz = 200.0;
  double max_hz = 3800.0;
  double frame_seconds = 0.01;
};
AudioBuffer render_audio(const FeatureSequence& f, const AudioSpec& spec, std::uint64_t seed);

}  // namespace kws::synth
