#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kws/features/feature_sequence.hpp"

namespace kws::dtw {

// One isolated recording of a keyword.
struct KeywordTemplate {
  FeatureSequence features;
  int keyword_id = 0;   // 0-based index into the bank's keyword names
  int template_id = 0;
  std::string speaker_id;
};

// Keyword inventory plus its templates. Scores are reported in
// keyword_names order.
struct TemplateBank {
  std::vector<std::string> keyword_names;
  std::vector<KeywordTemplate> templates;

  int num_keywords() const { return static_cast<int>(keyword_names.size()); }
  int feature_dim() const;
  // Throws DataError naming any keyword type with no templates, any bad id or
  // inconsistent dimension.
  void validate() const;
};

// Per-keyword similarity scores for one utterance, each in [0, 1].
struct ScoreVector {
  std::string utterance_id;
  std::vector<double> scores;
};

struct SearchConfig {
  int frame_skip = 3;
  int band_width = 0;  // 0: unconstrained DTW inside each window
};

struct Utterance {
  std::string id;
  FeatureSequence features;
};

// max_q DTW(template, Y[q, min(q + M, N))) over q = 0, skip, 2 skip, ... < N.
// Windows running past the utterance end are clamped (partial windows are
// scored); an utterance shorter than the template is a single window.
double sweep_template(const KeywordTemplate& tmpl, const FeatureSequence& utterance,
                      const SearchConfig& cfg = {});

ScoreVector score_utterance(const TemplateBank& bank, const FeatureSequence& utterance,
                            const SearchConfig& cfg = {}, const std::string& utterance_id = {});

// Order-preserving; results are identical for any thread count.
std::vector<ScoreVector> batch_score(const TemplateBank& bank,
                                     std::span<const Utterance> utterances,
                                     const SearchConfig& cfg = {}, int threads = 1);

// Header "utterance_id<TAB>kw1<TAB>kw2...", then one line per utterance with
// scores printed to 9 significant digits.
std::string format_score_file(std::span<const std::string> keyword_names,
                              std::span<const ScoreVector> scores);
void write_score_file(const std::filesystem::path& path,
                      std::span<const std::string> keyword_names,
                      std::span<const ScoreVector> scores);

struct ScoreFile {
  std::vector<std::string> keyword_names;
  std::vector<ScoreVector> scores;
};
ScoreFile read_score_file(const std::filesystem::path& path);
ScoreFile parse_score_file(const std::string& text);

}  // namespace kws::dtw
