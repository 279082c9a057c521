#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kws/eval/complexity.hpp"
#include "kws/eval/metrics.hpp"
#include "kws/pipeline/config.hpp"
#include "kws/pipeline/manifest.hpp"

namespace kws::pipeline {

// Command-line flags shared by every subcommand. seed/threads override the
// config file.
struct Options {
  std::filesystem::path config;
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

RunConfig effective_config(const Options& opts);

// Exclusive ownership of an output directory for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Output directory layout.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path utterance_features(const std::string& id) const;
  std::filesystem::path template_features(const std::string& id) const;
  std::filesystem::path model(const std::string& name) const;  // models/<name>.kwsm
  std::filesystem::path targets(FeatureChain chain) const;
  std::filesystem::path pairs() const;
  std::filesystem::path report(const std::string& name) const;
};

struct ExtractSummary {
  int processed = 0;
  int skipped = 0;  // outputs already up to date
  int failed = 0;
};

// wav -> MFCC + CMVN; .kwsf inputs are validated and copied. Covers the
// manifest and the template manifest. Per-file failures are logged and
// counted; the run continues.
ExtractSummary cmd_extract(const Options& opts);
// DTW score file over the manifest's train split.
void cmd_dtw_targets(const Options& opts);
void cmd_train_ae(const Options& opts);
void cmd_train_cae(const Options& opts);
void cmd_train_cnn(const Options& opts);
void cmd_train_cnn_dtw(const Options& opts);
// Scores the test split with every configured model; writes a report, ROC
// CSV and score file per model.
std::vector<std::pair<ModelKind, eval::EvalReport>> cmd_evaluate(const Options& opts);
// Prints and writes the paper-scale counts plus this run's measured rows,
// which it returns.
std::vector<eval::ComplexityRow> cmd_profile(const Options& opts);
// Multiplication counts of the three approaches at the published scale.
std::vector<eval::ComplexityRow> paper_complexity(double audio_seconds = 15.0);
// Writes a synthetic corpus (features or audio, manifests, run.cfg) to --out.
void cmd_synth(const Options& opts);

// Runs a subcommand by name and maps errors onto exit codes.
int run_command(const std::string& name, const Options& opts);
std::vector<std::string> command_names();

}  // namespace kws::pipeline
