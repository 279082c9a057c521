#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kws/dtw/search.hpp"
#include "kws/featlearn/autoencoder.hpp"
#include "kws/models/cnn.hpp"
#include "kws/synth/synth.hpp"

namespace kws::pipeline {

enum class FeatureChain { kRaw, kAe, kCae };
std::string to_string(FeatureChain c);

enum class ModelKind { kDtw, kCnn, kCnnDtw };
std::string to_string(ModelKind m);
ModelKind model_from_string(const std::string& s);

// Flat key=value configuration. Every key has a default; "preset = paper"
// gives the paper's hyperparameters, "preset = desk" the reduced widths and
// schedules used for single-core runs. Unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  // Lines of "key = value"; '#' starts a comment. Relative paths in
  // path-valued keys resolve against base_dir.
  static RunConfig parse(const std::string& text, const std::filesystem::path& base_dir = {},
                         const std::string& source_name = "config");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool is_set_explicitly(const std::string& key) const { return explicit_.count(key) > 0; }

  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  // Every key with its effective value, sorted, one "key = value" per line.
  std::string echo() const;

  std::uint64_t seed() const;
  int threads() const;
  FeatureChain feature_chain() const;
  std::vector<ModelKind> models() const;
  std::filesystem::path templates() const;

  dtw::SearchConfig search() const;
  featlearn::AeConfig ae() const;
  models::CnnClassifierConfig cnn() const;
  models::CnnDtwConfig cnn_dtw() const;
  synth::SynthSpec synth() const;

 private:
  void apply_preset(const std::string& name);

  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> explicit_;
  std::filesystem::path base_dir_;
};

}  // namespace kws::pipeline
