#include "kws/pipeline/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kws/error.hpp"

namespace kws::pipeline {
namespace {

using KeyMap = std::map<std::string, std::string>;

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// Shortest text that reads back to the same double.
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void put_schedule(KeyMap& m, const std::string& p, const models::TrainingSchedule& s) {
  m[p + ".epochs"] = std::to_string(s.epochs);
  m[p + ".patience"] = std::to_string(s.patience);
  m[p + ".batch_size"] = std::to_string(s.batch_size);
  m[p + ".held_out"] = num(s.held_out);
  m[p + ".lr_start"] = num(s.lr_start);
  m[p + ".lr_end"] = num(s.lr_end);
}

KeyMap defaults(const std::string& preset) {
  const bool desk = preset == "desk";
  KeyMap m;
  m["preset"] = preset;
  m["seed"] = "1";
  m["threads"] = "1";
  m["feature_chain"] = "raw";
  m["model"] = "dtw";
  m["templates"] = "";

  const dtw::SearchConfig search;
  m["dtw.frame_skip"] = std::to_string(search.frame_skip);
  m["dtw.band_width"] = std::to_string(search.band_width);

  const auto ae = desk ? featlearn::AeConfig::desk() : featlearn::AeConfig{};
  m["ae.hidden_layers"] = std::to_string(ae.hidden_layers);
  m["ae.hidden_units"] = std::to_string(ae.hidden_units);
  m["ae.layer_epochs"] = std::to_string(ae.layer_epochs);
  m["ae.finetune_epochs"] = std::to_string(ae.finetune_epochs);
  m["ae.cae_epochs"] = std::to_string(ae.cae_epochs);
  m["ae.batch_size"] = std::to_string(ae.batch_size);
  // Untranscribed training utterances used for AE pretraining; 0 = all.
  m["ae.max_utterances"] = desk ? "100" : "0";

  const auto cnn = desk ? models::CnnClassifierConfig::desk() : models::CnnClassifierConfig{};
  m["cnn.filters"] = join(cnn.filters);
  m["cnn.kernels"] = join(cnn.kernels);
  m["cnn.dense"] = join(cnn.dense);
  m["cnn.dropout"] = num(cnn.dropout);
  m["cnn.momentum"] = num(cnn.momentum);
  put_schedule(m, "cnn", cnn.schedule);

  const auto cd = desk ? models::CnnDtwConfig::desk() : models::CnnDtwConfig{};
  m["cnn_dtw.first_filters"] = std::to_string(cd.first_filters);
  m["cnn_dtw.kernel"] = std::to_string(cd.kernel);
  m["cnn_dtw.blocks"] = join(cd.blocks);
  m["cnn_dtw.block_depth"] = std::to_string(cd.block_depth);
  m["cnn_dtw.dense"] = join(cd.dense);
  m["cnn_dtw.dropout"] = num(cd.dropout);
  m["cnn_dtw.leaky_alpha"] = num(cd.leaky_alpha);
  put_schedule(m, "cnn_dtw", cd.schedule);

  m["profile.repetitions"] = "5";
  m["profile.audio_seconds"] = "15";

  const synth::SynthSpec sy;
  m["synth.keywords"] = std::to_string(sy.keywords);
  m["synth.templates_per_keyword"] = std::to_string(sy.templates_per_keyword);
  m["synth.train_utterances"] = std::to_string(sy.train_utterances);
  m["synth.test_utterances"] = std::to_string(sy.test_utterances);
  m["synth.phones"] = std::to_string(sy.phones);
  m["synth.noise"] = num(sy.noise);
  m["synth.speaker_scale"] = num(sy.speaker_scale);
  m["synth.speaker_shift"] = num(sy.speaker_shift);
  m["synth.audio"] = "false";
  return m;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

models::TrainingSchedule get_schedule(const RunConfig& c, const std::string& p) {
  models::TrainingSchedule s;
  s.epochs = c.get_int(p + ".epochs");
  s.patience = c.get_int(p + ".patience");
  s.batch_size = c.get_int(p + ".batch_size");
  s.held_out = c.get_double(p + ".held_out");
  s.lr_start = c.get_double(p + ".lr_start");
  s.lr_end = c.get_double(p + ".lr_end");
  return s;
}

}  // namespace

std::string to_string(FeatureChain c) {
  switch (c) {
    case FeatureChain::kRaw: return "raw";
    case FeatureChain::kAe: return "ae";
    case FeatureChain::kCae: return "cae";
  }
  return "?";
}

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::kDtw: return "dtw";
    case ModelKind::kCnn: return "cnn";
    case ModelKind::kCnnDtw: return "cnn_dtw";
  }
  return "?";
}

ModelKind model_from_string(const std::string& s) {
  if (s == "dtw") return ModelKind::kDtw;
  if (s == "cnn") return ModelKind::kCnn;
  if (s == "cnn_dtw") return ModelKind::kCnnDtw;
  throw ConfigError("unknown model '" + s + "' (expected dtw, cnn or cnn_dtw)");
}

RunConfig::RunConfig() : values_(defaults("paper")) {}

void RunConfig::apply_preset(const std::string& name) {
  if (name != "paper" && name != "desk") throw ConfigError("unknown preset '" + name + "' (expected paper or desk)");
  values_ = defaults(name);
  for (const auto& [k, v] : explicit_) values_[k] = v;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
  explicit_[key] = value;
  if (key == "preset") apply_preset(value);
  else values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  const auto& s = get(key);
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("config key '" + key + "' expects an integer, got '" + s + "'");
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& s = get(key);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v))
    throw ConfigError("config key '" + key + "' expects a number, got '" + s + "'");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + s + "'");
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  const auto& s = get(key);
  if (s.empty()) return out;
  std::string::size_type at = 0;
  while (true) {
    const auto next = s.find(',', at);
    const auto item = trim(s.substr(at, next == std::string::npos ? std::string::npos : next - at));
    int v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size())
      throw ConfigError("config key '" + key + "' expects a comma-separated integer list, got '" + s + "'");
    out.push_back(v);
    if (next == std::string::npos) return out;
    at = next + 1;
  }
}

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base_dir,
                           const std::string& source_name) {
  RunConfig c;
  c.base_dir_ = base_dir;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::pair<std::string, std::string>> entries;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source_name + ":" + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key == "templates" && !value.empty() && std::filesystem::path(value).is_relative())
      value = (base_dir / value).lexically_normal().string();
    entries.emplace_back(key, value);
  }
  // The preset goes first so later keys override its defaults.
  for (const auto& [k, v] : entries)
    if (k == "preset") c.set(k, v);
  for (const auto& [k, v] : entries) {
    try {
      c.set(k, v);
    } catch (const ConfigError& e) {
      throw ConfigError(source_name + ": " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path(), path.string());
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t RunConfig::seed() const {
  const auto& s = get("seed");
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("seed must be a non-negative integer");
  return v;
}

int RunConfig::threads() const {
  const int t = get_int("threads");
  if (t < 1) throw ConfigError("threads must be >= 1");
  return t;
}

FeatureChain RunConfig::feature_chain() const {
  const auto& s = get("feature_chain");
  if (s == "raw") return FeatureChain::kRaw;
  if (s == "ae") return FeatureChain::kAe;
  if (s == "cae") return FeatureChain::kCae;
  throw ConfigError("unknown feature_chain '" + s + "' (expected raw, ae or cae)");
}

std::vector<ModelKind> RunConfig::models() const {
  std::vector<ModelKind> out;
  const auto& s = get("model");
  std::string::size_type at = 0;
  while (true) {
    const auto next = s.find(',', at);
    out.push_back(model_from_string(trim(s.substr(at, next == std::string::npos ? std::string::npos : next - at))));
    if (next == std::string::npos) return out;
    at = next + 1;
  }
}

std::filesystem::path RunConfig::templates() const {
  const auto& s = get("templates");
  if (s.empty()) throw ConfigError("config key 'templates' (template manifest) is not set");
  return s;
}

dtw::SearchConfig RunConfig::search() const {
  dtw::SearchConfig c;
  c.frame_skip = get_int("dtw.frame_skip");
  c.band_width = get_int("dtw.band_width");
  if (c.frame_skip < 1) throw ConfigError("dtw.frame_skip must be >= 1");
  if (c.band_width < 0) throw ConfigError("dtw.band_width must be >= 0");
  return c;
}

featlearn::AeConfig RunConfig::ae() const {
  featlearn::AeConfig c;
  c.hidden_layers = get_int("ae.hidden_layers");
  c.hidden_units = get_int("ae.hidden_units");
  c.layer_epochs = get_int("ae.layer_epochs");
  c.finetune_epochs = get_int("ae.finetune_epochs");
  c.cae_epochs = get_int("ae.cae_epochs");
  c.batch_size = get_int("ae.batch_size");
  c.validate();
  return c;
}

models::CnnClassifierConfig RunConfig::cnn() const {
  models::CnnClassifierConfig c;
  c.filters = get_int_list("cnn.filters");
  c.kernels = get_int_list("cnn.kernels");
  c.dense = get_int_list("cnn.dense");
  c.dropout = get_double("cnn.dropout");
  c.momentum = get_double("cnn.momentum");
  c.schedule = get_schedule(*this, "cnn");
  c.validate();
  return c;
}

models::CnnDtwConfig RunConfig::cnn_dtw() const {
  models::CnnDtwConfig c;
  c.first_filters = get_int("cnn_dtw.first_filters");
  c.kernel = get_int("cnn_dtw.kernel");
  c.blocks = get_int_list("cnn_dtw.blocks");
  c.block_depth = get_int("cnn_dtw.block_depth");
  c.dense = get_int_list("cnn_dtw.dense");
  c.dropout = get_double("cnn_dtw.dropout");
  c.leaky_alpha = get_double("cnn_dtw.leaky_alpha");
  c.schedule = get_schedule(*this, "cnn_dtw");
  c.validate();
  return c;
}

synth::SynthSpec RunConfig::synth() const {
  synth::SynthSpec s;
  s.keywords = get_int("synth.keywords");
  s.templates_per_keyword = get_int("synth.templates_per_keyword");
  s.train_utterances = get_int("synth.train_utterances");
  s.test_utterances = get_int("synth.test_utterances");
  s.phones = get_int("synth.phones");
  s.noise = get_double("synth.noise");
  s.speaker_scale = get_double("synth.speaker_scale");
  s.speaker_shift = get_double("synth.speaker_shift");
  s.seed = seed();
  s.validate();
  return s;
}

}  // namespace kws::pipeline
