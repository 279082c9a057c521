#include "kws/dtw/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "kws/binary_io.hpp"
#include "kws/dtw/dtw.hpp"
#include "kws/error.hpp"

namespace kws::dtw {

int TemplateBank::feature_dim() const {
  return templates.empty() ? 0 : templates.front().features.dim();
}

void TemplateBank::validate() const {
  if (keyword_names.empty()) throw DataError("template bank has no keyword types");
  std::vector<int> counts(keyword_names.size(), 0);
  const int dim = feature_dim();
  for (const auto& t : templates) {
    if (t.keyword_id < 0 || t.keyword_id >= num_keywords())
      throw DataError("template " + std::to_string(t.template_id) + " has invalid keyword id " +
                      std::to_string(t.keyword_id));
    if (t.features.num_frames() < 1)
      throw DataError("template " + std::to_string(t.template_id) + " is empty");
    if (t.features.dim() != dim)
      throw DataError("template " + std::to_string(t.template_id) + " has dimension " +
                      std::to_string(t.features.dim()) + ", expected " + std::to_string(dim));
    ++counts[t.keyword_id];
  }
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] == 0) throw DataError("keyword type '" + keyword_names[k] + "' has no templates");
}

namespace {

// Sweep over frames padded once by the caller.
double sweep_raw(const detail::PaddedFrames& tmpl, const detail::PaddedFrames& utt, const SearchConfig& cfg,
                 std::vector<double>& scratch) {
  const int m = tmpl.rows;
  const int n = utt.rows;
  double best = 0.0;
  for (int q = 0; q < n; q += cfg.frame_skip) {
    const int len = std::min(m, n - q);
    best = std::max(best, detail::dtw_similarity_raw(tmpl, 0, m, utt, q, len, cfg.band_width, scratch));
    if (q + m >= n) break;  // this window already reached the utterance end
  }
  return best;
}

void check_search(const SearchConfig& cfg) {
  if (cfg.frame_skip < 1) throw ConfigError("frame_skip must be >= 1");
  if (cfg.band_width < 0) throw ConfigError("band_width must be >= 0");
}

}  // namespace

double sweep_template(const KeywordTemplate& tmpl, const FeatureSequence& utterance,
                      const SearchConfig& cfg) {
  check_search(cfg);
  if (tmpl.features.dim() != utterance.dim())
    throw DataError("template/utterance dimension mismatch: " +
                    std::to_string(tmpl.features.dim()) + " vs " +
                    std::to_string(utterance.dim()));
  if (utterance.num_frames() < 1 || tmpl.features.num_frames() < 1)
    throw DataError("empty template or utterance");
  std::vector<double> scratch;
  return sweep_raw(detail::pad_frames(tmpl.features), detail::pad_frames(utterance), cfg, scratch);
}

ScoreVector score_utterance(const TemplateBank& bank, const FeatureSequence& utterance,
                            const SearchConfig& cfg, const std::string& utterance_id) {
  check_search(cfg);
  bank.validate();
  if (utterance.num_frames() < 1) throw DataError("utterance '" + utterance_id + "' is empty");
  if (utterance.dim() != bank.feature_dim())
    throw DataError("utterance '" + utterance_id + "' has dimension " +
                    std::to_string(utterance.dim()) + ", templates have " +
                    std::to_string(bank.feature_dim()));
  const auto padded = detail::pad_frames(utterance);
  ScoreVector out;
  out.utterance_id = utterance_id;
  out.scores.assign(static_cast<std::size_t>(bank.num_keywords()), 0.0);
  std::vector<double> scratch;
  for (const auto& t : bank.templates) {
    auto& s = out.scores[static_cast<std::size_t>(t.keyword_id)];
    s = std::max(s, sweep_raw(detail::pad_frames(t.features), padded, cfg, scratch));
  }
  return out;
}

std::vector<ScoreVector> batch_score(const TemplateBank& bank,
                                     std::span<const Utterance> utterances,
                                     const SearchConfig& cfg, int threads) {
  bank.validate();
  std::vector<ScoreVector> out(utterances.size());
  auto score_one = [&](std::size_t i) {
    try {
      out[i] = score_utterance(bank, utterances[i].features, cfg, utterances[i].id);
    } catch (const DataError& e) {
      throw DataError("utterance '" + utterances[i].id + "': " + e.what());
    }
  };
  const int n_threads =
      std::max(1, std::min<int>(threads, static_cast<int>(utterances.size())));
  if (n_threads == 1) {
    for (std::size_t i = 0; i < utterances.size(); ++i) score_one(i);
    return out;
  }
  // Strided partition; each slot is written by exactly one worker.
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
  std::vector<std::thread> pool;
  for (int w = 0; w < n_threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < utterances.size(); i += n_threads)
          score_one(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::string format_score_file(std::span<const std::string> keyword_names,
                              std::span<const ScoreVector> scores) {
  std::string out = "utterance_id";
  for (const auto& k : keyword_names) out += '\t' + k;
  out += '\n';
  char buf[64];
  for (const auto& sv : scores) {
    if (sv.scores.size() != keyword_names.size())
      throw DataError("score vector for '" + sv.utterance_id + "' has " +
                      std::to_string(sv.scores.size()) + " entries, expected " +
                      std::to_string(keyword_names.size()));
    out += sv.utterance_id;
    for (double s : sv.scores) {
      std::snprintf(buf, sizeof buf, "\t%.9g", s);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_score_file(const std::filesystem::path& path,
                      std::span<const std::string> keyword_names,
                      std::span<const ScoreVector> scores) {
  io::write_text_file(path, format_score_file(keyword_names, scores));
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

}  // namespace

ScoreFile parse_score_file(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  ScoreFile sf;
  if (!std::getline(in, line)) throw DataError("score file is empty");
  auto header = split_tabs(line);
  if (header.empty() || header[0] != "utterance_id")
    throw DataError("score file header must start with 'utterance_id'");
  sf.keyword_names.assign(header.begin() + 1, header.end());
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != sf.keyword_names.size() + 1)
      throw DataError("score file line " + std::to_string(line_no) + ": expected " +
                      std::to_string(sf.keyword_names.size() + 1) + " fields");
    ScoreVector sv;
    sv.utterance_id = fields[0];
    for (std::size_t k = 1; k < fields.size(); ++k) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(fields[k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != fields[k].size() || !std::isfinite(v))
        throw DataError("score file line " + std::to_string(line_no) + ": bad score '" +
                        fields[k] + "'");
      sv.scores.push_back(v);
    }
    sf.scores.push_back(std::move(sv));
  }
  return sf;
}

ScoreFile read_score_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_score_file(ss.str());
}

}  // namespace kws::dtw
