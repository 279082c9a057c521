#include "kws/pipeline/commands.hpp"

#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "kws/binary_io.hpp"
#include "kws/error.hpp"
#include "kws/eval/complexity.hpp"
#include "kws/eval/metrics.hpp"
#include "kws/features/audio.hpp"
#include "kws/features/container.hpp"
#include "kws/features/mfcc.hpp"
#include "kws/log.hpp"
#include "kws/nn/serialize.hpp"
#include "kws/nn/trainer.hpp"

namespace kws::pipeline {

namespace fs = std::filesystem;
using nn::mix_seed;

// ---------------------------------------------------------------- basics

RunConfig effective_config(const Options& opts) {
  RunConfig cfg = opts.config.empty() ? RunConfig{} : RunConfig::load(opts.config);
  if (opts.seed) cfg.set("seed", std::to_string(*opts.seed));
  if (opts.threads) cfg.set("threads", std::to_string(*opts.threads));
  cfg.threads();
  cfg.seed();
  return cfg;
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".kws.lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f)
    throw ConfigError("output directory " + dir.string() + " is owned by another run (remove " + path_.string() +
                      " if that run is dead)");
  std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
  std::fclose(f);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

fs::path RunPaths::utterance_features(const std::string& id) const { return root / "features" / (id + ".kwsf"); }
fs::path RunPaths::template_features(const std::string& id) const {
  return root / "features" / "templates" / (id + ".kwsf");
}
fs::path RunPaths::model(const std::string& name) const { return root / "models" / (name + ".kwsm"); }
fs::path RunPaths::targets(FeatureChain chain) const {
  return root / "targets" / ("train_" + to_string(chain) + ".scores");
}
fs::path RunPaths::pairs() const { return root / "cache" / "pairs.kwsp"; }
fs::path RunPaths::report(const std::string& name) const { return root / "reports" / name; }

namespace {

constexpr const char* kFeatureRecipe = "kwsf-v1|mfcc 0.025 0.010 13 26 pre0.97 deltas2 cmvn";

std::uint64_t stage_seed(const RunConfig& cfg, std::uint64_t tag) { return mix_seed(cfg.seed(), tag); }

// Shared per-command setup: effective config, output lock, config echo.
struct Session {
  Options opts;
  RunConfig cfg;
  RunPaths paths;
  OutputLock lock;

  Session(const Options& o, const std::string& command)
      : opts(o), cfg(effective_config(o)), paths{require_out(o)}, lock(o.out) {
    const std::string echo = cfg.echo();
    std::cout << "# kws " << command << " effective config\n" << echo << std::flush;
    io::write_text_file(paths.root / "logs" / (command + ".config"), echo);
  }

  static fs::path require_out(const Options& o) {
    if (o.out.empty()) throw ConfigError("--out is required");
    return o.out;
  }

  Manifest manifest() const {
    if (opts.manifest.empty()) throw ConfigError("--manifest is required");
    return read_manifest(opts.manifest);
  }
};

std::string history_csv(const nn::TrainHistory& h) {
  std::string out = "epoch,train_loss,monitor_loss\n";
  char buf[96];
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    const double m = e < h.monitor_loss.size() ? h.monitor_loss[e] : 0.0;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e, h.train_loss[e], m);
    out += buf;
  }
  return out;
}

// Sidecar describing what a model was trained on; checked at load time.
void write_meta(const fs::path& model_path, FeatureChain chain, const std::vector<std::string>& keywords) {
  std::string text = "feature_chain=" + to_string(chain) + "\nkeywords=";
  for (std::size_t i = 0; i < keywords.size(); ++i) text += (i ? "," : "") + keywords[i];
  io::write_text_file(fs::path(model_path).replace_extension(".meta"), text + "\n");
}

void check_meta(const fs::path& model_path, FeatureChain chain, const std::vector<std::string>& keywords) {
  const auto meta = fs::path(model_path).replace_extension(".meta");
  if (!fs::exists(meta)) throw DataError("missing model metadata " + meta.string());
  const auto bytes = io::read_file(meta);
  std::string expected = "feature_chain=" + to_string(chain) + "\nkeywords=";
  for (std::size_t i = 0; i < keywords.size(); ++i) expected += (i ? "," : "") + keywords[i];
  expected += "\n";
  const std::string got(bytes.begin(), bytes.end());
  if (got != expected)
    throw ConfigError("model " + model_path.string() +
                      " was trained on a different feature chain or keyword inventory than this config uses");
}

nn::NetworkState load_model_state(const fs::path& path, const nn::NetworkSpec& spec, const std::string& command) {
  if (!fs::exists(path)) throw DataError("missing " + path.string() + "; run " + command + " first");
  return nn::load_state(path, spec);
}

FeatureSequence load_extracted(const fs::path& path, const std::string& id) {
  if (!fs::exists(path)) throw DataError("no extracted features for '" + id + "'; run extract first");
  return read_features(path);
}

// Applies the configured feature chain (raw, AE or CAE encoder).
class Chain {
 public:
  Chain(const RunConfig& cfg, const RunPaths& paths) : kind_(cfg.feature_chain()) {
    if (kind_ == FeatureChain::kRaw) return;
    ae_ = cfg.ae();
    const auto name = kind_ == FeatureChain::kAe ? "ae" : "cae";
    state_ = load_model_state(paths.model(name), featlearn::ae_spec(ae_),
                              kind_ == FeatureChain::kAe ? "train-ae" : "train-cae");
  }

  FeatureChain kind() const { return kind_; }

  FeatureSequence apply(const FeatureSequence& f) const {
    if (kind_ == FeatureChain::kRaw) return f;
    return featlearn::encode(ae_, state_, f, kind_ == FeatureChain::kAe ? FeatureKind::kAe : FeatureKind::kCae);
  }

 private:
  FeatureChain kind_;
  featlearn::AeConfig ae_;
  nn::NetworkState state_;
};

struct UtteranceSet {
  std::vector<const ManifestEntry*> entries;
  std::vector<dtw::Utterance> utterances;
};

UtteranceSet load_split(const Manifest& m, Split split, const RunPaths& paths, const Chain& chain) {
  UtteranceSet s;
  s.entries = m.split(split);
  if (s.entries.empty()) throw DataError("manifest has no " + to_string(split) + " utterances");
  for (const auto* e : s.entries)
    s.utterances.push_back({e->id, chain.apply(load_extracted(paths.utterance_features(e->id), e->id))});
  return s;
}

dtw::TemplateBank load_bank(const RunConfig& cfg, const RunPaths& paths, const Chain& chain) {
  const auto m = read_manifest(cfg.templates());
  dtw::TemplateBank bank;
  std::map<std::string, int> ids;
  int tid = 0;
  for (const auto& e : m.entries) {
    if (!e.labels || e.labels->empty())
      throw DataError("template '" + e.id + "' in " + m.source.string() + " has no keyword label");
    const auto& kw = e.labels->front().keyword;
    auto [it, fresh] = ids.emplace(kw, static_cast<int>(bank.keyword_names.size()));
    if (fresh) bank.keyword_names.push_back(kw);
    bank.templates.push_back(
        {chain.apply(load_extracted(paths.template_features(e.id), e.id)), it->second, tid++, e.speaker});
  }
  bank.validate();
  return bank;
}

void check_kinds(const dtw::TemplateBank& bank, const std::vector<dtw::Utterance>& utts) {
  const auto kind = bank.templates.front().features.kind;
  for (const auto& u : utts)
    if (u.features.kind != kind)
      throw DataError("feature kind mismatch: templates are " + to_string(kind) + ", utterance '" + u.id + "' is " +
                      to_string(u.features.kind));
}

// Runs fn(i) for i in [0, n) on `threads` workers with a strided split.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

// ---------------------------------------------------------------- extract

ExtractSummary cmd_extract(const Options& opts) {
  Session s(opts, "extract");
  const auto m = s.manifest();
  struct Job {
    const ManifestEntry* entry;
    fs::path out;
  };
  std::vector<Job> jobs;
  for (const auto& e : m.entries) jobs.push_back({&e, s.paths.utterance_features(e.id)});
  std::optional<Manifest> templates;
  if (!s.cfg.get("templates").empty()) {
    templates = read_manifest(s.cfg.templates());
    for (const auto& e : templates->entries) jobs.push_back({&e, s.paths.template_features(e.id)});
  }

  enum class Outcome { kProcessed, kSkipped, kFailed };
  std::vector<Outcome> outcome(jobs.size(), Outcome::kFailed);
  std::vector<std::string> errors(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), s.cfg.threads(), [&](int i) {
    const auto& job = jobs[static_cast<std::size_t>(i)];
    const fs::path sidecar = fs::path(job.out).concat(".hash");
    try {
      const auto bytes = io::read_file(job.entry->path);
      const std::string stamp = io::sha256_hex(io::sha256_hex(bytes) + "|" + kFeatureRecipe);
      if (fs::exists(job.out) && fs::exists(sidecar)) {
        const auto old = io::read_file(sidecar);
        if (std::string(old.begin(), old.end()) == stamp + "\n") {
          outcome[static_cast<std::size_t>(i)] = Outcome::kSkipped;
          return;
        }
      }
      const auto ext = job.entry->path.extension().string();
      FeatureSequence f;
      if (ext == ".kwsf") {
        f = decode_features(bytes);
      } else if (ext == ".wav") {
        f = apply_cmvn(extract_mfcc(read_wav(job.entry->path)));
        f.kind = FeatureKind::kMfcc;
      } else {
        throw DataError("unsupported input type '" + ext + "' (expected .wav or .kwsf)");
      }
      validate(f, "features of '" + job.entry->id + "'");
      write_features(f, job.out);
      io::write_text_file(sidecar, stamp + "\n");
      outcome[static_cast<std::size_t>(i)] = Outcome::kProcessed;
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  });

  ExtractSummary sum;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    switch (outcome[i]) {
      case Outcome::kProcessed: ++sum.processed; break;
      case Outcome::kSkipped: ++sum.skipped; break;
      case Outcome::kFailed:
        ++sum.failed;
        log::warn("extract '" + jobs[i].entry->id + "' failed: " + errors[i]);
        break;
    }
  }
  std::cout << "extract: " << sum.processed << " processed, " << sum.skipped << " up to date, " << sum.failed
            << " failed\n";
  return sum;
}

// ---------------------------------------------------------------- DTW targets

void cmd_dtw_targets(const Options& opts) {
  Session s(opts, "dtw-targets");
  const Chain chain(s.cfg, s.paths);
  const auto bank = load_bank(s.cfg, s.paths, chain);
  const auto train = load_split(s.manifest(), Split::kTrain, s.paths, chain);
  check_kinds(bank, train.utterances);
  const auto scores = dtw::batch_score(bank, train.utterances, s.cfg.search(), s.cfg.threads());
  dtw::write_score_file(s.paths.targets(chain.kind()), bank.keyword_names, scores);
  std::cout << "dtw-targets: " << scores.size() << " utterances x " << bank.num_keywords() << " keywords -> "
            << s.paths.targets(chain.kind()).string() << "\n";
}

// ---------------------------------------------------------------- training

void cmd_train_ae(const Options& opts) {
  Session s(opts, "train-ae");
  const auto ae = s.cfg.ae();
  const auto m = s.manifest();
  auto train = m.split(Split::kTrain);
  if (train.empty()) throw DataError("manifest has no train utterances");
  const int limit = s.cfg.get_int("ae.max_utterances");
  if (limit > 0 && static_cast<int>(train.size()) > limit) train.resize(static_cast<std::size_t>(limit));
  std::vector<FeatureSequence> feats;
  for (const auto* e : train) feats.push_back(load_extracted(s.paths.utterance_features(e->id), e->id));
  featlearn::AeHistory hist;
  const auto state = featlearn::pretrain_ae(feats, stage_seed(s.cfg, 0xae), ae, &hist);
  nn::save_state(s.paths.model("ae"), featlearn::ae_spec(ae), state);
  std::string csv = "stage,epoch,loss\n";
  char buf[96];
  for (std::size_t st = 0; st < hist.stage_loss.size(); ++st)
    for (std::size_t e = 0; e < hist.stage_loss[st].size(); ++e) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", st, e, hist.stage_loss[st][e]);
      csv += buf;
    }
  for (std::size_t e = 0; e < hist.finetune_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "finetune,%zu,%.17g\n", e, hist.finetune_loss[e]);
    csv += buf;
  }
  io::write_text_file(s.paths.root / "models" / "ae.history.csv", csv);
  std::cout << "train-ae: " << feats.size() << " utterances -> " << s.paths.model("ae").string() << "\n";
}

void cmd_train_cae(const Options& opts) {
  Session s(opts, "train-cae");
  const auto ae = s.cfg.ae();
  const auto ae_state = load_model_state(s.paths.model("ae"), featlearn::ae_spec(ae), "train-ae");
  RunConfig raw_cfg = s.cfg;
  raw_cfg.set("feature_chain", "raw");
  const Chain raw(raw_cfg, s.paths);
  const auto bank = load_bank(s.cfg, s.paths, raw);
  const auto pairs = featlearn::load_or_mine_pairs(s.paths.pairs(), bank, s.cfg.threads());
  std::vector<double> losses;
  const auto state = featlearn::train_cae(ae_state, pairs, stage_seed(s.cfg, 0xcae), ae, &losses);
  nn::save_state(s.paths.model("cae"), featlearn::ae_spec(ae), state);
  std::string csv = "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < losses.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e, losses[e]);
    csv += buf;
  }
  io::write_text_file(s.paths.root / "models" / "cae.history.csv", csv);
  std::cout << "train-cae: " << pairs.size() << " frame pairs -> " << s.paths.model("cae").string() << "\n";
}

void cmd_train_cnn(const Options& opts) {
  Session s(opts, "train-cnn");
  const auto cfg = s.cfg.cnn();
  const Chain chain(s.cfg, s.paths);
  const auto bank = load_bank(s.cfg, s.paths, chain);
  nn::TrainHistory hist;
  const auto state = models::train_cnn_classifier(bank, cfg, stage_seed(s.cfg, 0xc11), &hist);
  const auto path = s.paths.model("cnn");
  nn::save_state(path, models::cnn_classifier_spec(cfg, bank.num_keywords()), state);
  write_meta(path, chain.kind(), bank.keyword_names);
  io::write_text_file(s.paths.root / "models" / "cnn.history.csv", history_csv(hist));
  std::cout << "train-cnn: " << bank.templates.size() << " templates, " << hist.train_loss.size() << " epochs -> "
            << path.string() << "\n";
}

void cmd_train_cnn_dtw(const Options& opts) {
  Session s(opts, "train-cnn-dtw");
  const auto cfg = s.cfg.cnn_dtw();
  const Chain chain(s.cfg, s.paths);
  const auto target_path = s.paths.targets(chain.kind());
  if (!fs::exists(target_path))
    throw DataError("missing " + target_path.string() + "; run dtw-targets with feature_chain = " +
                    to_string(chain.kind()) + " first");
  const auto targets = dtw::read_score_file(target_path);
  const auto train = load_split(s.manifest(), Split::kTrain, s.paths, chain);
  std::map<std::string, const dtw::ScoreVector*> by_id;
  for (const auto& sv : targets.scores) by_id[sv.utterance_id] = &sv;
  std::vector<FeatureSequence> feats;
  std::vector<dtw::ScoreVector> tg;
  for (const auto& u : train.utterances) {
    const auto it = by_id.find(u.id);
    if (it == by_id.end()) throw DataError("no DTW target for train utterance '" + u.id + "'; rerun dtw-targets");
    feats.push_back(u.features);
    tg.push_back(*it->second);
  }
  nn::TrainHistory hist;
  const auto state = models::train_cnn_dtw(feats, tg, cfg, stage_seed(s.cfg, 0xc7d), &hist);
  const auto path = s.paths.model("cnn_dtw");
  nn::save_state(path, models::cnn_dtw_spec(cfg, static_cast<int>(targets.keyword_names.size())), state);
  write_meta(path, chain.kind(), targets.keyword_names);
  io::write_text_file(s.paths.root / "models" / "cnn_dtw.history.csv", history_csv(hist));
  std::cout << "train-cnn-dtw: " << feats.size() << " utterances, " << hist.train_loss.size() << " epochs -> "
            << path.string() << "\n";
}

// ---------------------------------------------------------------- evaluation

namespace {

// Scores every utterance with one model kind.
class Scorer {
 public:
  Scorer(ModelKind kind, const Session& s, const Chain& chain, const dtw::TemplateBank& bank)
      : kind_(kind), bank_(bank), search_(s.cfg.search()), threads_(s.cfg.threads()) {
    const int K = bank.num_keywords();
    if (kind == ModelKind::kCnn) {
      spec_ = models::cnn_classifier_spec(s.cfg.cnn(), K);
    } else if (kind == ModelKind::kCnnDtw) {
      spec_ = models::cnn_dtw_spec(s.cfg.cnn_dtw(), K);
    } else {
      return;
    }
    const auto path = s.paths.model(to_string(kind));
    state_ = load_model_state(path, spec_, kind == ModelKind::kCnn ? "train-cnn" : "train-cnn-dtw");
    check_meta(path, chain.kind(), bank.keyword_names);
  }

  dtw::ScoreVector score(const dtw::Utterance& u) const {
    if (kind_ == ModelKind::kDtw) return dtw::score_utterance(bank_, u.features, search_, u.id);
    dtw::ScoreVector v;
    v.utterance_id = u.id;
    v.scores = kind_ == ModelKind::kCnn ? models::cnn_score_utterance(spec_, state_, u.features)
                                        : models::cnn_dtw_score_utterance(spec_, state_, u.features);
    return v;
  }

  std::vector<dtw::ScoreVector> score_all(const std::vector<dtw::Utterance>& utts) const {
    if (kind_ == ModelKind::kDtw) return dtw::batch_score(bank_, utts, search_, threads_);
    std::vector<dtw::ScoreVector> out(utts.size());
    parallel_for(static_cast<int>(utts.size()), threads_,
                 [&](int i) { out[static_cast<std::size_t>(i)] = score(utts[static_cast<std::size_t>(i)]); });
    return out;
  }

  const nn::NetworkSpec& spec() const { return spec_; }

 private:
  ModelKind kind_;
  const dtw::TemplateBank& bank_;
  dtw::SearchConfig search_;
  int threads_;
  nn::NetworkSpec spec_;
  nn::NetworkState state_;
};

}  // namespace

std::vector<std::pair<ModelKind, eval::EvalReport>> cmd_evaluate(const Options& opts) {
  Session s(opts, "evaluate");
  const Chain chain(s.cfg, s.paths);
  const auto bank = load_bank(s.cfg, s.paths, chain);
  const auto m = s.manifest();
  const auto test_entries = m.split(Split::kTest);
  if (test_entries.empty()) throw DataError("manifest has no test utterances");
  std::map<std::string, int> kw_ids;
  for (int k = 0; k < bank.num_keywords(); ++k) kw_ids[bank.keyword_names[k]] = k;
  std::map<std::string, std::set<int>> occurrences;
  for (const auto* e : test_entries) {
    if (!e->labels) throw DataError("unlabeled test set: utterance '" + e->id + "' has no label column");
    auto& occ = occurrences[e->id];
    for (const auto& l : *e->labels) {
      const auto it = kw_ids.find(l.keyword);
      if (it == kw_ids.end())
        throw DataError("test utterance '" + e->id + "' is labeled with unknown keyword '" + l.keyword + "'");
      occ.insert(it->second);
    }
  }
  const auto test = load_split(m, Split::kTest, s.paths, chain);
  check_kinds(bank, test.utterances);

  std::vector<std::pair<ModelKind, eval::EvalReport>> out;
  for (const auto kind : s.cfg.models()) {
    const Scorer scorer(kind, s, chain, bank);
    const auto scores = scorer.score_all(test.utterances);
    const auto labeled = eval::label_scores(bank.keyword_names, scores, occurrences);
    const auto report = eval::evaluate(labeled, to_string(kind) + " on " + to_string(chain.kind()) + " features");
    const std::string name = to_string(kind);
    io::write_text_file(s.paths.report(name + ".txt"), eval::format_report(report));
    io::write_text_file(s.paths.report(name + ".roc.csv"), eval::format_roc_csv(report.pooled_roc));
    dtw::write_score_file(s.paths.report(name + ".scores"), bank.keyword_names, scores);
    char line[160];
    std::snprintf(line, sizeof line, "evaluate %s: pooled AUC %.4f, EER %.4f, mean P@10 %.4f, mean P@N %.4f\n",
                  name.c_str(), report.pooled_auc, report.pooled_eer, report.mean_p_at_10, report.mean_p_at_n);
    std::cout << line;
    out.emplace_back(kind, report);
  }
  return out;
}

// ---------------------------------------------------------------- profile

namespace {

// Frames MFCC extraction yields for that much 16 kHz audio.
int frames_for_seconds(double seconds) {
  constexpr int kRate = 16000;
  return num_frames(static_cast<std::size_t>(std::lround(seconds * kRate)), kRate, MfccConfig{});
}

}  // namespace

std::vector<eval::ComplexityRow> paper_complexity(double audio_seconds) {
  // 40 keyword types, 1160 templates averaging 103 frames.
  constexpr int kKeywords = 40;
  eval::ComplexityConfig c;
  c.utterance_frames = frames_for_seconds(audio_seconds);
  c.template_frames.assign(1160, 103);
  c.frame_skip = 3;
  std::vector<eval::ComplexityRow> rows;
  rows.push_back({eval::Approach::kDtw, eval::count_multiplications(c), std::nullopt,
                  "1160 templates x 103 frames, skip 3"});
  c.template_frames.clear();
  c.approach = eval::Approach::kCnn;
  c.network = models::cnn_classifier_spec(models::CnnClassifierConfig{}, kKeywords);
  rows.push_back({eval::Approach::kCnn, eval::count_multiplications(c), std::nullopt, "60-frame windows, step 1"});
  c.approach = eval::Approach::kCnnDtw;
  c.network = models::cnn_dtw_spec(models::CnnDtwConfig{}, kKeywords);
  rows.push_back({eval::Approach::kCnnDtw, eval::count_multiplications(c), std::nullopt, "whole input"});
  return rows;
}

std::vector<eval::ComplexityRow> cmd_profile(const Options& opts) {
  Session s(opts, "profile");
  const double seconds = s.cfg.get_double("profile.audio_seconds");
  const int reps = s.cfg.get_int("profile.repetitions");
  if (!(seconds > 0) || reps < 1) throw ConfigError("profile.audio_seconds and profile.repetitions must be positive");
  const int frames = frames_for_seconds(seconds);

  const auto paper = paper_complexity(seconds);

  // This run: its template bank and whichever models exist.
  const Chain chain(s.cfg, s.paths);
  const auto bank = load_bank(s.cfg, s.paths, chain);
  const auto m = s.manifest();
  const auto train = m.split(Split::kTrain);
  if (train.empty()) throw DataError("profile needs train utterances to build its input");
  FeatureSequence input;
  input.frames.resize(frames, bank.feature_dim());
  for (int at = 0, i = 0; at < frames; ++i) {
    const auto* e = train[static_cast<std::size_t>(i) % train.size()];
    const auto f = chain.apply(load_extracted(s.paths.utterance_features(e->id), e->id));
    const int n = std::min(frames - at, f.num_frames());
    input.frames.middleRows(at, n) = f.frames.topRows(n);
    at += n;
  }
  input.kind = bank.templates.front().features.kind;
  const dtw::Utterance utt{"profile", input};

  std::vector<eval::ComplexityRow> run;
  for (const auto kind : {ModelKind::kDtw, ModelKind::kCnn, ModelKind::kCnnDtw}) {
    if (kind != ModelKind::kDtw && !fs::exists(s.paths.model(to_string(kind)))) continue;
    const Scorer scorer(kind, s, chain, bank);
    eval::ComplexityConfig c;
    c.utterance_frames = frames;
    c.dim = bank.feature_dim();
    eval::ComplexityRow row;
    if (kind == ModelKind::kDtw) {
      c.approach = row.approach = eval::Approach::kDtw;
      c.frame_skip = s.cfg.search().frame_skip;
      for (const auto& t : bank.templates) c.template_frames.push_back(t.features.num_frames());
      row.config = std::to_string(bank.templates.size()) + " templates, skip " + std::to_string(c.frame_skip);
    } else {
      c.approach = row.approach = kind == ModelKind::kCnn ? eval::Approach::kCnn : eval::Approach::kCnnDtw;
      c.network = scorer.spec();
      row.config = "preset " + s.cfg.get("preset");
    }
    row.multiplications = eval::count_multiplications(c);
    row.runtime = eval::benchmark_runtime([&] { (void)scorer.score(utt); }, reps);
    run.push_back(row);
  }

  std::ostringstream os;
  os << "# Paper configuration (multiplication counts)\n"
     << eval::format_complexity_report(paper, seconds) << "\n# This run (" << to_string(chain.kind())
     << " features, single thread)\n"
     << eval::format_complexity_report(run, seconds);
  io::write_text_file(s.paths.report("complexity.txt"), os.str());
  std::cout << os.str();
  return run;
}

// ---------------------------------------------------------------- synth

void cmd_synth(const Options& opts) {
  Session s(opts, "synth");
  const auto spec = s.cfg.synth();
  const bool audio = s.cfg.get_bool("synth.audio");
  const auto corpus = synth::generate_corpus(spec);
  const std::string ext = audio ? ".wav" : ".kwsf";

  auto store = [&](const FeatureSequence& f, const std::string& rel, std::uint64_t tag) {
    const auto path = s.paths.root / rel;
    fs::create_directories(path.parent_path());
    if (audio)
      write_wav(path, synth::render_audio(f, synth::AudioSpec{}, mix_seed(spec.seed, tag)));
    else
      write_features(f, path);
  };

  std::vector<ManifestEntry> templates;
  for (const auto& t : corpus.templates.templates) {
    char id[32];
    std::snprintf(id, sizeof id, "tmpl_%04d", t.template_id);
    ManifestEntry e;
    e.id = id;
    e.relative_path = "templates/" + e.id + ext;
    e.split = Split::kTrain;
    e.labels = std::vector<Label>{{corpus.templates.keyword_names[t.keyword_id], -1, -1}};
    e.speaker = t.speaker_id;
    store(t.features, e.relative_path, 0x7000 + static_cast<std::uint64_t>(t.template_id));
    templates.push_back(std::move(e));
  }

  std::vector<ManifestEntry> utts;
  std::uint64_t tag = 0x9000;
  for (const auto* set : {&corpus.train, &corpus.test}) {
    const Split split = set == &corpus.train ? Split::kTrain : Split::kTest;
    for (const auto& u : *set) {
      ManifestEntry e;
      e.id = u.id;
      e.relative_path = "utterances/" + u.id + ext;
      e.split = split;
      std::vector<Label> labels;
      for (const auto& o : u.labels) labels.push_back({corpus.templates.keyword_names[o.keyword_id], o.start, o.end});
      e.labels = std::move(labels);
      e.speaker = u.speaker;
      store(u.features, e.relative_path, tag++);
      utts.push_back(std::move(e));
    }
  }
  io::write_text_file(s.paths.root / "templates.tsv", format_manifest(templates));
  io::write_text_file(s.paths.root / "manifest.tsv", format_manifest(utts));
  io::write_text_file(s.paths.root / "run.cfg", "preset = " + s.cfg.get("preset") + "\ntemplates = templates.tsv\n");
  std::cout << "synth: " << templates.size() << " templates, " << corpus.train.size() << " train and "
            << corpus.test.size() << " test utterances -> " << s.paths.root.string() << "\n";
}

// ---------------------------------------------------------------- dispatch

std::vector<std::string> command_names() {
  return {"extract", "dtw-targets", "train-ae", "train-cae", "train-cnn", "train-cnn-dtw", "evaluate", "profile", "synth"};
}

int run_command(const std::string& name, const Options& opts) {
  try {
    if (name == "extract") {
      const auto sum = cmd_extract(opts);
      if (sum.failed > 0) {
        std::cerr << "error: " << sum.failed << " file(s) failed to extract\n";
        return static_cast<int>(ExitCode::kData);
      }
    } else if (name == "dtw-targets") {
      cmd_dtw_targets(opts);
    } else if (name == "train-ae") {
      cmd_train_ae(opts);
    } else if (name == "train-cae") {
      cmd_train_cae(opts);
    } else if (name == "train-cnn") {
      cmd_train_cnn(opts);
    } else if (name == "train-cnn-dtw") {
      cmd_train_cnn_dtw(opts);
    } else if (name == "evaluate") {
      cmd_evaluate(opts);
    } else if (name == "profile") {
      cmd_profile(opts);
    } else if (name == "synth") {
      cmd_synth(opts);
    } else {
      throw ConfigError("unknown command '" + name + "'");
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code(e));
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kSuccess);
}

}  // namespace kws::pipeline
