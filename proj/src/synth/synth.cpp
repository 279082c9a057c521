#include "kws/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "kws/error.hpp"
#include "kws/nn/trainer.hpp"

namespace kws::synth {

using nn::mix_seed;

SynthSpec SynthSpec::clean() {
  SynthSpec s;
  s.noise = 0.0;
  s.speaker_scale = 0.0;
  s.speaker_shift = 0.0;
  s.warp_min = s.warp_max = 1.0;
  s.max_pause_frames = 0;
  return s;
}

void SynthSpec::validate() const {
  if (keywords < 2) throw ConfigError("synth: need at least 2 keyword types");
  if (templates_per_keyword < 2) throw ConfigError("synth: need at least 2 templates per keyword");
  if (train_utterances < 0 || test_utterances < 0) throw ConfigError("synth: utterance counts must be >= 0");
  if (dim < 1) throw ConfigError("synth: dim must be >= 1");
  if (phones < 2) throw ConfigError("synth: need at least 2 phones");
  if (min_word_frames < 2 || max_word_frames < min_word_frames) throw ConfigError("synth: bad word length range");
  if (distractor_words < 1) throw ConfigError("synth: need at least one distractor word");
  if (template_speakers < 1 || utterance_speakers < 1) throw ConfigError("synth: need speakers");
  if (noise < 0 || speaker_scale < 0 || speaker_shift < 0) throw ConfigError("synth: negative variation");
  if (speaker_subspace < 1 || speaker_subspace > dim) throw ConfigError("synth: bad speaker subspace size");
  if (!(warp_min > 0 && warp_max >= warp_min)) throw ConfigError("synth: bad warp range");
  if (min_utterance_frames < 1 || max_utterance_frames < min_utterance_frames)
    throw ConfigError("synth: bad utterance length range");
  if (max_keywords_per_utterance < 0 || max_keywords_per_utterance > keywords)
    throw ConfigError("synth: max_keywords_per_utterance must be in [0, keywords]");
  if (max_pause_frames < 0) throw ConfigError("synth: max_pause_frames must be >= 0");
  const int longest = static_cast<int>(std::ceil(max_word_frames * warp_max));
  if (max_utterance_frames < longest)
    throw ConfigError("synth: infeasible composition, utterances of at most " + std::to_string(max_utterance_frames) +
                      " frames cannot hold a keyword of up to " + std::to_string(longest) + " frames");
}

namespace {

using Rng = std::mt19937_64;

// A word visits a random sequence of phones from the shared inventory.
FeatureSequence make_prototype(Rng& rng, const Eigen::MatrixXd& phones, int min_len, int max_len) {
  std::uniform_int_distribution<int> len_d(min_len, max_len);
  std::uniform_int_distribution<int> phone_d(0, static_cast<int>(phones.rows()) - 1);
  std::normal_distribution<double> g(0.0, 1.0);
  const int dim = static_cast<int>(phones.cols());
  const int L = len_d(rng);
  const int segments = std::max(2, L / 10);
  Eigen::MatrixXd targets(segments, dim);
  for (int s = 0; s < segments; ++s) {
    int p = phone_d(rng);
    while (s > 0 && phones.rows() > 1 && targets.row(s - 1) == phones.row(p)) p = phone_d(rng);
    targets.row(s) = phones.row(p);
  }
  FeatureSequence f;
  f.frames.resize(L, dim);
  Eigen::VectorXd ar = Eigen::VectorXd::Zero(dim);
  for (int t = 0; t < L; ++t) {
    const double pos = static_cast<double>(t) * (segments - 1) / std::max(1, L - 1);
    const int s0 = std::min(segments - 2, static_cast<int>(pos));
    const double a = pos - s0;
    for (int d = 0; d < dim; ++d) ar(d) = 0.8 * ar(d) + 0.6 * g(rng);
    for (int d = 0; d < dim; ++d)
      f.frames(t, d) = static_cast<float>((1.0 - a) * targets(s0, d) + a * targets(s0 + 1, d) + 0.3 * ar(d));
  }
  return f;
}

struct Speaker {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

Speaker make_speaker(const SynthSpec& spec, const Eigen::MatrixXd& subspace, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Speaker s;
  s.A = Eigen::MatrixXd::Identity(spec.dim, spec.dim);
  const double scale = spec.speaker_scale / std::sqrt(static_cast<double>(spec.dim));
  if (scale > 0)
    for (int i = 0; i < spec.dim; ++i)
      for (int j = 0; j < spec.dim; ++j) s.A(i, j) += scale * g(rng);
  Eigen::VectorXd z(spec.speaker_subspace);
  for (int i = 0; i < z.size(); ++i) z(i) = spec.speaker_shift * g(rng);
  s.b = subspace * z;
  return s;
}

// Time-warped, speaker-transformed, noisy copy of a prototype.
FeatureSequence realize(const FeatureSequence& proto, const Speaker& spk, const SynthSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> warp_d(spec.warp_min, spec.warp_max);
  std::normal_distribution<double> g(0.0, 1.0);
  const int L = proto.num_frames();
  const double warp = spec.warp_min == spec.warp_max ? spec.warp_min : warp_d(rng);
  const int n = std::max(2, static_cast<int>(std::lround(L * warp)));
  FeatureSequence out;
  out.frames.resize(n, spec.dim);
  Eigen::VectorXd x(spec.dim);
  for (int t = 0; t < n; ++t) {
    const double pos = n == L ? t : static_cast<double>(t) * (L - 1) / (n - 1);
    const int i0 = std::min(L - 2, static_cast<int>(pos));
    const double a = pos - i0;
    for (int d = 0; d < spec.dim; ++d)
      x(d) = a == 0.0 ? proto.frames(i0, d) : (1.0 - a) * proto.frames(i0, d) + a * proto.frames(i0 + 1, d);
    if (n == L) x = proto.frames.row(t).cast<double>().transpose();
    Eigen::VectorXd y = spk.A * x + spk.b;
    if (spec.noise > 0)
      for (int d = 0; d < spec.dim; ++d) y(d) += spec.noise * g(rng);
    out.frames.row(t) = y.cast<float>().transpose();
  }
  return out;
}

LabeledUtterance compose(const SynthSpec& spec, const std::vector<FeatureSequence>& keywords,
                         const std::vector<FeatureSequence>& distractors, const std::vector<Speaker>& speakers,
                         const std::string& id, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> spk_d(0, spec.utterance_speakers - 1);
  std::uniform_int_distribution<int> len_d(spec.min_utterance_frames, spec.max_utterance_frames);
  std::uniform_int_distribution<int> nkw_d(0, spec.max_keywords_per_utterance);
  std::uniform_int_distribution<int> dis_d(0, static_cast<int>(distractors.size()) - 1);
  std::uniform_int_distribution<int> pause_d(0, spec.max_pause_frames);
  std::normal_distribution<double> g(0.0, 1.0);

  const int spk = spk_d(rng);
  const int target = len_d(rng);
  std::vector<int> kw_ids(keywords.size());
  for (std::size_t k = 0; k < kw_ids.size(); ++k) kw_ids[k] = static_cast<int>(k);
  std::shuffle(kw_ids.begin(), kw_ids.end(), rng);
  kw_ids.resize(static_cast<std::size_t>(nkw_d(rng)));

  struct Item {
    int keyword;  // -1 for distractors
    FeatureSequence f;
  };
  std::vector<Item> items;
  int total = 0;
  for (int k : kw_ids) {
    items.push_back({k, realize(keywords[k], speakers[spk], spec, rng)});
    total += items.back().f.num_frames();
  }
  while (total < target) {
    items.push_back({-1, realize(distractors[dis_d(rng)], speakers[spk], spec, rng)});
    total += items.back().f.num_frames();
  }
  std::shuffle(items.begin(), items.end(), rng);

  std::vector<FeatureSequence> parts;
  LabeledUtterance u;
  u.id = id;
  u.speaker = "us" + std::to_string(spk);
  int pos = 0;
  auto pause = [&] {
    const int n = pause_d(rng);
    if (n == 0) return;
    FeatureSequence p;
    p.frames.resize(n, spec.dim);
    for (int t = 0; t < n; ++t)
      for (int d = 0; d < spec.dim; ++d) p.frames(t, d) = static_cast<float>(0.3 * g(rng));
    pos += n;
    parts.push_back(std::move(p));
  };
  for (auto& it : items) {
    pause();
    const int n = it.f.num_frames();
    if (it.keyword >= 0) u.labels.push_back({it.keyword, pos, pos + n});
    pos += n;
    parts.push_back(std::move(it.f));
  }
  pause();
  u.features.frames.resize(pos, spec.dim);
  int at = 0;
  for (const auto& p : parts) {
    u.features.frames.middleRows(at, p.num_frames()) = p.frames;
    at += p.num_frames();
  }
  std::sort(u.labels.begin(), u.labels.end(), [](const Occurrence& a, const Occurrence& b) { return a.start < b.start; });
  return u;
}

}  // namespace

Corpus generate_corpus(const SynthSpec& spec) {
  spec.validate();
  Corpus c;
  Rng rng(mix_seed(spec.seed, 1));
  std::normal_distribution<double> pg(0.0, 1.0);
  Eigen::MatrixXd phones(spec.phones, spec.dim);
  for (int i = 0; i < phones.rows(); ++i)
    for (int j = 0; j < phones.cols(); ++j) phones(i, j) = pg(rng);
  for (int k = 0; k < spec.keywords; ++k) {
    c.prototypes.push_back(make_prototype(rng, phones, spec.min_word_frames, spec.max_word_frames));
    c.templates.keyword_names.push_back("kw" + std::to_string(k));
  }
  std::vector<FeatureSequence> distractors;
  for (int w = 0; w < spec.distractor_words; ++w)
    distractors.push_back(make_prototype(rng, phones, spec.min_word_frames, spec.max_word_frames));

  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd basis(spec.dim, spec.speaker_subspace);
  for (int i = 0; i < basis.rows(); ++i)
    for (int j = 0; j < basis.cols(); ++j) basis(i, j) = g(rng);
  const Eigen::MatrixXd subspace = Eigen::HouseholderQR<Eigen::MatrixXd>(basis).householderQ() *
                                   Eigen::MatrixXd::Identity(spec.dim, spec.speaker_subspace);

  // Template speakers and utterance speakers are disjoint populations.
  std::vector<Speaker> template_speakers, utterance_speakers;
  for (int s = 0; s < spec.template_speakers; ++s)
    template_speakers.push_back(make_speaker(spec, subspace, mix_seed(spec.seed, 0x1000 + s)));
  for (int s = 0; s < spec.utterance_speakers; ++s)
    utterance_speakers.push_back(make_speaker(spec, subspace, mix_seed(spec.seed, 0x100000 + s)));

  int tid = 0;
  for (int k = 0; k < spec.keywords; ++k)
    for (int j = 0; j < spec.templates_per_keyword; ++j, ++tid) {
      Rng trng(mix_seed(mix_seed(spec.seed, 2), static_cast<std::uint64_t>(tid)));
      const int spk = std::uniform_int_distribution<int>(0, spec.template_speakers - 1)(trng);
      auto f = realize(c.prototypes[k], template_speakers[spk], spec, trng);
      c.templates.templates.push_back({std::move(f), k, tid, "ts" + std::to_string(spk)});
    }

  auto make_set = [&](int count, const std::string& prefix, std::uint64_t tag) {
    std::vector<LabeledUtterance> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04d", prefix.c_str(), i);
      out.push_back(compose(spec, c.prototypes, distractors, utterance_speakers, id,
                            mix_seed(mix_seed(spec.seed, tag), static_cast<std::uint64_t>(i))));
    }
    return out;
  };
  c.train = make_set(spec.train_utterances, "train", 3);
  c.test = make_set(spec.test_utterances, "test", 4);
  return c;
}

AudioBuffer render_audio(const FeatureSequence& f, const AudioSpec& spec, std::uint64_t seed) {
  if (spec.partials < 1 || spec.partials > f.dim()) throw ConfigError("render_audio: bad partial count");
  if (!is_supported_sample_rate(spec.sample_rate)) throw ConfigError("render_audio: unsupported sample rate");
  const int hop = static_cast<int>(std::lround(spec.frame_seconds * spec.sample_rate));
  const int T = f.num_frames();
  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(static_cast<std::size_t>(T) * hop, 0.0f);
  if (T == 0) return out;
  std::vector<double> freq(static_cast<std::size_t>(spec.partials)), phase(freq.size(), 0.0);
  for (int p = 0; p < spec.partials; ++p)
    freq[p] = spec.min_hz * std::pow(spec.max_hz / spec.min_hz, spec.partials == 1 ? 0.0 : static_cast<double>(p) / (spec.partials - 1));
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1e-3);
  std::vector<double> buf(out.samples.size());
  double peak = 0.0;
  for (int t = 0; t < T; ++t) {
    const int t1 = std::min(T - 1, t + 1);
    for (int i = 0; i < hop; ++i) {
      const double a = static_cast<double>(i) / hop;
      double s = 0.0;
      for (int p = 0; p < spec.partials; ++p) {
        const double amp = std::exp(0.7 * ((1.0 - a) * f.frames(t, p) + a * f.frames(t1, p)));
        phase[p] += 2.0 * std::numbers::pi * freq[p] / spec.sample_rate;
        s += amp * std::sin(phase[p]);
      }
      const std::size_t k = static_cast<std::size_t>(t) * hop + i;
      buf[k] = s + g(rng);
      peak = std::max(peak, std::abs(buf[k]));
    }
  }
  const double scale = peak > 0 ? 0.9 / peak : 1.0;
  for (std::size_t k = 0; k < buf.size(); ++k) out.samples[k] = static_cast<float>(buf[k] * scale);
  return out;
}

}  // namespace kws::synth
