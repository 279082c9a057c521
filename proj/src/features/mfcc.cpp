#include "kws/features/mfcc.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "kws/error.hpp"

namespace kws {
namespace {

// FFTW's planner is not thread-safe; execution on new arrays is.
std::mutex g_fftw_planner_mutex;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// n_filters x (fft_size/2 + 1) triangular weights.
Eigen::MatrixXd mel_filterbank(int n_filters, int fft_size, int sample_rate) {
  const int n_bins = fft_size / 2 + 1;
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_filters + 2);
  for (int i = 0; i < n_filters + 2; ++i) edges[i] = mel_to_hz(mel_hi * i / (n_filters + 1));

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_filters, n_bins);
  for (int m = 0; m < n_filters; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      if (f > lo && f <= mid) fb(m, k) = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) fb(m, k) = (hi - f) / (hi - mid);
    }
  }
  return fb;
}

// Orthonormal DCT-II rows 0..n_ceps-1.
Eigen::MatrixXd dct_matrix(int n_ceps, int n_filters) {
  Eigen::MatrixXd dct(n_ceps, n_filters);
  for (int i = 0; i < n_ceps; ++i) {
    const double scale = std::sqrt((i == 0 ? 1.0 : 2.0) / n_filters);
    for (int m = 0; m < n_filters; ++m)
      dct(i, m) = scale * std::cos(std::numbers::pi * i * (m + 0.5) / n_filters);
  }
  return dct;
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard<std::mutex> lock(g_fftw_planner_mutex);
    fftw_destroy_plan(p);
  }
};

}  // namespace

void validate(const MfccConfig& cfg) {
  if (!(cfg.frame_shift > 0.0) || !(cfg.window_length > cfg.frame_shift))
    throw ConfigError("MFCC config requires window_length > frame_shift > 0");
  if (cfg.n_ceps < 1 || cfg.n_ceps > cfg.n_mel_filters)
    throw ConfigError("MFCC config requires 1 <= n_ceps <= n_mel_filters");
  if (cfg.delta_window < 1) throw ConfigError("MFCC delta window must be >= 1");
  if (!(cfg.energy_floor > 0.0)) throw ConfigError("MFCC energy floor must be > 0");
}

int window_samples(const MfccConfig& cfg, int sample_rate) {
  return static_cast<int>(std::lround(cfg.window_length * sample_rate));
}

int shift_samples(const MfccConfig& cfg, int sample_rate) {
  return static_cast<int>(std::lround(cfg.frame_shift * sample_rate));
}

int num_frames(std::size_t num_samples, int sample_rate, const MfccConfig& cfg) {
  const auto win = static_cast<std::size_t>(window_samples(cfg, sample_rate));
  const auto shift = static_cast<std::size_t>(shift_samples(cfg, sample_rate));
  if (num_samples < win) return 0;
  return static_cast<int>((num_samples - win) / shift + 1);
}

Eigen::MatrixXd delta_features(const Eigen::MatrixXd& statics, int window) {
  const Eigen::Index T = statics.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(T, statics.cols());
  double denom = 0.0;
  for (int n = 1; n <= window; ++n) denom += static_cast<double>(n) * n;
  denom *= 2.0;
  auto clamp_row = [T](Eigen::Index t) { return std::clamp<Eigen::Index>(t, 0, T - 1); };
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int n = 1; n <= window; ++n)
      out.row(t) += n * (statics.row(clamp_row(t + n)) - statics.row(clamp_row(t - n)));
    out.row(t) /= denom;
  }
  return out;
}

FeatureSequence extract_mfcc(const AudioBuffer& audio, const MfccConfig& cfg) {
  validate(cfg);
  if (audio.sample_rate <= 0) throw DataError("audio sample rate must be positive");
  const int win = window_samples(cfg, audio.sample_rate);
  const int shift = shift_samples(cfg, audio.sample_rate);
  const int T = num_frames(audio.samples.size(), audio.sample_rate, cfg);
  if (T < 1)
    throw DataError("audio too short: " + std::to_string(audio.samples.size()) +
                    " samples, need at least one window of " + std::to_string(win));
  const int fft_size = cfg.fft_size > 0 ? cfg.fft_size : next_pow2(win);
  if (fft_size < win) throw ConfigError("fft_size smaller than the analysis window");
  const int n_bins = fft_size / 2 + 1;

  const Eigen::MatrixXd fb = mel_filterbank(cfg.n_mel_filters, fft_size, audio.sample_rate);
  const Eigen::MatrixXd dct = dct_matrix(cfg.n_ceps, cfg.n_mel_filters);
  Eigen::VectorXd hamming(win);
  for (int i = 0; i < win; ++i)
    hamming[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (win - 1));

  std::vector<double> in(static_cast<std::size_t>(fft_size));
  std::vector<fftw_complex> out(static_cast<std::size_t>(n_bins));
  std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan;
  {
    std::lock_guard<std::mutex> lock(g_fftw_planner_mutex);
    plan.reset(fftw_plan_dft_r2c_1d(fft_size, in.data(), out.data(), FFTW_ESTIMATE));
  }

  Eigen::MatrixXd statics(T, cfg.n_ceps);
  Eigen::VectorXd power(n_bins);
  for (int t = 0; t < T; ++t) {
    const float* frame = audio.samples.data() + static_cast<std::ptrdiff_t>(t) * shift;
    std::fill(in.begin(), in.end(), 0.0);
    for (int i = 0; i < win; ++i) {
      const double prev = i > 0 ? frame[i - 1] : frame[0];
      in[i] = (frame[i] - cfg.pre_emphasis * prev) * hamming[i];
    }
    fftw_execute_dft_r2c(plan.get(), in.data(), out.data());
    for (int k = 0; k < n_bins; ++k) power[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    Eigen::VectorXd log_mel = (fb * power).cwiseMax(cfg.energy_floor).array().log().matrix();
    statics.row(t) = (dct * log_mel).transpose();
  }

  Eigen::MatrixXd all = statics;
  if (cfg.append_deltas) {
    const Eigen::MatrixXd d1 = delta_features(statics, cfg.delta_window);
    const Eigen::MatrixXd d2 = delta_features(d1, cfg.delta_window);
    all.resize(T, 3 * cfg.n_ceps);
    all << statics, d1, d2;
  }

  FeatureSequence f;
  f.frames = all.cast<float>();
  f.frame_rate = static_cast<float>(1.0 / cfg.frame_shift);
  f.kind = FeatureKind::kMfcc;
  return f;
}

FeatureSequence apply_cmvn(const FeatureSequence& f) {
  if (f.num_frames() < 2) throw DataError("CMVN needs at least 2 frames");
  const Eigen::MatrixXd x = f.frames.cast<double>();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  const Eigen::RowVectorXd inv_std =
      var.cwiseMax(kCmvnVarianceFloor).array().sqrt().inverse().matrix();
  FeatureSequence out = f;
  out.frames = (centered.array().rowwise() * inv_std.array()).matrix().cast<float>();
  return out;
}

}  // namespace kws
