#pragma once

#include <Eigen/Core>

#include <cstddef>

#include "kws/features/audio.hpp"
#include "kws/features/feature_sequence.hpp"

namespace kws {

// Pipeline: pre-emphasis -> Hamming window -> |FFT|^2 -> triangular mel
// filterbank (HTK mel scale, 0 Hz .. Nyquist) -> log (floored) -> DCT-II
// (orthonormal, c0..c{n_ceps-1}) -> optional deltas and accelerations.
struct MfccConfig {
  double window_length = 0.025;  // seconds
  double frame_shift = 0.010;    // seconds
  int n_ceps = 13;
  int n_mel_filters = 26;
  int fft_size = 0;              // 0: next power of two >= window samples
  double pre_emphasis = 0.97;
  bool append_deltas = true;
  int delta_window = 2;
  // Floor applied to mel energies before the log.
  double energy_floor = 1.1920928955078125e-07;
};

void validate(const MfccConfig& cfg);

int window_samples(const MfccConfig& cfg, int sample_rate);
int shift_samples(const MfccConfig& cfg, int sample_rate);
// floor((N - window) / shift) + 1, or 0 when N < window.
int num_frames(std::size_t num_samples, int sample_rate, const MfccConfig& cfg);

// T x (n_ceps or 3 * n_ceps) features at 1 / frame_shift Hz; no CMVN applied.
FeatureSequence extract_mfcc(const AudioBuffer& audio, const MfccConfig& cfg = {});

// Regression deltas over +-window frames with edge replication:
//   d_t = sum_{n=1..W} n (c_{t+n} - c_{t-n}) / (2 sum_{n=1..W} n^2)
Eigen::MatrixXd delta_features(const Eigen::MatrixXd& statics, int window = 2);

inline constexpr double kCmvnVarianceFloor = 1e-8;

// Per-utterance mean/variance normalisation (population variance, floored
// at kCmvnVarianceFloor). Requires T >= 2.
FeatureSequence apply_cmvn(const FeatureSequence& f);

}  // namespace kws
