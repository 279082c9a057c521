#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <cstring>
#include <limits>
#include <random>

#include "kws/binary_io.hpp"
#include "kws/error.hpp"
#include "kws/features/audio.hpp"
#include "kws/features/container.hpp"
#include "kws/features/mfcc.hpp"

namespace kws {
namespace {

AudioBuffer tone(double seconds, int rate, double hz, double amp = 0.3) {
  AudioBuffer a;
  a.sample_rate = rate;
  a.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    a.samples[i] = static_cast<float>(amp * std::sin(2 * M_PI * hz * i / rate));
  return a;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "kws_test_features";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(Mfcc, OneSecondAt16kGives98Frames) {
  const auto f = extract_mfcc(tone(1.0, 16000, 440.0));
  EXPECT_EQ(f.num_frames(), 98);
  EXPECT_EQ(f.dim(), 39);
  EXPECT_FLOAT_EQ(f.frame_rate, 100.0f);
  EXPECT_EQ(f.kind, FeatureKind::kMfcc);
}

TEST(Mfcc, FrameCountFollowsClosedForm) {
  MfccConfig cfg;
  for (int rate : {8000, 16000, 44100}) {
    const int win = window_samples(cfg, rate), shift = shift_samples(cfg, rate);
    for (int n : {win, win + 1, win + shift - 1, win + shift, 3 * rate + 17}) {
      AudioBuffer a;
      a.sample_rate = rate;
      a.samples.assign(static_cast<std::size_t>(n), 0.0f);
      const int expected = (n - win) / shift + 1;
      EXPECT_EQ(num_frames(a.samples.size(), rate, cfg), expected);
      EXPECT_EQ(extract_mfcc(a, cfg).num_frames(), expected) << "rate " << rate << " n " << n;
    }
  }
}

TEST(Mfcc, AlwaysThirtyNineDims) {
  std::mt19937 rng(3);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  AudioBuffer a;
  a.sample_rate = 8000;
  a.samples.resize(4000);
  for (auto& s : a.samples) s = noise(rng);
  const auto f = extract_mfcc(a);
  EXPECT_EQ(f.dim(), 39);
  EXPECT_TRUE(f.frames.allFinite());
}

TEST(Mfcc, DitheredSilenceIsStationary) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> dither(-1e-6f, 1e-6f);
  AudioBuffer a;
  a.sample_rate = 16000;
  a.samples.resize(16000);
  for (auto& s : a.samples) s = dither(rng);
  const auto f = extract_mfcc(a);
  for (int t = 1; t < f.num_frames(); ++t) {
    const double d = (f.frames.row(t).head(13) - f.frames.row(t - 1).head(13)).norm();
    EXPECT_LT(d, 1e-3) << "frame " << t;
  }
}

TEST(Mfcc, TooShortAudioIsAnError) {
  AudioBuffer a;
  a.sample_rate = 16000;
  a.samples.assign(399, 0.0f);
  EXPECT_THROW(extract_mfcc(a), DataError);
}

TEST(Mfcc, ConfigValidation) {
  MfccConfig cfg;
  cfg.window_length = 0.005;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.n_ceps = 30;
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(Deltas, ConstantSequenceGivesZero) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(12, 4, 3.5);
  EXPECT_EQ(delta_features(c, 2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Deltas, RampInteriorEqualsSlope) {
  // Regression delta of c_t = s t: sum_n n (2 n s) / (2 sum_n n^2) = s.
  const double s = 0.75;
  Eigen::MatrixXd c(10, 2);
  for (int t = 0; t < 10; ++t) c(t, 0) = s * t, c(t, 1) = -2.0 * s * t + 1.0;
  const auto d = delta_features(c, 2);
  for (int t = 2; t < 8; ++t) {
    EXPECT_NEAR(d(t, 0), s, 1e-12);
    EXPECT_NEAR(d(t, 1), -2.0 * s, 1e-12);
  }
  // Edge replication: at t = 0 the left neighbours equal c_0.
  // (1 (c1 - c0) + 2 (c2 - c0)) / 10 = (s + 4 s) / 10
  EXPECT_NEAR(d(0, 0), 0.5 * s, 1e-12);
}

TEST(Deltas, SingleFrameIsZero) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Random(1, 13);
  EXPECT_EQ(delta_features(c, 2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Deltas, Linearity) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int T = 1 + static_cast<int>(rng() % 15);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(T, 3), y = Eigen::MatrixXd::Random(T, 3);
    const double a = 1.7, b = -0.4;
    const auto lhs = delta_features(a * x + b * y, 2);
    const auto rhs = a * delta_features(x, 2) + b * delta_features(y, 2);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

FeatureSequence random_features(int T, int D, std::uint32_t seed, float scale = 1.0f, float offset = 0.0f) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  FeatureSequence f;
  f.frames.resize(T, D);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < D; ++j) f.frames(i, j) = offset + scale * n(rng);
  return f;
}

void expect_normalised(const FeatureSequence& f) {
  const Eigen::MatrixXd x = f.frames.cast<double>();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::RowVectorXd var = (x.rowwise() - mean).array().square().colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((var.array() - 1.0).abs().maxCoeff(), 1e-6);
}

TEST(Cmvn, ZeroMeanUnitVariance) {
  auto f = random_features(50, 39, 1, 3.0f, 10.0f);
  const auto n = apply_cmvn(f);
  EXPECT_EQ(n.num_frames(), 50);
  EXPECT_EQ(n.dim(), 39);
  expect_normalised(n);
}

TEST(Cmvn, Idempotent) {
  const auto once = apply_cmvn(random_features(40, 13, 2));
  const auto twice = apply_cmvn(once);
  EXPECT_LT((once.frames - twice.frames).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Cmvn, InvariantToPerDimensionAffineRescaling) {
  const auto f = random_features(64, 8, 3);
  auto g = f;
  for (int j = 0; j < 8; ++j) g.frames.col(j) = g.frames.col(j) * (0.5f + j) + Eigen::VectorXf::Constant(64, -3.0f * j);
  EXPECT_LT((apply_cmvn(f).frames - apply_cmvn(g).frames).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Cmvn, ZeroVarianceColumnStaysFinite) {
  auto f = random_features(20, 4, 4);
  f.frames.col(2).setConstant(7.0f);
  const auto n = apply_cmvn(f);
  EXPECT_TRUE(n.frames.allFinite());
  EXPECT_EQ(n.frames.col(2).cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Cmvn, NeedsTwoFrames) {
  EXPECT_THROW(apply_cmvn(random_features(1, 4, 5)), DataError);
}

TEST(Container, RoundTripIsBitExact) {
  auto f = random_features(17, 39, 6);
  f.kind = FeatureKind::kBnf;
  f.frame_rate = 100.0f;
  f.frames(3, 4) = -0.0f;
  f.frames(5, 6) = std::numeric_limits<float>::denorm_min();
  const auto path = temp_path("roundtrip.kwsf");
  write_features(f, path);
  const auto g = read_features(path);
  ASSERT_EQ(g.num_frames(), 17);
  ASSERT_EQ(g.dim(), 39);
  EXPECT_EQ(g.kind, FeatureKind::kBnf);
  EXPECT_EQ(std::memcmp(f.frames.data(), g.frames.data(), sizeof(float) * 17 * 39), 0);
  EXPECT_EQ(encode_features(f), encode_features(g));
}

TEST(Container, HeaderLayout) {
  FeatureSequence f;
  f.frames.resize(2, 3);
  f.frames << 1, 2, 3, 4, 5, 6;
  f.kind = FeatureKind::kCae;
  const auto b = encode_features(f);
  ASSERT_EQ(b.size(), 4u + 2 + 2 + 4 + 4 + 4 + 6 * 4);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "KWSF");
  EXPECT_EQ(b[4], 1);   // version LE
  EXPECT_EQ(b[6], 3);   // CAE
  EXPECT_EQ(b[8], 2);   // T
  EXPECT_EQ(b[12], 3);  // D
  float first;
  std::memcpy(&first, b.data() + 20, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(Container, WrongMagicIsRejected) {
  auto b = encode_features(random_features(3, 2, 7));
  b[0] = 'X';
  try {
    decode_features(b);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Container, TruncatedPayloadReportsOffset) {
  auto b = encode_features(random_features(4, 5, 8));
  b.resize(b.size() - 3);
  try {
    decode_features(b);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 20u);
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST(Container, OversizedHeaderIsTruncation) {
  auto b = encode_features(random_features(4, 5, 9));
  b[8] = 200;  // T = 200, payload only covers 4 frames
  EXPECT_THROW(decode_features(b), FormatError);
}

TEST(Wav, RoundTripWithinQuantisation) {
  const auto a = tone(0.1, 8000, 300.0);
  const auto path = temp_path("tone.wav");
  write_wav(path, a);
  const auto b = read_wav(path);
  EXPECT_EQ(b.sample_rate, 8000);
  ASSERT_EQ(b.samples.size(), a.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_NEAR(a.samples[i], b.samples[i], 1.0 / 32768.0);
}

TEST(Wav, UnsupportedRateListsSupportedRates) {
  auto a = tone(0.1, 16000, 300.0);
  const auto path = temp_path("odd_rate.wav");
  write_wav(path, a);
  auto bytes = io::read_file(path);
  const std::uint32_t rate = 11025;
  std::memcpy(bytes.data() + 24, &rate, 4);
  io::write_file(path, bytes);
  try {
    read_wav(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("11025"), std::string::npos);
    EXPECT_NE(msg.find("16000"), std::string::npos);
  }
}

TEST(Wav, StereoIsRejected) {
  const auto path = temp_path("stereo.wav");
  write_wav(path, tone(0.05, 16000, 100.0));
  auto bytes = io::read_file(path);
  bytes[22] = 2;
  io::write_file(path, bytes);
  EXPECT_THROW(read_wav(path), DataError);
}

TEST(Wav, GarbageIsFormatError) {
  const auto path = temp_path("garbage.wav");
  io::write_text_file(path, "not a wav file at all");
  EXPECT_THROW(read_wav(path), FormatError);
}

}  // namespace
}  // namespace kws
