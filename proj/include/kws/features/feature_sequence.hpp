#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>

namespace kws {

enum class FeatureKind : std::uint16_t { kMfcc = 0, kBnf = 1, kAe = 2, kCae = 3, kOther = 4 };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

using FrameMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// T x D frame-level features; one row per frame.
struct FeatureSequence {
  FrameMatrix frames;
  float frame_rate = 100.0f;
  FeatureKind kind = FeatureKind::kOther;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
  std::span<const float> frame(int t) const {
    return {frames.data() + static_cast<std::ptrdiff_t>(t) * frames.cols(),
            static_cast<std::size_t>(frames.cols())};
  }
  // Rows [begin, end) as a new sequence with the same metadata.
  FeatureSequence slice(int begin, int end) const;
};

// Throws DataError unless T >= 1, D >= 1 and every entry is finite.
void validate(const FeatureSequence& f, const std::string& context = "feature sequence");

}  // namespace kws
