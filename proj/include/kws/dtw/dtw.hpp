#pragma once

#include <span>
#include <utility>
#include <vector>

#include "kws/features/feature_sequence.hpp"

namespace kws::dtw {

// 0.5 * (cos(x, y) + 1), in [0, 1]. A zero-norm vector has cos treated as 0,
// giving 0.5.
double frame_similarity(std::span<const float> x, std::span<const float> y);

// Monotone alignment from (0, 0) to (M-1, N-1); indices are 0-based
// (first index into X, second into Y).
struct AlignmentPath {
  std::vector<std::pair<int, int>> pairs;
};

struct Alignment {
  double similarity = 0.0;
  AlignmentPath path;
};

// Step set {(1,0), (0,1), (1,1)}, local cost 1 - frame_similarity. The
// minimum accumulated cost is divided by the number of cells on the chosen
// path (start cell included) and mapped to similarity = 1 - normalised cost.
// Equal-cost predecessors are resolved diagonal, then vertical (advance in X),
// then horizontal (advance in Y).
//
// band_width > 0 restricts cells to the Sakoe-Chiba band
// |i - j| <= max(band_width, |M - N|), so the end cell stays reachable;
// 0 disables it.
Alignment dtw_align(const FeatureSequence& x, const FeatureSequence& y, int band_width = 0);

// Same similarity as dtw_align without building the path.
double dtw_similarity(const FeatureSequence& x, const FeatureSequence& y, int band_width = 0);

namespace detail {

// Rows zero-padded to a multiple of 8 floats, plus their squared norms.
struct PaddedFrames {
  std::vector<float> data;
  std::vector<double> sq;
  int rows = 0;
  int stride = 0;

  const float* row(int i) const { return data.data() + static_cast<std::ptrdiff_t>(i) * stride; }
};

PaddedFrames pad_frames(const float* rows, int n, int dim);
inline PaddedFrames pad_frames(const FeatureSequence& f) { return pad_frames(f.frames.data(), f.num_frames(), f.dim()); }

// Similarity of x rows [x0, x0 + m) against y rows [y0, y0 + n).
// `scratch` is reused between calls.
double dtw_similarity_raw(const PaddedFrames& x, int x0, int m, const PaddedFrames& y, int y0, int n,
                          int band_width, std::vector<double>& scratch);

}  // namespace detail

}  // namespace kws::dtw
