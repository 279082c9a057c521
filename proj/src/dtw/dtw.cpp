#include "kws/dtw/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>

#include "kws/error.hpp"

namespace kws::dtw {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kLanes = 8;

typedef float Lanes __attribute__((vector_size(kLanes * sizeof(float))));

// Every similarity goes through this one routine over zero-padded rows, so
// frame_similarity and the DP produce identical bits.
inline float padded_dot(const float* a, const float* b, int stride) {
  Lanes acc = {};
  for (int k = 0; k < stride; k += kLanes) {
    Lanes va, vb;
    std::memcpy(&va, a + k, sizeof va);
    std::memcpy(&vb, b + k, sizeof vb);
    acc += va * vb;
  }
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

int padded_stride(int dim) { return (dim + kLanes - 1) / kLanes * kLanes; }

// Products of float-valued doubles are exact, so identical frames give c == 1.
inline double similarity_from(double dot_xy, double sq_x, double sq_y) {
  const double denom = std::sqrt(sq_x * sq_y);
  const double c = denom > 0.0 ? std::clamp(dot_xy / denom, -1.0, 1.0) : 0.0;
  return 0.5 * (c + 1.0);
}

// Local costs 1 - sim(x_i, y_j) for j in [j0, j1).
inline void distance_row(const detail::PaddedFrames& x, int i, const detail::PaddedFrames& y, int y0, int j0,
                         int j1, double* out) {
  const float* xi = x.row(i);
  const double sq_x = x.sq[i];
  for (int j = j0; j < j1; ++j)
    out[j] = 1.0 - similarity_from(padded_dot(xi, y.row(y0 + j), x.stride), sq_x, y.sq[y0 + j]);
}

inline bool in_band(int i, int j, int band) { return band <= 0 || std::abs(i - j) <= band; }

int effective_band(int band_width, int m, int n) {
  return band_width > 0 ? std::max(band_width, std::abs(m - n)) : 0;
}

void check_dims(const FeatureSequence& x, const FeatureSequence& y) {
  if (x.num_frames() < 1 || y.num_frames() < 1) throw DataError("DTW requires non-empty sequences");
  if (x.dim() != y.dim())
    throw DataError("DTW dimension mismatch: " + std::to_string(x.dim()) + " vs " + std::to_string(y.dim()));
}

enum Step : unsigned char { kStart = 0, kDiag = 1, kVert = 2, kHoriz = 3 };

}  // namespace

double frame_similarity(std::span<const float> x, std::span<const float> y) {
  if (x.size() != y.size()) throw DataError("frame_similarity: dimension mismatch");
  const int dim = static_cast<int>(x.size());
  const auto px = detail::pad_frames(x.data(), 1, dim), py = detail::pad_frames(y.data(), 1, dim);
  return similarity_from(padded_dot(px.row(0), py.row(0), px.stride), px.sq[0], py.sq[0]);
}

namespace detail {

PaddedFrames pad_frames(const float* rows, int n, int dim) {
  PaddedFrames p;
  p.rows = n;
  p.stride = padded_stride(dim);
  p.data.assign(static_cast<std::size_t>(n) * p.stride, 0.0f);
  p.sq.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::copy(rows + static_cast<std::ptrdiff_t>(i) * dim, rows + static_cast<std::ptrdiff_t>(i + 1) * dim,
              p.data.begin() + static_cast<std::ptrdiff_t>(i) * p.stride);
    p.sq[i] = padded_dot(p.row(i), p.row(i), p.stride);
  }
  return p;
}

double dtw_similarity_raw(const PaddedFrames& x, int x0, int m, const PaddedFrames& y, int y0, int n,
                          int band_width, std::vector<double>& scratch) {
  const int band = effective_band(band_width, m, n);
  // Two rows of (cost, length) plus one row of local costs.
  scratch.assign(5 * static_cast<std::size_t>(n), kInf);
  double* prev_cost = scratch.data();
  double* prev_len = prev_cost + n;
  double* cur_cost = prev_len + n;
  double* cur_len = cur_cost + n;
  double* d = cur_len + n;

  for (int i = 0; i < m; ++i) {
    const int j0 = band > 0 ? std::max(0, i - band) : 0;
    const int j1 = band > 0 ? std::min(n, i + band + 1) : n;
    distance_row(x, x0 + i, y, y0, j0, j1, d);
    if (band > 0) {
      for (int j = 0; j < j0; ++j) cur_cost[j] = kInf;
      for (int j = j1; j < n; ++j) cur_cost[j] = kInf;
    }
    int j = j0;
    if (i == 0) {
      if (j0 == 0) {
        cur_cost[0] = d[0];
        cur_len[0] = 1.0;
        j = 1;
      }
      for (; j < j1; ++j) {
        cur_cost[j] = cur_cost[j - 1] + d[j];
        cur_len[j] = cur_len[j - 1] + 1.0;
      }
    } else {
      if (j == 0) {
        cur_cost[0] = prev_cost[0] + d[0];
        cur_len[0] = prev_len[0] + 1.0;
        j = 1;
      }
      for (; j < j1; ++j) {
        double best = prev_cost[j - 1], len = prev_len[j - 1];
        if (prev_cost[j] < best) best = prev_cost[j], len = prev_len[j];
        if (cur_cost[j - 1] < best) best = cur_cost[j - 1], len = cur_len[j - 1];
        cur_cost[j] = best + d[j];
        cur_len[j] = len + 1.0;
      }
    }
    std::swap(prev_cost, cur_cost);
    std::swap(prev_len, cur_len);
  }
  const double sim = 1.0 - prev_cost[n - 1] / prev_len[n - 1];
  return std::clamp(sim, 0.0, 1.0);
}

}  // namespace detail

double dtw_similarity(const FeatureSequence& x, const FeatureSequence& y, int band_width) {
  check_dims(x, y);
  std::vector<double> scratch;
  return detail::dtw_similarity_raw(detail::pad_frames(x), 0, x.num_frames(), detail::pad_frames(y), 0,
                                    y.num_frames(), band_width, scratch);
}

Alignment dtw_align(const FeatureSequence& x, const FeatureSequence& y, int band_width) {
  check_dims(x, y);
  const int m = x.num_frames(), n = y.num_frames();
  const int band = effective_band(band_width, m, n);
  const auto px = detail::pad_frames(x), py = detail::pad_frames(y);
  std::vector<double> drow(static_cast<std::size_t>(n));

  const auto idx = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };
  std::vector<double> cost(static_cast<std::size_t>(m) * n, kInf);
  std::vector<double> len(cost.size(), 0.0);
  std::vector<unsigned char> from(cost.size(), kStart);

  for (int i = 0; i < m; ++i) {
    distance_row(px, i, py, 0, 0, n, drow.data());
    for (int j = 0; j < n; ++j) {
      if (!in_band(i, j, band)) continue;
      const double d = drow[j];
      if (i == 0 && j == 0) {
        cost[0] = d;
        len[0] = 1.0;
        continue;
      }
      double best = kInf, l = 0.0;
      unsigned char step = kStart;
      if (i > 0 && j > 0) best = cost[idx(i - 1, j - 1)], l = len[idx(i - 1, j - 1)], step = kDiag;
      if (i > 0 && cost[idx(i - 1, j)] < best) best = cost[idx(i - 1, j)], l = len[idx(i - 1, j)], step = kVert;
      if (j > 0 && cost[idx(i, j - 1)] < best) best = cost[idx(i, j - 1)], l = len[idx(i, j - 1)], step = kHoriz;
      cost[idx(i, j)] = best + d;
      len[idx(i, j)] = l + 1.0;
      from[idx(i, j)] = step;
    }
  }

  Alignment out;
  out.similarity = std::clamp(1.0 - cost[idx(m - 1, n - 1)] / len[idx(m - 1, n - 1)], 0.0, 1.0);
  int i = m - 1, j = n - 1;
  out.path.pairs.reserve(static_cast<std::size_t>(len[idx(i, j)]));
  while (true) {
    out.path.pairs.emplace_back(i, j);
    const auto s = from[idx(i, j)];
    if (s == kStart) break;
    if (s == kDiag) --i, --j;
    else if (s == kVert) --i;
    else --j;
  }
  std::reverse(out.path.pairs.begin(), out.path.pairs.end());
  return out;
}

}  // namespace kws::dtw
