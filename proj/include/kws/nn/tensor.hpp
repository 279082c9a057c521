#pragma once

#include <Eigen/Core>
#include <Eigen/StdVector>

#include <span>
#include <string>
#include <vector>

namespace kws::nn {

// Per-example shape: channels x height (time) x width (feature).
struct Shape {
  int c = 1;
  int h = 1;
  int w = 1;

  int size() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 64-byte aligned so Eigen's vectorized kernels take the same path (and
// produce the same bits) regardless of where the buffer lands on the heap.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

// Batch of n examples stored contiguously, NCHW row-major.
struct Tensor {
  int n = 0;
  Shape shape;
  Buffer data;

  Tensor() = default;
  Tensor(int batch, Shape s) : n(batch), shape(s), data(static_cast<std::size_t>(batch) * s.size(), 0.0) {}

  std::span<double> example(int i) {
    return {data.data() + static_cast<std::ptrdiff_t>(i) * shape.size(),
            static_cast<std::size_t>(shape.size())};
  }
  std::span<const double> example(int i) const {
    return {data.data() + static_cast<std::ptrdiff_t>(i) * shape.size(),
            static_cast<std::size_t>(shape.size())};
  }
  // n x shape.size() view.
  Eigen::Map<MatrixRM> matrix() { return {data.data(), n, shape.size()}; }
  Eigen::Map<const MatrixRM> matrix() const { return {data.data(), n, shape.size()}; }
};

// Stacks equally shaped single examples into one batch.
Tensor stack(std::span<const Tensor* const> examples);

}  // namespace kws::nn
