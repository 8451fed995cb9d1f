#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ru {

/// Dense per-path, per-grid-point storage of `width` values. Layout is
/// path-major so that one path's history is contiguous.
class PathArray {
 public:
  PathArray() = default;
  PathArray(std::size_t n_paths, std::size_t points, std::size_t width = 1, double fill = 0.0)
      : n_paths_(n_paths), points_(points), width_(width), data_(n_paths * points * width, fill) {}

  std::size_t n_paths() const noexcept { return n_paths_; }
  std::size_t points() const noexcept { return points_; }
  std::size_t width() const noexcept { return width_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t p, std::size_t k, std::size_t j = 0) {
    assert(p < n_paths_ && k < points_ && j < width_);
    return data_[(p * points_ + k) * width_ + j];
  }
  double operator()(std::size_t p, std::size_t k, std::size_t j = 0) const {
    assert(p < n_paths_ && k < points_ && j < width_);
    return data_[(p * points_ + k) * width_ + j];
  }

  std::span<double> at(std::size_t p, std::size_t k) {
    return {data_.data() + (p * points_ + k) * width_, width_};
  }
  std::span<const double> at(std::size_t p, std::size_t k) const {
    return {data_.data() + (p * points_ + k) * width_, width_};
  }

  /// Values of component `j` at grid index `k` across all paths.
  std::vector<double> column(std::size_t k, std::size_t j = 0) const {
    std::vector<double> out(n_paths_);
    for (std::size_t p = 0; p < n_paths_; ++p) out[p] = (*this)(p, k, j);
    return out;
  }

  /// Values of component `j` at a per-path index.
  std::vector<double> sample(std::span<const std::size_t> index, std::size_t j = 0) const {
    if (index.size() != n_paths_) throw std::invalid_argument("PathArray::sample: path count mismatch");
    std::vector<double> out(n_paths_);
    for (std::size_t p = 0; p < n_paths_; ++p) out[p] = (*this)(p, index[p], j);
    return out;
  }

  std::span<const double> raw() const noexcept { return data_; }
  std::span<double> raw() noexcept { return data_; }

  bool same_shape(const PathArray& o) const noexcept {
    return n_paths_ == o.n_paths_ && points_ == o.points_ && width_ == o.width_;
  }

 private:
  std::size_t n_paths_ = 0;
  std::size_t points_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

}  // namespace ru
