#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctune/error.hpp"

namespace ctune {

struct GridDims {
  int height = 0;
  int width = 0;

  std::size_t size() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  bool operator==(const GridDims&) const = default;
};

inline std::string to_string(GridDims d) {
  return std::to_string(d.height) + "x" + std::to_string(d.width);
}

// Dense row-major 2-D grid.
template <class T>
class Grid {
 public:
  Grid() = default;
  explicit Grid(GridDims dims, T fill = T{}) : dims_(dims), data_(dims.size(), fill) {
    if (dims.height < 0 || dims.width < 0) throw ShapeError("negative grid dimensions");
  }
  Grid(GridDims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    if (data_.size() != dims.size()) {
      throw ShapeError("grid payload has " + std::to_string(data_.size()) + " values, expected " +
                       std::to_string(dims.size()));
    }
  }

  GridDims dims() const { return dims_; }
  int height() const { return dims_.height; }
  int width() const { return dims_.width; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int y, int x) { return data_[static_cast<std::size_t>(y) * dims_.width + x]; }
  const T& operator()(int y, int x) const { return data_[static_cast<std::size_t>(y) * dims_.width + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  GridDims dims_{};
  std::vector<T> data_;
};

using Mask = Grid<std::uint8_t>;
using Image = Grid<float>;
using ProbabilityGrid = Grid<double>;

inline void require_same_dims(GridDims a, GridDims b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": dimension mismatch " + to_string(a) + " vs " + to_string(b));
}

}  // namespace ctune
