#pragma once

#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace ctune {

// Named parameter tensor: a shape plus row-major float64 values.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  static Tensor zeros(std::vector<std::size_t> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.values.assign(element_count(t.shape), 0.0);
    return t;
  }
  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return values.size(); }
  bool operator==(const Tensor&) const = default;
};

using NamedTensors = std::map<std::string, Tensor, std::less<>>;

}  // namespace ctune
