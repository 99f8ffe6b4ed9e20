#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dskt/common.hpp"

namespace dskt {

// Dense row-major double tensor. Shapes are small integer vectors; the
// canonical feature layout in this project is [C, H, W].
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::size_t>(numel_of(shape)) != data.size())
      throw ShapeError("tensor data size does not match shape");
  }

  static long long numel_of(const std::vector<int>& s) {
    long long n = 1;
    for (int e : s) {
      if (e < 0) throw ShapeError("negative tensor extent");
      n *= e;
    }
    return n;
  }

  long long numel() const { return static_cast<long long>(data.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(shape.size()); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& at3(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double at3(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * shape[1] * shape[2]; }
  const double* plane(int c) const {
    return data.data() + static_cast<std::size_t>(c) * shape[1] * shape[2];
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    if (d < 0) d = -d;
    if (d > m) m = d;
  }
  return m;
}

inline double rmse(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("rmse: shape mismatch");
  if (a.data.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.data.size()));
}

}  // namespace dskt
