#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace topseg {

// NCHW shape. Rank-4 covers everything in this project: scalars are
// (1,1,1,1), per-pixel fields (N,1,H,W), flows (N,2,H,W).
struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  Shape() = default;
  Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

  size_t size() const {
    return static_cast<size_t>(n) * c * h * w;
  }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense double tensor, plain value semantics. All network math runs in
// double so loss values and gradients can be checked against independent
// recomputations at 1e-9.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape_(s), data_(s.size(), fill) {}

  static Tensor zeros(Shape s) { return Tensor(s, 0.0); }
  static Tensor full(Shape s, double v) { return Tensor(s, v); }
  static Tensor scalar(double v) { return Tensor(Shape(1, 1, 1, 1), v); }

  const Shape& shape() const { return shape_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double& at(int n, int c, int y, int x) {
    return data_[offset(n, c, y, x)];
  }
  double at(int n, int c, int y, int x) const {
    return data_[offset(n, c, y, x)];
  }

  size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  double item() const {
    if (size() != 1) throw std::logic_error("Tensor::item on non-scalar " + shape_.str());
    return data_[0];
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.shape().str() + " vs " + b.shape().str());
}

}  // namespace topseg
