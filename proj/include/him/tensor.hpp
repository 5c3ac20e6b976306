#pragma once

#include <cassert>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace him {

// Error taxonomy used across the library. CLI maps IoError -> exit 2,
// ConfigError -> exit 3.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles with shared storage. Copies are shallow;
// use clone() for a deep copy. All math in this project runs in double so the
// finite-difference checks and checkpoint round-trips are exact.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);
  static Tensor from(std::vector<int> shape, const std::vector<double>& vals);
  static Tensor scalar(double v) { return full({1}, v); }

  bool defined() const { return static_cast<bool>(buf_); }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  int64_t numel() const { return numel_; }

  double* data() { return buf_.get(); }
  const double* data() const { return buf_.get(); }

  double& operator[](int64_t i) {
    assert(i >= 0 && i < numel_);
    return buf_[i];
  }
  double operator[](int64_t i) const {
    assert(i >= 0 && i < numel_);
    return buf_[i];
  }
  double& at(int i, int j) { return buf_[static_cast<int64_t>(i) * dim(1) + j]; }
  double at(int i, int j) const { return buf_[static_cast<int64_t>(i) * dim(1) + j]; }
  double& at(int i, int j, int k) {
    return buf_[(static_cast<int64_t>(i) * dim(1) + j) * dim(2) + k];
  }
  double at(int i, int j, int k) const {
    return buf_[(static_cast<int64_t>(i) * dim(1) + j) * dim(2) + k];
  }

  Tensor clone() const;
  // Same storage, new shape. numel must match.
  Tensor reshaped(std::vector<int> shape) const;

  void fill(double v);
  void zero_() { fill(0.0); }

  double sum() const;
  double min() const;
  double max() const;
  double abs_max() const;
  bool all_finite() const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::shared_ptr<double[]> buf_;
  int64_t numel_ = 0;
};

// Throws ShapeError with a readable message when shapes differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace him
