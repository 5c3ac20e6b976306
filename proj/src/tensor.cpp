#include "him/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace him {

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  numel_ = 1;
  for (int d : shape_) {
    if (d < 0) throw ShapeError("negative tensor dimension");
    numel_ *= d;
  }
  // value-initialized -> zeros
  buf_ = std::shared_ptr<double[]>(new double[static_cast<size_t>(numel_)]());
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, const std::vector<double>& vals) {
  Tensor t(std::move(shape));
  if (static_cast<int64_t>(vals.size()) != t.numel_)
    throw ShapeError("Tensor::from: value count does not match shape");
  std::memcpy(t.data(), vals.data(), vals.size() * sizeof(double));
  return t;
}

Tensor Tensor::clone() const {
  Tensor t(shape_);
  std::memcpy(t.data(), data(), static_cast<size_t>(numel_) * sizeof(double));
  return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  int64_t n = 1;
  for (int d : shape) n *= d;
  if (n != numel_)
    throw ShapeError("reshape: element count mismatch " + shape_str());
  Tensor t;
  t.shape_ = std::move(shape);
  t.buf_ = buf_;
  t.numel_ = numel_;
  return t;
}

void Tensor::fill(double v) {
  std::fill(buf_.get(), buf_.get() + numel_, v);
}

double Tensor::sum() const {
  double s = 0.0;
  for (int64_t i = 0; i < numel_; ++i) s += buf_[i];
  return s;
}

double Tensor::min() const {
  double m = buf_[0];
  for (int64_t i = 1; i < numel_; ++i) m = std::min(m, buf_[i]);
  return m;
}

double Tensor::max() const {
  double m = buf_[0];
  for (int64_t i = 1; i < numel_; ++i) m = std::max(m, buf_[i]);
  return m;
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (int64_t i = 0; i < numel_; ++i) m = std::max(m, std::abs(buf_[i]));
  return m;
}

bool Tensor::all_finite() const {
  for (int64_t i = 0; i < numel_; ++i)
    if (!std::isfinite(buf_[i])) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ")";
  return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

}  // namespace him
