#include "dafc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dafc {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

static void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::size_t Tensor::row_stride() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > shape_.at(0))
    throw ShapeError("row slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(shape_));
  Shape s = shape_;
  s[0] = end - begin;
  const auto stride = row_stride();
  return Tensor(std::move(s), std::vector<double>(data_.begin() + begin * stride,
                                                  data_.begin() + end * stride));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> rows) const {
  Shape s = shape_;
  s[0] = rows.size();
  Tensor out(std::move(s));
  const auto stride = row_stride();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= shape_[0]) throw ShapeError("row index out of range in gather_rows");
    std::copy_n(data_.begin() + rows[r] * stride, stride, out.data_.begin() + r * stride);
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1))
    throw ShapeError("concat_rows: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  Shape s = a.shape();
  s[0] += b.dim(0);
  std::vector<double> d(a.vec());
  d.insert(d.end(), b.vec().begin(), b.vec().end());
  return Tensor(std::move(s), std::move(d));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_abs_diff: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace dafc
