#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "talkgen/core/errors.hpp"

namespace talkgen {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Dense n-d array with value semantics. Storage is a flat Eigen array in
// row-major order (last dimension fastest).
template <typename Scalar>
class Tensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap = Eigen::Map<
      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_ = Storage::Zero(shape_numel(shape_));
  }
  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_contract(data_.size() == shape_numel(shape_), "tensor: data/shape mismatch");
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }
  static Tensor scalar(Scalar v) { return full({1}, v); }
  static Tensor from(Shape shape, std::initializer_list<Scalar> vals) {
    Tensor t(std::move(shape));
    check_contract((Index)vals.size() == t.size(), "tensor: initializer size mismatch");
    Index i = 0;
    for (Scalar v : vals) t.data_[i++] = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return (Index)shape_.size(); }
  Index dim(Index i) const { return shape_[(size_t)i]; }
  Index size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index i0) { return data_[i0]; }
  Scalar& operator()(Index i0, Index i1) { return data_[i0 * shape_[1] + i1]; }
  Scalar& operator()(Index i0, Index i1, Index i2) {
    return data_[(i0 * shape_[1] + i1) * shape_[2] + i2];
  }
  Scalar& operator()(Index i0, Index i1, Index i2, Index i3) {
    return data_[((i0 * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3];
  }
  Scalar operator()(Index i0) const { return data_[i0]; }
  Scalar operator()(Index i0, Index i1) const { return data_[i0 * shape_[1] + i1]; }
  Scalar operator()(Index i0, Index i1, Index i2) const {
    return data_[(i0 * shape_[1] + i1) * shape_[2] + i2];
  }
  Scalar operator()(Index i0, Index i1, Index i2, Index i3) const {
    return data_[((i0 * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3];
  }

  // Contiguous reinterpretation; element count must be preserved.
  Tensor reshaped(Shape s) const {
    check_contract(shape_numel(s) == size(), "reshape: element count mismatch");
    return Tensor(std::move(s), data_);
  }

  MatrixMap matrix(Index rows, Index cols) {
    check_contract(rows * cols == size(), "matrix map: size mismatch");
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_contract(rows * cols == size(), "matrix map: size mismatch");
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  bool all_finite() const { return data_.isFinite().all(); }
  Scalar min() const { return data_.minCoeff(); }
  Scalar max() const { return data_.maxCoeff(); }
  Scalar sum() const { return data_.sum(); }
  Scalar mean() const { return size() ? data_.mean() : Scalar(0); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    out.array() = data_.template cast<T>();
    return out;
  }

 private:
  Shape shape_;
  Storage data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace talkgen
