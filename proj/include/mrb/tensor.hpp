#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "mrb/errors.hpp"

namespace mrb {

// Flat row-major payload; all math runs through Eigen array expressions.
using Array = Eigen::ArrayXd;

Eigen::Index shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Dense row-major tensor of doubles. Conventions: images are {H,W,C},
// conv kernels {kh,kw,cin,cout}, vectors {n}, scalars {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled
  Tensor(std::vector<int> shape, Array data);

  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v) { return full({1}, v); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

  const std::vector<int>& shape() const { return shape_; }
  Eigen::Index numel() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }
  int dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }

  Array& array() { return data_; }
  const Array& array() const { return data_; }

  double& operator[](Eigen::Index i) { return data_[i]; }
  double operator[](Eigen::Index i) const { return data_[i]; }

  // {H,W,C} accessors.
  int height() const { return dim3(0); }
  int width() const { return dim3(1); }
  int channels() const { return dim3(2); }
  double& at(int h, int w, int c) {
    return data_[(static_cast<Eigen::Index>(h) * shape_[1] + w) * shape_[2] + c];
  }
  double at(int h, int w, int c) const {
    return data_[(static_cast<Eigen::Index>(h) * shape_[1] + w) * shape_[2] + c];
  }

  double value() const;  // scalar payload

  bool all_finite() const { return data_.isFinite().all(); }
  void require_finite(const std::string& where) const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool bit_equal(const Tensor& o) const;

 private:
  int dim3(size_t i) const;

  std::vector<int> shape_;
  Array data_;
};

// Images are tensors with shape {H,W,C} and values nominally in [0, 1].
using Image = Tensor;

}  // namespace mrb
