#include "mrb/tensor.hpp"

#include <cstring>
#include <sstream>

namespace mrb {

Eigen::Index shape_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw ShapeError("empty shape");
  Eigen::Index n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '{';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << '}';
  return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(Array::Zero(shape_numel(shape_))) {}

Tensor::Tensor(std::vector<int> shape, Array data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Eigen::Index n = shape_numel(shape);
  return Tensor(std::move(shape), Array::Constant(n, v));
}

double Tensor::value() const {
  if (!is_scalar()) throw ShapeError("tensor " + shape_str(shape_) + " is not scalar");
  return data_[0];
}

void Tensor::require_finite(const std::string& where) const {
  if (!all_finite()) throw NumericError("non-finite value in " + where);
}

bool Tensor::bit_equal(const Tensor& o) const {
  if (shape_ != o.shape_) return false;
  return std::memcmp(data_.data(), o.data_.data(),
                     sizeof(double) * static_cast<size_t>(data_.size())) == 0;
}

int Tensor::dim3(size_t i) const {
  if (shape_.size() != 3) {
    throw ShapeError("expected {H,W,C} tensor, got " + shape_str(shape_));
  }
  return shape_[i];
}

}  // namespace mrb
