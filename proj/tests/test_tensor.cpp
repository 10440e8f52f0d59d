#include <doctest.h>

#include "mrb/tensor.hpp"

using namespace mrb;

TEST_CASE("tensor shape and payload agree") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.array().sum() == 0.0);
  CHECK_THROWS_AS(Tensor({2, 3}, Array::Zero(5)), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor(std::vector<int>{}), ShapeError);
}

TEST_CASE("scalar accessor guards rank") {
  CHECK(Tensor::scalar(2.5).value() == 2.5);
  CHECK_THROWS_AS(Tensor({2}).value(), ShapeError);
}

TEST_CASE("finiteness is an error state, not a value") {
  Tensor t({2});
  t[0] = 1.0;
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.require_finite("unit test"), NumericError);
}

TEST_CASE("bit_equal distinguishes shapes and payloads") {
  Tensor a = Tensor::full({2, 2}, 0.5);
  Tensor b = Tensor::full({2, 2}, 0.5);
  CHECK(a.bit_equal(b));
  b[3] = std::nextafter(0.5, 1.0);
  CHECK_FALSE(a.bit_equal(b));
  CHECK_FALSE(a.bit_equal(Tensor::full({4}, 0.5)));
}

TEST_CASE("hwc accessors address row-major layout") {
  Tensor t({2, 3, 2});
  t.at(1, 2, 1) = 7.0;
  CHECK(t[(1 * 3 + 2) * 2 + 1] == 7.0);
  CHECK(t.height() == 2);
  CHECK(t.width() == 3);
  CHECK(t.channels() == 2);
  CHECK_THROWS_AS(Tensor({2, 2}).height(), ShapeError);
}
