#include <doctest.h>

#include <stdexcept>

#include "clab/tensor.hpp"

using clab::Tensor;

TEST_CASE("construction validates shape against data length") {
  CHECK_NOTHROW(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0}, {}), std::invalid_argument);
}

TEST_CASE("factories") {
  Tensor z = Tensor::zeros({2, 2});
  for (double v : z.data) CHECK(v == 0.0);
  CHECK(Tensor::full({3}, 7.5).data[1] == 7.5);
  Tensor s = Tensor::scalar(4.0);
  CHECK(s.is_scalar());
  CHECK(s.scalar_value() == 4.0);
  Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(m.at(1, 0) == 3.0);
  CHECK(Tensor::vector({5, 6}).shape == std::vector<std::size_t>{2});
}

TEST_CASE("row-major indexing") {
  Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.at(0, 2) == 3.0);
  CHECK(m.at(1, 1) == 5.0);
  m.at(1, 1) = 9.0;
  CHECK(m.data[4] == 9.0);
}

TEST_CASE("rank helpers reject misuse") {
  Tensor v = Tensor::vector({1, 2, 3});
  CHECK_THROWS_AS(v.rows(), std::logic_error);
  CHECK_THROWS_AS(v.scalar_value(), std::logic_error);
  CHECK(v.rank() == 1);
  CHECK(v.numel() == 3);
}

TEST_CASE("shape utilities") {
  CHECK(clab::shape_numel({4, 5}) == 20);
  CHECK(clab::shape_str({2, 3}) == "[2,3]");
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  Tensor c = Tensor::zeros({3, 2});
  CHECK(a.same_shape(b));
  CHECK_FALSE(a.same_shape(c));
}
