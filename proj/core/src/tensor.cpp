#include "clab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace clab {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("Tensor: zero dimension in " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " elements");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::vector<double> d(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  std::vector<double> d(shape_numel(shape), v);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

double Tensor::scalar_value() const {
  if (!is_scalar()) throw std::logic_error("Tensor: scalar_value on shape " + shape_str(shape));
  return data[0];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::logic_error("Tensor: rows() on rank-" + std::to_string(rank()));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::logic_error("Tensor: cols() on rank-" + std::to_string(rank()));
  return shape[1];
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: rank-2 tensors required");
  const std::size_t m = trans_a ? a.shape[1] : a.shape[0];
  const std::size_t k = trans_a ? a.shape[0] : a.shape[1];
  const std::size_t k2 = trans_b ? b.shape[1] : b.shape[0];
  const std::size_t n = trans_b ? b.shape[0] : b.shape[1];
  if (k != k2)
    throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                shape_str(a.shape) + (trans_a ? "^T" : "") +
                                " x " + shape_str(b.shape) +
                                (trans_b ? "^T" : ""));
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a.at(p, i) : a.at(i, p);
        const double bv = trans_b ? b.at(j, p) : b.at(p, j);
        acc += av * bv;
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("softmax_rows: rank-2 tensor required");
  Tensor out = x;
  const std::size_t rows = x.shape[0];
  const std::size_t cols = x.shape[1];
  for (std::size_t i = 0; i < rows; ++i) {
    double m = x.at(i, 0);
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = std::exp(x.at(i, j) - m);
      out.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) /= z;
  }
  return out;
}

}  // namespace clab
