#include "dkts/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "dkts/errors.hpp"

namespace dkts::num {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw DimensionError("tensor of shape " + shape_str(shape_) + " given " + std::to_string(values_.size()) +
                         " values");
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return matrix(r, c, std::move(v));
}

double Tensor::item() const {
  if (values_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
  return values_[0];
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

void SparseMatrix::add(std::size_t row, std::size_t col, double weight) {
  if (row >= rows_ || col >= cols_) {
    throw IndexError("sparse entry (" + std::to_string(row) + "," + std::to_string(col) + ") outside " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  entries_.push_back({row, col, weight});
}

void SparseMatrix::add_symmetric(std::size_t i, std::size_t j, double weight) {
  add(i, j, weight);
  if (i != j) add(j, i, weight);
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
  if (x.size() != cols_) {
    throw DimensionError("sparse multiply: matrix has " + std::to_string(cols_) + " cols, vector has " +
                         std::to_string(x.size()) + " entries");
  }
  std::vector<double> y(rows_, 0.0);
  for (const auto& e : entries_) y[e.row] += e.weight * x[e.col];
  return y;
}

Tensor SparseMatrix::to_dense() const {
  Tensor d(Shape{rows_, cols_});
  for (const auto& e : entries_) d.at(e.row, e.col) += e.weight;
  return d;
}

bool SparseMatrix::check_symmetric(double tol) const {
  if (rows_ != cols_) return false;
  std::map<std::pair<std::size_t, std::size_t>, double> sum;
  for (const auto& e : entries_) sum[{e.row, e.col}] += e.weight;
  for (const auto& [key, w] : sum) {
    auto it = sum.find({key.second, key.first});
    if (it == sum.end() || std::abs(it->second - w) > tol) return false;
  }
  return true;
}

}  // namespace dkts::num
