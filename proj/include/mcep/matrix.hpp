#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace mcep {

// Dense row-major matrix of doubles. Transition matrices here are tiny
// (d0 x d0 with d0 around 5), so simplicity beats cleverness.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<double> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int r) const { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline double row_sum(std::span<const double> row) {
  double s = 0.0;
  for (double x : row) s += x;
  return s;
}

inline bool is_prob_vector(std::span<const double> row, double tol = 1e-10) {
  for (double x : row) {
    if (!(x >= 0.0) || !std::isfinite(x)) return false;
  }
  return std::fabs(row_sum(row) - 1.0) <= tol;
}

inline bool is_row_stochastic(const Matrix& m, double tol = 1e-10) {
  for (int r = 0; r < m.rows(); ++r) {
    if (!is_prob_vector(m.row(r), tol)) return false;
  }
  return true;
}

// Integer count table with the same layout; 64-bit to keep sums exact.
class CountMatrix {
 public:
  CountMatrix() = default;
  CountMatrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::int64_t& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  std::int64_t operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  std::span<const std::int64_t> row(int r) const { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  void zero() { data_.assign(data_.size(), 0); }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto x : data_) t += x;
    return t;
  }
  bool operator==(const CountMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::int64_t> data_;
};

}  // namespace mcep
