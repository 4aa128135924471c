#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dastack {

/// Dense row-major matrix of doubles; one row per sample everywhere in this
/// library. Entries are validated to be finite when constructed from data.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }

  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double c);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double c);
Matrix operator*(double c, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix gather_rows(const Matrix& a, std::span<const std::size_t> indices);
Matrix hcat(std::span<const Matrix> blocks);

/// dst += c * src (shapes must match).
void add_scaled(Matrix& dst, const Matrix& src, double c);

double frobenius_norm(const Matrix& a);
double sq_dist(std::span<const double> a, std::span<const double> b);
bool all_finite(const Matrix& a);
bool all_finite(std::span<const double> v);

}  // namespace dastack
