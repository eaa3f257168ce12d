#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace vpei {

using Vector = std::vector<double>;

/// Dense real matrix with row-major storage.
///
/// A default-constructed Matrix is empty (0x0) and only useful as a
/// placeholder; every operation in the library expects rows, cols >= 1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix zeros(std::size_t rows, std::size_t cols);
  static Matrix diagonal(std::span<const double> d);
  static Matrix column(std::span<const double> v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_ && rows_ > 0; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;
  void set_block(std::size_t r0, std::size_t c0, const Matrix& b);

  Vector col(std::size_t j) const;
  void set_col(std::size_t j, std::span<const double> v);

  Matrix transpose() const;
  double trace() const;
  bool all_finite() const;

  double norm_frobenius() const;
  /// Maximum absolute column sum.
  double norm_one() const;
  double max_abs() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator-(Matrix a);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, std::span<const double> x);

/// Block-diagonal matrix assembled from square blocks.
Matrix block_diagonal(std::span<const Matrix> blocks);

/// Stack equally-sized column vectors on top of each other.
Vector stack(std::span<const Vector> parts);
/// Inverse of stack(): split v into `parts` pieces of equal length.
std::vector<Vector> unstack(std::span<const double> v, std::size_t parts);

// Small vector helpers; sizes must agree.
Vector operator+(Vector a, const Vector& b);
Vector operator-(Vector a, const Vector& b);
Vector operator*(double s, Vector a);
void axpy(double a, std::span<const double> x, std::span<double> y);
double norm_inf(std::span<const double> v);
double norm2(std::span<const double> v);
bool all_finite(std::span<const double> v);

}  // namespace vpei
