#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "vpei/matrix.hpp"

namespace vpei {

/// LU factorisation with partial pivoting, PA = LU packed into one matrix.
struct LuFactors {
  Matrix lu;
  std::vector<std::size_t> perm;
  int sign = 1;
  /// Column of the first pivot judged numerically zero, if any.
  std::optional<std::size_t> zero_pivot;
};

LuFactors lu_factor(const Matrix& a);

/// Determinant by pivoted elimination. Singular input yields 0.
double det(const Matrix& a);

/// Solve A X = B. Throws SingularityError carrying the pivot column.
Matrix solve(const Matrix& a, const Matrix& b);
Vector solve(const Matrix& a, std::span<const double> b);
Matrix inverse(const Matrix& a);

/// Matrix exponential by scaling and squaring with diagonal Pade
/// approximants of degree 3..13.
///
/// Throws DimensionError for non-square input and RangeError when the
/// input is non-finite, needs more than 64 squarings, or overflows.
Matrix expm(const Matrix& m);

/// phi_k(M) = int_0^1 e^{(1-s)M} s^{k-1}/(k-1)! ds, with phi_0 = expm.
/// Evaluated through the exponential of a block upper-triangular
/// augmented matrix, so large arguments cause no cancellation.
Matrix phi(int k, const Matrix& m);

/// Trigonometric series sum_l (-1)^l V^l / (2l+i)! for i in {0, 1},
/// i.e. cos(sqrt V) and sin(sqrt V)/sqrt V. Large arguments are scaled by
/// powers of four and restored with the double-angle formulas.
Matrix phi_trig(int i, const Matrix& v);

/// The four n x n blocks of exp(hK) for K = [[0, I], [-Omega, N]].
struct ExpBlocks {
  Matrix e11, e12, e21, e22;
};

/// Blocks of exp(hK) from the flat 2n x 2n exponential; no precondition on
/// N and Omega.
ExpBlocks partition_exp_blocks(double h, const Matrix& n, const Matrix& omega);

/// ||N Omega - Omega N||_F <= 1e-12 (1 + ||N||_F ||Omega||_F).
bool commutes(const Matrix& n, const Matrix& omega);

/// Same as partition_exp_blocks but requires N and Omega to commute, the
/// setting in which the blocks have closed forms. Throws PreconditionError
/// otherwise; callers fall back to partition_exp_blocks.
ExpBlocks second_order_exp_blocks(double h, const Matrix& n, const Matrix& omega);

/// Grid of equally sized square blocks.
class BlockMatrix {
 public:
  BlockMatrix(std::size_t block_rows, std::size_t block_cols, std::size_t block_dim);

  static BlockMatrix from_flat(const Matrix& flat, std::size_t block_dim);

  std::size_t block_rows() const noexcept { return block_rows_; }
  std::size_t block_cols() const noexcept { return block_cols_; }
  std::size_t block_dim() const noexcept { return block_dim_; }

  Matrix& operator()(std::size_t i, std::size_t j) { return blocks_[i * block_cols_ + j]; }
  const Matrix& operator()(std::size_t i, std::size_t j) const {
    return blocks_[i * block_cols_ + j];
  }

  /// Replace block (i, j); it must be block_dim x block_dim.
  void set(std::size_t i, std::size_t j, Matrix b);

  Matrix flatten() const;

 private:
  std::size_t block_rows_;
  std::size_t block_cols_;
  std::size_t block_dim_;
  std::vector<Matrix> blocks_;
};

/// Solve S X = rhs where rhs stacks s blocks of n rows (one column per
/// right-hand side).
Matrix solve_block(const BlockMatrix& s, const Matrix& rhs);

}  // namespace vpei
