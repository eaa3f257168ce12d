#include "vpei/matfun.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "vpei/errors.hpp"

namespace vpei {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void require_square(const Matrix& m, const char* what) {
  if (!m.is_square()) throw DimensionError(std::string(what) + ": matrix must be square");
}

// Pade coefficients b_0..b_m for the [m/m] approximant of exp, and the
// 1-norm bounds below which each degree reaches unit roundoff.
constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
constexpr std::array<double, 8> kPade7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                          25200.0,    1512.0,    56.0,      1.0};
constexpr std::array<double, 10> kPade9 = {17643225600.0, 8821612800.0, 2075673600.0,
                                           302702400.0,   30270240.0,   2162160.0,
                                           110880.0,      3960.0,       90.0,
                                           1.0};
constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
    1323241920.0,        40840800.0,          960960.0,           16380.0,
    182.0,               1.0};
constexpr double kTheta3 = 1.495585217958292e-2;
constexpr double kTheta5 = 2.539398330063230e-1;
constexpr double kTheta7 = 9.504178996162932e-1;
constexpr double kTheta9 = 2.097847961257068e0;
constexpr double kTheta13 = 5.371920351148152e0;
constexpr int kMaxSquarings = 64;

// Evaluates the [m/m] Pade approximant (V - U)^{-1} (V + U) where U holds the
// odd and V the even part of the numerator polynomial.
template <std::size_t N>
Matrix pade(const Matrix& a, const std::array<double, N>& b) {
  const std::size_t n = a.rows();
  const Matrix id = Matrix::identity(n);
  const Matrix a2 = a * a;
  Matrix u_inner = b[1] * id;
  Matrix v = b[0] * id;
  Matrix power = id;
  for (std::size_t k = 2; k + 1 < N; k += 2) {
    power = power * a2;
    u_inner += b[k + 1] * power;
    v += b[k] * power;
  }
  const Matrix u = a * u_inner;
  return solve(v - u, v + u);
}

Matrix pade13(const Matrix& a) {
  const auto& b = kPade13;
  const std::size_t n = a.rows();
  const Matrix id = Matrix::identity(n);
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix u_hi = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
  const Matrix u = a * (u_hi + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
                   b[2] * a2 + b[0] * id;
  return solve(v - u, v + u);
}

}  // namespace

LuFactors lu_factor(const Matrix& a) {
  require_square(a, "lu_factor");
  const std::size_t n = a.rows();
  LuFactors f{a, std::vector<std::size_t>(n), 1, std::nullopt};
  for (std::size_t i = 0; i < n; ++i) f.perm[i] = i;
  Matrix& lu = f.lu;
  const double tiny = static_cast<double>(n) * kEps * a.max_abs();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(lu(i, k)) > best) {
        best = std::abs(lu(i, k));
        p = i;
      }
    }
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(p, j));
      std::swap(f.perm[k], f.perm[p]);
      f.sign = -f.sign;
    }
    if (best <= tiny || best == 0.0) {
      if (!f.zero_pivot) f.zero_pivot = k;
      if (best == 0.0) continue;
    }
    const double piv = lu(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double l = lu(i, k) / piv;
      lu(i, k) = l;
      if (l == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= l * lu(k, j);
    }
  }
  return f;
}

double det(const Matrix& a) {
  const LuFactors f = lu_factor(a);
  double d = f.sign;
  for (std::size_t i = 0; i < a.rows(); ++i) d *= f.lu(i, i);
  return d;
}

Matrix solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("solve: right-hand side row mismatch");
  const LuFactors f = lu_factor(a);
  if (f.zero_pivot) {
    throw SingularityError("solve: matrix is singular at pivot " + std::to_string(*f.zero_pivot),
                           f.zero_pivot);
  }
  const std::size_t n = a.rows();
  Matrix x(n, b.cols());
  for (std::size_t c = 0; c < b.cols(); ++c) {
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = b(f.perm[i], c);
      for (std::size_t j = 0; j < i; ++j) s -= f.lu(i, j) * y[j];
      y[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = y[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= f.lu(i, j) * y[j];
      y[i] = s / f.lu(i, i);
    }
    x.set_col(c, y);
  }
  return x;
}

Vector solve(const Matrix& a, std::span<const double> b) {
  return solve(a, Matrix::column(b)).col(0);
}

Matrix inverse(const Matrix& a) { return solve(a, Matrix::identity(a.rows())); }

Matrix expm(const Matrix& m) {
  require_square(m, "expm");
  if (!m.all_finite()) throw RangeError("expm: non-finite input");
  const double norm = m.norm_one();
  if (norm <= kTheta3) return pade(m, kPade3);
  if (norm <= kTheta5) return pade(m, kPade5);
  if (norm <= kTheta7) return pade(m, kPade7);
  if (norm <= kTheta9) return pade(m, kPade9);

  int s = 0;
  if (norm > kTheta13) s = static_cast<int>(std::ceil(std::log2(norm / kTheta13)));
  if (s > kMaxSquarings) throw RangeError("expm: norm exceeds the scaling budget");
  Matrix r = pade13(m * std::ldexp(1.0, -s));
  for (int i = 0; i < s; ++i) r = r * r;
  if (!r.all_finite()) throw RangeError("expm: result overflows");
  return r;
}

Matrix phi(int k, const Matrix& m) {
  require_square(m, "phi");
  if (k < 0) throw DomainError("phi: index must be non-negative");
  if (k == 0) return expm(m);
  const std::size_t n = m.rows();
  const std::size_t kk = static_cast<std::size_t>(k);
  Matrix aug((kk + 1) * n, (kk + 1) * n);
  aug.set_block(0, 0, m);
  const Matrix id = Matrix::identity(n);
  for (std::size_t j = 0; j < kk; ++j) aug.set_block(j * n, (j + 1) * n, id);
  return expm(aug).block(0, kk * n, n, n);
}

Matrix phi_trig(int i, const Matrix& v) {
  require_square(v, "phi_trig");
  if (i != 0 && i != 1) throw DomainError("phi_trig: index must be 0 or 1");
  if (!v.all_finite()) throw RangeError("phi_trig: non-finite input");
  const std::size_t n = v.rows();
  const Matrix id = Matrix::identity(n);

  int s = 0;
  double norm = v.norm_one();
  while (norm > 1.0) {
    norm /= 4.0;
    ++s;
    if (s > kMaxSquarings) throw RangeError("phi_trig: norm exceeds the scaling budget");
  }
  const Matrix w = v * std::ldexp(1.0, -2 * s);

  // Both series at the scaled argument; ||w|| <= 1 so terms fall like 1/(2l)!.
  Matrix c = id;
  Matrix sc = id;
  Matrix power = id;
  double fact_even = 1.0;  // (2l)!
  double fact_odd = 1.0;   // (2l+1)!
  for (int l = 1; l <= 30; ++l) {
    power = power * w;
    fact_even *= (2.0 * l - 1.0) * (2.0 * l);
    fact_odd *= (2.0 * l) * (2.0 * l + 1.0);
    const double sign = (l % 2 == 0) ? 1.0 : -1.0;
    const Matrix tc = (sign / fact_even) * power;
    c += tc;
    sc += (sign / fact_odd) * power;
    if (tc.max_abs() <= kEps * 1e-2 * c.max_abs()) break;
  }
  // cos(2x) = 2 cos^2 x - 1, sin(2x)/(2x) = cos x * sin(x)/x.
  for (int k = 0; k < s; ++k) {
    sc = c * sc;
    c = 2.0 * (c * c) - id;
  }
  return i == 0 ? c : sc;
}

ExpBlocks partition_exp_blocks(double h, const Matrix& n, const Matrix& omega) {
  require_square(n, "partition_exp_blocks");
  require_square(omega, "partition_exp_blocks");
  if (n.rows() != omega.rows()) throw DimensionError("N and Omega dimensions differ");
  const std::size_t d = n.rows();
  Matrix k(2 * d, 2 * d);
  k.set_block(0, d, Matrix::identity(d));
  k.set_block(d, 0, -omega);
  k.set_block(d, d, n);
  const Matrix e = expm(h * k);
  return {e.block(0, 0, d, d), e.block(0, d, d, d), e.block(d, 0, d, d), e.block(d, d, d, d)};
}

bool commutes(const Matrix& n, const Matrix& omega) {
  const double defect = (n * omega - omega * n).norm_frobenius();
  return defect <= 1e-12 * (1.0 + n.norm_frobenius() * omega.norm_frobenius());
}

ExpBlocks second_order_exp_blocks(double h, const Matrix& n, const Matrix& omega) {
  require_square(n, "second_order_exp_blocks");
  require_square(omega, "second_order_exp_blocks");
  if (n.rows() != omega.rows()) throw DimensionError("N and Omega dimensions differ");
  if (!commutes(n, omega)) {
    throw PreconditionError("second_order_exp_blocks: N and Omega do not commute");
  }
  return partition_exp_blocks(h, n, omega);
}

BlockMatrix::BlockMatrix(std::size_t block_rows, std::size_t block_cols, std::size_t block_dim)
    : block_rows_(block_rows),
      block_cols_(block_cols),
      block_dim_(block_dim),
      blocks_(block_rows * block_cols, Matrix(block_dim, block_dim)) {}

BlockMatrix BlockMatrix::from_flat(const Matrix& flat, std::size_t block_dim) {
  if (block_dim == 0 || flat.rows() % block_dim != 0 || flat.cols() % block_dim != 0) {
    throw DimensionError("flat matrix is not a whole number of blocks");
  }
  BlockMatrix b(flat.rows() / block_dim, flat.cols() / block_dim, block_dim);
  for (std::size_t i = 0; i < b.block_rows_; ++i)
    for (std::size_t j = 0; j < b.block_cols_; ++j)
      b(i, j) = flat.block(i * block_dim, j * block_dim, block_dim, block_dim);
  return b;
}

void BlockMatrix::set(std::size_t i, std::size_t j, Matrix b) {
  if (b.rows() != block_dim_ || b.cols() != block_dim_) throw DimensionError("block size mismatch");
  (*this)(i, j) = std::move(b);
}

Matrix BlockMatrix::flatten() const {
  Matrix m(block_rows_ * block_dim_, block_cols_ * block_dim_);
  for (std::size_t i = 0; i < block_rows_; ++i)
    for (std::size_t j = 0; j < block_cols_; ++j)
      m.set_block(i * block_dim_, j * block_dim_, (*this)(i, j));
  return m;
}

Matrix solve_block(const BlockMatrix& s, const Matrix& rhs) {
  if (s.block_rows() != s.block_cols()) throw DimensionError("solve_block: S must be square");
  if (rhs.rows() != s.block_rows() * s.block_dim()) {
    throw DimensionError("solve_block: rhs length must be s*n per column");
  }
  return solve(s.flatten(), rhs);
}

}  // namespace vpei
