#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vpei/matrix.hpp"

namespace vpei {

/// Coefficients (c, b, A) of an s-stage Runge-Kutta method.
struct ButcherTableau {
  std::vector<double> c;
  std::vector<double> b;
  Matrix a;

  std::size_t stages() const noexcept { return b.size(); }

  /// Throws DimensionError / DomainError if sizes disagree or entries are
  /// not finite.
  void validate() const;

  bool equal_nodes() const;
  bool weights_nonzero() const;
};

ButcherTableau gauss_legendre(int s);

/// c = (1/2, 1/2), b = (1/2, 1/2), A = 1/4 everywhere. Symplectic, with
/// coinciding nodes.
ButcherTableau equal_node_two_stage();

ButcherTableau explicit_euler();

/// ||diag(b) A + A^T diag(b) - b b^T||_F.
double symplecticity_residual(const ButcherTableau& t);

/// Residual <= 1e-14 (1 + ||b||^2).
bool is_symplectic(const ButcherTableau& t);

/// Symplectic and every weight nonzero; the gate for the volume results on
/// exponential integrators built from t.
bool passes_ssei_gate(const ButcherTableau& t);

/// True iff all rooted-tree order conditions up to order p (p <= 4) hold to
/// 1e-13, with c taken as the row sums of A. For p >= 2 the stored nodes
/// must also equal those row sums. Throws UnsupportedError for p outside
/// [1, 4].
bool order_check(const ButcherTableau& t, int p);

/// Matrix-valued coefficients of the exponential integrator attached to a
/// tableau: abar[i][j] = a_ij e^{(c_i-c_j)hK}, bbar[i] = b_i e^{(1-c_i)hK}.
struct ExpCoefficients {
  std::size_t s = 0;
  std::vector<std::vector<Matrix>> abar;
  std::vector<Matrix> bbar;
  std::vector<Matrix> node_exponentials;  ///< e^{c_i hK}
  Matrix step_exponential;                ///< e^{hK}
};

ExpCoefficients build_exp_coefficients(const ButcherTableau& t, double h, const Matrix& k);

/// Evaluate an exact real expression: decimals, + - * /, parentheses,
/// unary minus, and sqrt(...). "1/4-sqrt(3)/6" evaluates in full double
/// precision. Throws ParseError on malformed input.
double parse_real(std::string_view text);

/// Plain-text tableau format:
///
///     s
///     c_1 | a_11 ... a_1s
///     ...
///     c_s | a_s1 ... a_ss
///     b_1 ... b_s
///
/// Blank lines and lines starting with '#' are skipped. Entries are parse_real
/// expressions written without internal whitespace.
ButcherTableau parse_tableau(std::string_view text);
ButcherTableau load_tableau(const std::filesystem::path& path);
std::string format_tableau(const ButcherTableau& t);

}  // namespace vpei
