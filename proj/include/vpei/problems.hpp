#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vpei/problem.hpp"

namespace vpei {

struct EllipticValues {
  double sn = 0.0;
  double cn = 1.0;
  double dn = 1.0;
};

/// Jacobi elliptic functions sn, cn, dn at argument u for modulus `modulus`
/// (the parameter is modulus^2), by the AGM / descending Landen recursion.
/// With this convention sn'' = -(1 + modulus^2) sn + 2 modulus^2 sn^3.
/// Throws DomainError unless 0 <= modulus < 1.
EllipticValues jacobi_elliptic(double u, double modulus);

/// A benchmark problem with its parameters, initial state and study defaults.
///
/// `field` is always the first-order form y' = K y + g(y). Second-order
/// problems also carry `second_order` (and `field` is its embedding);
/// problems written as (q, p)' = (p, -Omega q + gtilde(q)) carry `partitioned`.
struct BenchmarkSpec {
  std::string id;
  std::vector<std::pair<std::string, double>> params;
  VectorFieldProblem field;
  std::optional<SecondOrderProblem> second_order;
  std::optional<PartitionedProblem> partitioned;
  Vector y0;
  std::vector<double> default_h;
  std::vector<double> default_t_end;

  double param(const std::string& name) const;
  bool has_exact() const { return static_cast<bool>(field.exact); }
};

/// q'' = -(omega^2 + k^2) q + 2 k^2 q^3 with k = 0.07, omega = 20, y0 = (0, omega).
/// Exact solution q = sn(omega t; k/omega), q' = omega cn dn.
BenchmarkSpec duffing();

/// Rotation K with omega = 100 plus g = (sin(x - z), 0, sin(x - z)).
BenchmarkSpec divergence_free_3d();

/// q'' + 2 nu q' + A q = -B q^2 - eps q^3 with nu = 0.01, A = 200, B = -0.5,
/// eps = 1, (q, q')(0) = (1, 15.199). Damped, so det e^{hK} = e^{-2 nu h}.
BenchmarkSpec helmholtz_duffing();

/// x'' = x' x B + F(x), F = -grad U, U = 1 / (100 sqrt(x1^2 + x2^2)),
/// B = (0, 0, b). The default b = 10 is the benchmark; b = 0 gives the
/// pure-force problem in partitioned form with Omega = 0.
BenchmarkSpec charged_particle(double b = 10.0);

/// q'' = -q^3, (q, p)(0) = (1, 0).
BenchmarkSpec cubic_oscillator();

/// Block-triangular field f = (u(y1), v(y1, y2)) on R^{m + n}: u = J_m^{-1}
/// (M y1 + grad V(y1)) and v = L y1 + J_n^{-1}(M22 y2 + grad_{y2} W(y1, y2)),
/// with random symmetric M, M22 and coupling L drawn from `seed`. m must be
/// even (possibly 0), n even and positive.
BenchmarkSpec synthetic_f_infinity(std::size_t m = 2, std::size_t n = 2, std::uint64_t seed = 0);

/// y' = K y + d with K = J^{-1} M (trace zero) and constant d.
BenchmarkSpec synthetic_affine(std::size_t n = 4, std::uint64_t seed = 0);

/// f(y) = J grad H(y), H = (y1^4 + y2^2) / 2, so f'(y) = J S(y) with S
/// symmetric; certified with split 0 and P = J^{-1}.
BenchmarkSpec js_field();

/// Registry names: duffing, divfree3d, helmholtz, charged-particle,
/// synthetic-finf, synthetic-affine, js-field, cubic, charged-particle-b0.
const std::vector<std::string>& problem_names();
bool is_problem_name(const std::string& name);
/// Throws UnsupportedError for unknown names. `seed` only affects the
/// synthetic problems.
BenchmarkSpec make_problem(const std::string& name, std::uint64_t seed = 0);

struct ReferenceQuality {
  double h_min = 0.0;      ///< smallest step of the study being referenced
  int refine = 32;         ///< h_ref = h_min / refine
  double agreement = 1e-10;
  int max_halvings = 4;    ///< extra refinements tried after the first pair
};

/// Exact solution when available, else a self-converged run of the
/// two-stage Gauss exponential integrator. Starting at h_ref = h_min / refine,
/// the step is halved until two successive runs agree to `agreement`
/// relative; after `max_halvings` further halvings without agreement,
/// ReferenceUnreliableError is thrown.
Vector reference_solution(const BenchmarkSpec& b, double t_end, const ReferenceQuality& q);

/// Relative global error ||y - ref||_2 / ||ref||_2.
double relative_global_error(const Vector& y, const Vector& ref);

}  // namespace vpei
