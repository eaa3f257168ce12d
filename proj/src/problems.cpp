#include "vpei/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "vpei/errors.hpp"
#include "vpei/integrators.hpp"
#include "vpei/tableau.hpp"

namespace vpei {

EllipticValues jacobi_elliptic(double u, double modulus) {
  if (!(modulus >= 0.0 && modulus < 1.0)) throw DomainError("jacobi_elliptic: modulus must lie in [0, 1)");
  if (!std::isfinite(u)) throw DomainError("jacobi_elliptic: argument must be finite");
  const double m = modulus * modulus;
  if (m == 0.0) return {std::sin(u), std::cos(u), 1.0};

  // Arithmetic-geometric mean, keeping c_n / a_n for the way back down.
  constexpr int kMaxLevels = 32;
  double a = 1.0;
  double b = std::sqrt(1.0 - m);
  double ratio[kMaxLevels + 1];
  int levels = 0;
  for (; levels < kMaxLevels; ++levels) {
    const double c = 0.5 * (a - b);
    if (std::abs(c) <= 1e-17 * a) break;
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
    ratio[levels + 1] = c / a;
  }
  double phi = std::ldexp(a * u, levels);
  for (int n = levels; n >= 1; --n) phi = 0.5 * (phi + std::asin(ratio[n] * std::sin(phi)));

  const double sn = std::sin(phi);
  return {sn, std::cos(phi), std::sqrt(1.0 - m * sn * sn)};
}

double BenchmarkSpec::param(const std::string& name) const {
  for (const auto& [k, v] : params)
    if (k == name) return v;
  throw UnsupportedError("benchmark " + id + " has no parameter " + name);
}

namespace {

// Construction-time guard on the linear part.
void check_trace(const Matrix& k, double expected, const std::string& id) {
  if (std::abs(k.trace() - expected) > 1e-14 * std::max(1.0, k.max_abs())) {
    throw PreconditionError(id + ": trace of K differs from its design value");
  }
}

Matrix symplectic_j(std::size_t n) {
  const std::size_t h = n / 2;
  Matrix j(n, n);
  for (std::size_t i = 0; i < h; ++i) {
    j(i, h + i) = 1.0;
    j(h + i, i) = -1.0;
  }
  return j;
}

// Certificate for (q, p)' = (p, N p - Omega q - grad V1): P = [[N, -I], [I, 0]].
ClassCertificate second_order_certificate(const Matrix& n) {
  const std::size_t d = n.rows();
  Matrix p(2 * d, 2 * d);
  p.set_block(0, 0, n);
  p.set_block(0, d, -Matrix::identity(d));
  p.set_block(d, 0, Matrix::identity(d));
  return {ClassTag::H, p, std::nullopt, {}};
}

Matrix random_symmetric(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = dist(rng);
  return m;
}

}  // namespace

BenchmarkSpec duffing() {
  constexpr double k = 0.07;
  constexpr double omega = 20.0;
  const double stiffness = omega * omega + k * k;

  BenchmarkSpec b;
  b.id = "duffing";
  b.params = {{"k", k}, {"omega", omega}};
  b.y0 = {0.0, omega};
  b.default_h = {0.5, 0.1, 1.0 / 50.0, 1.0 / 200.0};
  b.default_t_end = {10.0, 100.0, 1000.0};

  auto& f = b.field;
  f.name = b.id;
  f.k = Matrix{{0.0, 1.0}, {-stiffness, 0.0}};
  f.g = [](const Vector& y) { return Vector{0.0, 2.0 * k * k * y[0] * y[0] * y[0]}; };
  f.g_jac = [](const Vector& y) { return Matrix{{0.0, 0.0}, {6.0 * k * k * y[0] * y[0], 0.0}}; };
  f.certificate = ClassCertificate{ClassTag::H, Matrix{{0.0, 1.0}, {-1.0, 0.0}}, std::nullopt, {}};
  f.exact = [](double t) {
    const auto e = jacobi_elliptic(omega * t, k / omega);
    return Vector{e.sn, omega * e.cn * e.dn};
  };
  check_trace(f.k, 0.0, b.id);

  PartitionedProblem p;
  p.name = b.id;
  p.omega = Matrix{{stiffness}};
  p.gtilde = [](const Vector& q) { return Vector{2.0 * k * k * q[0] * q[0] * q[0]}; };
  p.gtilde_jac = [](const Vector& q) { return Matrix{{6.0 * k * k * q[0] * q[0]}}; };
  b.partitioned = std::move(p);
  return b;
}

BenchmarkSpec divergence_free_3d() {
  constexpr double omega = 100.0;
  BenchmarkSpec b;
  b.id = "divfree3d";
  b.params = {{"omega", omega}};
  b.y0 = {0.5, 0.5, 0.5};
  b.default_h = {1.0 / 50.0, 1.0 / 100.0};
  b.default_t_end = {10.0, 100.0};

  auto& f = b.field;
  f.name = b.id;
  f.k = Matrix{{0.0, -omega, 0.0}, {omega, 0.0, -omega}, {0.0, omega, 0.0}};
  f.g = [](const Vector& y) {
    const double s = std::sin(y[0] - y[2]);
    return Vector{s, 0.0, s};
  };
  f.g_jac = [](const Vector& y) {
    const double c = std::cos(y[0] - y[2]);
    return Matrix{{c, 0.0, -c}, {0.0, 0.0, 0.0}, {c, 0.0, -c}};
  };
  f.certificate = ClassCertificate{ClassTag::S, Matrix{{0.0, 0.0, 1.0}, {0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}},
                                   std::nullopt, {}};
  check_trace(f.k, 0.0, b.id);
  return b;
}

BenchmarkSpec helmholtz_duffing() {
  constexpr double nu = 0.01;
  constexpr double a = 200.0;
  constexpr double bq = -0.5;
  constexpr double eps = 1.0;

  BenchmarkSpec b;
  b.id = "helmholtz";
  b.params = {{"nu", nu}, {"A", a}, {"B", bq}, {"epsilon", eps}};
  b.y0 = {1.0, 15.199};
  b.default_h = {0.01, 0.005};
  b.default_t_end = {10.0, 100.0, 1000.0};

  SecondOrderProblem s;
  s.name = b.id;
  s.n = Matrix{{-2.0 * nu}};
  s.omega = Matrix{{a}};
  s.grad_v1 = [](const Vector& q) { return Vector{bq * q[0] * q[0] + eps * q[0] * q[0] * q[0]}; };
  s.grad_v1_jac = [](const Vector& q) { return Matrix{{2.0 * bq * q[0] + 3.0 * eps * q[0] * q[0]}}; };
  b.field = embed(s);
  b.second_order = std::move(s);
  check_trace(b.field.k, -2.0 * nu, b.id);
  return b;
}

BenchmarkSpec charged_particle(double bz) {
  BenchmarkSpec b;
  b.id = bz == 10.0 ? "charged-particle" : (bz == 0.0 ? "charged-particle-b0" : "charged-particle-custom");
  b.params = {{"B", bz}};
  b.y0 = {0.7, 1.0, 0.1, 0.9, 0.5, 0.4};
  b.default_h = {0.1, 0.05, 1.0 / 200.0};
  b.default_t_end = {10.0, 100.0, 1000.0};

  // grad U, with U = 1 / (100 r) in the (x1, x2) plane.
  auto grad_u = [](const Vector& x) {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    if (r2 == 0.0) throw SingularityError("charged particle: potential is singular at r = 0");
    const double r3 = r2 * std::sqrt(r2);
    return Vector{-x[0] / (100.0 * r3), -x[1] / (100.0 * r3), 0.0};
  };
  auto hess_u = [](const Vector& x) {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    if (r2 == 0.0) throw SingularityError("charged particle: potential is singular at r = 0");
    const double r = std::sqrt(r2);
    const double r3 = r2 * r;
    const double r5 = r3 * r2;
    Matrix h(3, 3);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) h(i, j) = -((i == j ? 1.0 / r3 : 0.0) - 3.0 * x[i] * x[j] / r5) / 100.0;
    return h;
  };

  const Matrix n{{0.0, bz, 0.0}, {-bz, 0.0, 0.0}, {0.0, 0.0, 0.0}};
  SecondOrderProblem s;
  s.name = b.id;
  s.n = n;
  s.omega = Matrix::zeros(3, 3);
  s.grad_v1 = grad_u;
  s.grad_v1_jac = hess_u;
  b.field = embed(s);
  b.field.certificate = second_order_certificate(n);
  b.second_order = std::move(s);

  if (bz == 0.0) {
    PartitionedProblem p;
    p.name = b.id;
    p.omega = Matrix::zeros(3, 3);
    p.gtilde = [grad_u](const Vector& x) { return -1.0 * grad_u(x); };
    p.gtilde_jac = [hess_u](const Vector& x) { return -hess_u(x); };
    b.partitioned = std::move(p);
  }
  check_trace(b.field.k, 0.0, b.id);
  return b;
}

BenchmarkSpec cubic_oscillator() {
  BenchmarkSpec b;
  b.id = "cubic";
  b.y0 = {1.0, 0.0};
  b.default_h = {0.05};
  b.default_t_end = {50.0};

  PartitionedProblem p;
  p.name = b.id;
  p.omega = Matrix{{0.0}};
  p.gtilde = [](const Vector& q) { return Vector{-q[0] * q[0] * q[0]}; };
  p.gtilde_jac = [](const Vector& q) { return Matrix{{-3.0 * q[0] * q[0]}}; };
  b.field = embed(p);
  b.field.certificate = second_order_certificate(Matrix{{0.0}});
  b.partitioned = std::move(p);
  check_trace(b.field.k, 0.0, b.id);
  return b;
}

BenchmarkSpec synthetic_f_infinity(std::size_t m, std::size_t n, std::uint64_t seed) {
  if (m % 2 != 0 || n % 2 != 0 || n == 0) {
    throw DimensionError("synthetic_f_infinity: block sizes must be even with a nonempty y2 block");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> positive(0.1, 1.0);

  const Matrix jm_inv = m ? -symplectic_j(m) : Matrix();
  const Matrix jn_inv = -symplectic_j(n);
  const Matrix m11 = m ? random_symmetric(m, rng) : Matrix();
  const Matrix m22 = random_symmetric(n, rng);
  Matrix coupling(n, std::max<std::size_t>(m, 1));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) coupling(i, j) = unit(rng);
  Vector alpha(m), beta(n);
  for (auto& a : alpha) a = positive(rng);
  for (auto& v : beta) v = positive(rng);
  const double gamma = 0.5 * unit(rng);

  BenchmarkSpec b;
  b.id = "synthetic-finf";
  b.params = {{"m", static_cast<double>(m)}, {"n", static_cast<double>(n)}, {"seed", static_cast<double>(seed)}};
  b.default_h = {0.1, 0.05};
  b.default_t_end = {10.0};
  std::uniform_real_distribution<double> init(-0.5, 0.5);
  b.y0.resize(m + n);
  for (auto& v : b.y0) v = init(rng);

  const std::size_t d = m + n;
  Matrix k(d, d);
  if (m) {
    k.set_block(0, 0, jm_inv * m11);
    k.set_block(m, 0, coupling.block(0, 0, n, m));
  }
  k.set_block(m, m, jn_inv * m22);

  // V(y1) = sum alpha_i y1_i^4 / 4.
  // W(y1, y2) = sum beta_i y2_i^4 / 4 + gamma/2 (sum_j sin y1_j) |y2|^2.
  auto g = [=](const Vector& y) {
    Vector out(d, 0.0);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::sin(y[j]);
    Vector gv(m), gw(n);
    for (std::size_t j = 0; j < m; ++j) gv[j] = alpha[j] * y[j] * y[j] * y[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double z = y[m + i];
      gw[i] = beta[i] * z * z * z + gamma * s * z;
    }
    if (m) {
      const Vector u = jm_inv * gv;
      std::copy(u.begin(), u.end(), out.begin());
    }
    const Vector v = jn_inv * gw;
    std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(m));
    return out;
  };
  auto g_jac = [=](const Vector& y) {
    Matrix jac(d, d);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::sin(y[j]);
    if (m) {
      Matrix hv(m, m);
      for (std::size_t j = 0; j < m; ++j) hv(j, j) = 3.0 * alpha[j] * y[j] * y[j];
      jac.set_block(0, 0, jm_inv * hv);
      // d(grad_{y2} W)/d y1: column j is gamma cos(y1_j) y2.
      Matrix cross(n, m);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) cross(i, j) = gamma * std::cos(y[j]) * y[m + i];
      jac.set_block(m, 0, jn_inv * cross);
    }
    Matrix hw(n, n);
    for (std::size_t i = 0; i < n; ++i) hw(i, i) = 3.0 * beta[i] * y[m + i] * y[m + i] + gamma * s;
    jac.set_block(m, m, jn_inv * hw);
    return jac;
  };

  auto& f = b.field;
  f.name = b.id;
  f.k = std::move(k);
  f.g = g;
  f.g_jac = g_jac;
  ClassCertificate cert{ClassTag::FInf, symplectic_j(n), m, {}};
  if (m) cert.inner.push_back({ClassTag::H, symplectic_j(m), std::nullopt, {}});
  f.certificate = std::move(cert);
  check_trace(f.k, 0.0, b.id);
  return b;
}

BenchmarkSpec synthetic_affine(std::size_t n, std::uint64_t seed) {
  if (n % 2 != 0 || n == 0) throw DimensionError("synthetic_affine: dimension must be even and positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Matrix k = -symplectic_j(n) * random_symmetric(n, rng);
  Vector d(n);
  for (auto& v : d) v = unit(rng);

  BenchmarkSpec b;
  b.id = "synthetic-affine";
  b.params = {{"n", static_cast<double>(n)}, {"seed", static_cast<double>(seed)}};
  b.y0.resize(n);
  for (auto& v : b.y0) v = unit(rng);
  b.default_h = {0.1};
  b.default_t_end = {10.0};
  auto& f = b.field;
  f.name = b.id;
  f.k = k;
  f.g = [d](const Vector&) { return d; };
  f.g_jac = [n](const Vector&) { return Matrix::zeros(n, n); };
  f.certificate = ClassCertificate{ClassTag::H, symplectic_j(n), std::nullopt, {}};
  check_trace(f.k, 0.0, b.id);
  return b;
}

BenchmarkSpec js_field() {
  BenchmarkSpec b;
  b.id = "js-field";
  b.y0 = {0.5, 0.0};
  b.default_h = {0.05};
  b.default_t_end = {10.0};
  auto& f = b.field;
  f.name = b.id;
  // J grad H with J = [[0, 1], [-1, 0]] and grad H = (2 y1^3, y2).
  f.k = Matrix{{0.0, 1.0}, {0.0, 0.0}};
  f.g = [](const Vector& y) { return Vector{0.0, -2.0 * y[0] * y[0] * y[0]}; };
  f.g_jac = [](const Vector& y) { return Matrix{{0.0, 0.0}, {-6.0 * y[0] * y[0], 0.0}}; };
  f.certificate = ClassCertificate{ClassTag::FInf, Matrix{{0.0, -1.0}, {1.0, 0.0}}, 0, {}};
  check_trace(f.k, 0.0, b.id);
  return b;
}

const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names = {
      "duffing", "divfree3d", "helmholtz", "charged-particle", "synthetic-finf",
      "synthetic-affine", "js-field", "cubic", "charged-particle-b0"};
  return names;
}

bool is_problem_name(const std::string& name) {
  const auto& n = problem_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

BenchmarkSpec make_problem(const std::string& name, std::uint64_t seed) {
  if (name == "duffing") return duffing();
  if (name == "divfree3d") return divergence_free_3d();
  if (name == "helmholtz") return helmholtz_duffing();
  if (name == "charged-particle") return charged_particle(10.0);
  if (name == "charged-particle-b0") return charged_particle(0.0);
  if (name == "synthetic-finf") return synthetic_f_infinity(2, 2, seed);
  if (name == "synthetic-affine") return synthetic_affine(4, seed);
  if (name == "js-field") return js_field();
  if (name == "cubic") return cubic_oscillator();
  throw UnsupportedError("unknown problem '" + name + "'");
}

double relative_global_error(const Vector& y, const Vector& ref) {
  if (y.size() != ref.size()) throw DimensionError("relative_global_error: length mismatch");
  const double denom = norm2(ref);
  if (denom == 0.0) throw DomainError("relative_global_error: reference has zero norm");
  if (!all_finite(y)) return std::numeric_limits<double>::infinity();
  return norm2(y - ref) / denom;
}

Vector reference_solution(const BenchmarkSpec& b, double t_end, const ReferenceQuality& q) {
  if (b.has_exact()) return b.field.exact(t_end);
  if (!(q.h_min > 0.0) || q.refine < 1 || q.max_halvings < 0) throw RangeError("reference_solution: invalid quality settings");

  auto solve_at = [&](double h) {
    const SolverConfig cfg{h, 1e-16, 100};
    const ButcherTableau t = gauss_legendre(2);
    if (b.second_order) return integrate(SecondOrderEiStepper(*b.second_order, t, cfg), b.y0, t_end).back();
    return integrate(SseiStepper(b.field, t, cfg), b.y0, t_end).back();
  };
  double h = q.h_min / q.refine;
  Vector coarse = solve_at(h);
  double gap = 0.0;
  for (int level = 0; level <= q.max_halvings; ++level) {
    h /= 2.0;
    Vector fine = solve_at(h);
    gap = relative_global_error(coarse, fine);
    if (gap <= q.agreement) return fine;
    coarse = std::move(fine);
  }
  std::ostringstream msg;
  msg << b.id << ": reference refinements down to h = " << h << " still differ by " << gap
      << " (relative), above " << q.agreement;
  throw ReferenceUnreliableError(msg.str());
}

}  // namespace vpei
