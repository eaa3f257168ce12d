#include "vpei/problem.hpp"

#include "vpei/errors.hpp"

namespace vpei {

std::string to_string(ClassTag tag) {
  switch (tag) {
    case ClassTag::H: return "H";
    case ClassTag::S: return "S";
    case ClassTag::FInf: return "F_inf";
    case ClassTag::F2: return "F_2";
  }
  return "?";
}

ClassTag class_tag_from_string(const std::string& name) {
  if (name == "H") return ClassTag::H;
  if (name == "S") return ClassTag::S;
  if (name == "F_inf" || name == "Finf" || name == "F_infinity") return ClassTag::FInf;
  if (name == "F_2" || name == "F2") return ClassTag::F2;
  throw ParseError("unknown class tag '" + name + "'");
}

Vector VectorFieldProblem::f(const Vector& y) const { return k * y + g(y); }

Matrix VectorFieldProblem::f_jac(const Vector& y) const { return k + g_jac(y); }

namespace {

Vector head(const Vector& y, std::size_t n) { return Vector(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n)); }

}  // namespace

VectorFieldProblem embed(const SecondOrderProblem& p) {
  const std::size_t n = p.dim();
  if (!p.n.is_square() || !p.omega.is_square() || p.omega.rows() != n) {
    throw DimensionError("second-order problem needs square N and Omega of equal size");
  }
  Matrix k(2 * n, 2 * n);
  k.set_block(0, n, Matrix::identity(n));
  k.set_block(n, 0, -p.omega);
  k.set_block(n, n, p.n);

  VectorFieldProblem out;
  out.name = p.name;
  out.k = std::move(k);
  out.g = [grad = p.grad_v1, n](const Vector& y) {
    const Vector gq = grad(head(y, n));
    Vector r(2 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) r[n + i] = -gq[i];
    return r;
  };
  out.g_jac = [hess = p.grad_v1_jac, n](const Vector& y) {
    Matrix j(2 * n, 2 * n);
    j.set_block(n, 0, -hess(head(y, n)));
    return j;
  };
  return out;
}

VectorFieldProblem embed(const PartitionedProblem& p) {
  const std::size_t n = p.dim();
  if (!p.omega.is_square()) throw DimensionError("partitioned problem needs square Omega");
  Matrix k(2 * n, 2 * n);
  k.set_block(0, n, Matrix::identity(n));
  k.set_block(n, 0, -p.omega);

  VectorFieldProblem out;
  out.name = p.name;
  out.k = std::move(k);
  out.g = [gt = p.gtilde, n](const Vector& y) {
    const Vector gq = gt(head(y, n));
    Vector r(2 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) r[n + i] = gq[i];
    return r;
  };
  out.g_jac = [jac = p.gtilde_jac, n](const Vector& y) {
    Matrix j(2 * n, 2 * n);
    j.set_block(n, 0, jac(head(y, n)));
    return j;
  };
  return out;
}

VectorFieldProblem as_rk_problem(const VectorFieldProblem& p) {
  VectorFieldProblem out = p;
  const Matrix k = p.k;
  out.k = Matrix::zeros(p.dim(), p.dim());
  out.g = [k, g = p.g](const Vector& y) { return k * y + g(y); };
  out.g_jac = [k, gj = p.g_jac](const Vector& y) { return k + gj(y); };
  return out;
}

Matrix finite_difference_jacobian(const VectorMap& map, const Vector& y, double step) {
  const std::size_t n = y.size();
  Matrix j;
  for (std::size_t c = 0; c < n; ++c) {
    Vector yp = y;
    Vector ym = y;
    yp[c] += step;
    ym[c] -= step;
    const Vector d = (1.0 / (2.0 * step)) * (map(yp) - map(ym));
    if (j.empty()) j = Matrix(d.size(), n);
    j.set_col(c, d);
  }
  return j;
}

}  // namespace vpei
