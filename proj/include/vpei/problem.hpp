#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vpei/matrix.hpp"

namespace vpei {

/// Vector-field classes defined by similarity relations on the Jacobian.
///   H:     P f'(y) P^{-1} = -f'(y)^T
///   S:     P f'(y) P^{-1} = -f'(y)
///   FInf:  f = (u(y1), v(y1, y2)), u in H or FInf, P d_{y2}v P^{-1} = -(d_{y2}v)^T
///   F2:    f = (u(y1), v(y1, y2)), u in H, S or F2, and d_{y2}v satisfies
///          either relation pointwise
enum class ClassTag { H, S, FInf, F2 };

std::string to_string(ClassTag tag);
ClassTag class_tag_from_string(const std::string& name);

/// Claimed class membership of a vector field.
///
/// For FInf and F2, `split` is the dimension m of the y1 block (it may be 0)
/// and P acts on the y2 block. `inner`, when present, certifies u(y1).
struct ClassCertificate {
  ClassTag tag = ClassTag::H;
  Matrix p;
  std::optional<std::size_t> split;
  std::vector<ClassCertificate> inner;
};

using VectorMap = std::function<Vector(const Vector&)>;
using JacobianMap = std::function<Matrix(const Vector&)>;

/// y' = K y + g(y).
struct VectorFieldProblem {
  std::string name;
  Matrix k;
  VectorMap g;
  JacobianMap g_jac;
  std::optional<ClassCertificate> certificate;
  std::function<Vector(double)> exact;

  std::size_t dim() const noexcept { return k.rows(); }
  Vector f(const Vector& y) const;
  Matrix f_jac(const Vector& y) const;
};

/// q'' - N q' + Omega q = -grad V1(q).
struct SecondOrderProblem {
  std::string name;
  Matrix n;
  Matrix omega;
  VectorMap grad_v1;
  JacobianMap grad_v1_jac;

  std::size_t dim() const noexcept { return n.rows(); }
};

/// (q, p)' = (p, -Omega q + gtilde(q)).
struct PartitionedProblem {
  std::string name;
  Matrix omega;
  VectorMap gtilde;
  JacobianMap gtilde_jac;

  std::size_t dim() const noexcept { return omega.rows(); }
};

/// First-order form with K = [[0, I], [-Omega, N]], g = (0, -grad V1(q)).
VectorFieldProblem embed(const SecondOrderProblem& p);

/// First-order form with K = [[0, I], [-Omega, 0]], g = (0, gtilde(q)).
VectorFieldProblem embed(const PartitionedProblem& p);

/// The same field with the linear part folded into the nonlinearity
/// (K = 0, g = f). Exponential integrators on the result are classical RK.
VectorFieldProblem as_rk_problem(const VectorFieldProblem& p);

/// Central-difference Jacobian of a vector map.
Matrix finite_difference_jacobian(const VectorMap& map, const Vector& y, double step = 1e-6);

}  // namespace vpei
