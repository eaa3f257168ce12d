#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vpei/integrators.hpp"
#include "vpei/matfun.hpp"
#include "vpei/problem.hpp"
#include "vpei/tableau.hpp"

namespace vpei {

/// s x s grid with block (i, j) = e^{(c_i - c_j) hK}.
BlockMatrix e_matrix(double h, const Matrix& k, std::span<const double> c);

/// Both sides of the VP determinant identity at one state.
struct VpCondition {
  double lhs = 0.0;  ///< |I - h (A (x) I .* E) F|
  double rhs = 0.0;  ///< |e^{hK}| |I + h (A^T (x) I .* E) F|
  /// (lhs - rhs) / max(|lhs|, |rhs|, 1)
  double scaled_residual() const;
};

/// Determinant and Jacobian analysis for one (problem, tableau, h) triple.
/// Exponentials are computed once; each query re-solves the stages at y.
class VolumeAnalyzer {
 public:
  VolumeAnalyzer(VectorFieldProblem p, ButcherTableau t, SolverConfig cfg);

  /// One exponential-integrator step from y; its stages feed F.
  StepRecord stages_at(const Vector& y) const;

  /// Exact Jacobian of the step map, e^{hK} + h b̄^T F (I - hĀF)^{-1} e^{chK}.
  Matrix step_jacobian(const Stages& k) const;
  /// |e^{hK}| |I - h(Ā - e^{(c-1)hK} b̄^T) F| / |I - hĀF|.
  double volume_ratio(const Stages& k) const;
  VpCondition vp_condition(const Stages& k) const;

  Matrix step_jacobian_at(const Vector& y) const { return step_jacobian(stages_at(y).stages); }
  double volume_ratio_at(const Vector& y) const { return volume_ratio(stages_at(y).stages); }
  VpCondition vp_condition_at(const Vector& y) const { return vp_condition(stages_at(y).stages); }

  /// det e^{hK}.
  double linear_determinant() const { return exp_det_; }
  const VectorFieldProblem& problem() const noexcept { return problem_; }

 private:
  std::vector<Matrix> stage_jacobians(const Stages& k) const;
  // I - h M F, with block (i, j) of M given by coef(i, j).
  template <class Coef>
  Matrix stage_system(const std::vector<Matrix>& jac, Coef&& coef) const;

  VectorFieldProblem problem_;
  ButcherTableau tableau_;
  SolverConfig cfg_;
  SseiStepper stepper_;
  BlockMatrix e_;
  std::vector<Matrix> shift_;  ///< e^{(c_i - 1) hK}
  double exp_det_;
};

Matrix step_jacobian(const VectorFieldProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                     const Vector& y);
double volume_ratio(const VectorFieldProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                    const Vector& y);
/// Scaled residual of the VP condition; see VpCondition::scaled_residual.
double vp_condition_residual(const VectorFieldProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                             const Vector& y);

/// Residual of the certificate's relation on a single Jacobian matrix.
///   H:  ||P J P^{-1} + J^T||_F / max(1, ||J||_F)
///   S:  ||P J P^{-1} + J||_F   / max(1, ||J||_F)
/// For FInf / F2 the result is the largest of: the upper-right block of J
/// (must vanish), the y2-block relation, and the inner certificate applied
/// to the y1 block. F2 takes the smaller of the two relations on the y2
/// block. Throws CertificateInvalidError when P is singular, badly
/// conditioned (> 1e8), or sized wrongly.
double class_relation_residual(const ClassCertificate& cert, const Matrix& jac);

struct ClassResiduals {
  std::size_t samples = 0;
  double max_f = 0.0;   ///< worst residual on f'
  double max_g = 0.0;   ///< worst residual on g'
  double mean = 0.0;    ///< mean over samples of max(f, g) residual
  double tolerance = 1e-10;

  double max() const { return std::max(max_f, max_g); }
  bool passed() const { return max() <= tolerance; }
};

/// Evaluate the certificate on f' and g' at `samples` states drawn uniformly
/// from [-box, box]^n (mt19937_64 seeded with `seed`).
ClassResiduals verify_class(const VectorFieldProblem& p, const ClassCertificate& cert, std::size_t samples = 64,
                            std::uint64_t seed = 0, double box = 2.0);

/// verify_class, then throw CertificateInvalidError if the relation fails.
ClassResiduals require_class(const VectorFieldProblem& p, const ClassCertificate& cert, std::size_t samples = 64,
                             std::uint64_t seed = 0, double box = 2.0);

struct VolumeReport {
  double h = 0.0;
  std::vector<double> per_step_det;
  std::vector<double> vp_residual;
  double cumulative_log_drift = 0.0;
  double max_abs_det_minus_one = 0.0;

  /// max_n |det_n - target|.
  double max_deviation(double target) const;
};

/// Determinants along a trajectory: step n is analysed at states[n-1].
/// Singularities are re-raised with the step index in the message.
VolumeReport volume_drift(const Trajectory& tr, const VectorFieldProblem& p, const ButcherTableau& t,
                          const SolverConfig& cfg);

/// Columns: step, t, det, abs_det_minus_one, vp_residual, cum_log_drift.
void write_volume_csv(std::ostream& out, const VolumeReport& report);

}  // namespace vpei
