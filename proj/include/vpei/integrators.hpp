#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vpei/errors.hpp"
#include "vpei/matfun.hpp"
#include "vpei/problem.hpp"
#include "vpei/tableau.hpp"

namespace vpei {

/// Step size and stage-iteration controls. Defaults follow the reference
/// experiments: tolerance 1e-16, at most 100 sweeps.
struct SolverConfig {
  double h = 0.01;
  double fp_tol = 1e-16;
  int fp_max_iter = 100;

  void validate() const;
};

/// How a stage solve terminated.
enum class ConvergenceBranch {
  Tolerance,   ///< max-norm increment <= fp_tol
  Stagnation,  ///< increment stopped decreasing at rounding level
  Explicit,    ///< stage equations carry no implicit coupling
  None,        ///< iteration budget exhausted
};

std::string to_string(ConvergenceBranch b);

using Stages = std::vector<Vector>;
using StageMap = std::function<Stages(const Stages&)>;

struct FixedPointResult {
  Stages stages;
  int iterations = 0;
  bool converged = false;
  double increment_norm = 0.0;
  ConvergenceBranch branch = ConvergenceBranch::None;
};

/// Iterate x <- stage_map(x) until the max-norm increment drops to fp_tol,
/// stagnates at rounding level, or fp_max_iter sweeps are spent.
///
/// Non-convergence is reported through the result, not thrown. A
/// non-finite iterate, or increments that grow by more than eight orders of
/// magnitude over the budget, raise DivergenceError naming the first
/// offending stage.
FixedPointResult fixed_point_solve(const StageMap& stage_map, Stages initial, const SolverConfig& cfg);

/// Outcome of one step. `stages` holds k_i for first-order steppers and the
/// position stages Q_i for the second-order ones.
struct StepRecord {
  Vector y_next;
  Stages stages;
  int iterations = 0;
  bool converged = false;
  double increment_norm = 0.0;
  ConvergenceBranch branch = ConvergenceBranch::None;
};

/// A one-step method bound to a problem, tableau and step size. Coefficient
/// matrices are computed once at construction.
class Stepper {
 public:
  virtual ~Stepper() = default;
  virtual StepRecord step(const Vector& y) const = 0;
  virtual std::size_t state_dim() const = 0;
  const SolverConfig& config() const noexcept { return cfg_; }
  const ButcherTableau& tableau() const noexcept { return tableau_; }

 protected:
  Stepper(ButcherTableau t, SolverConfig cfg);

  ButcherTableau tableau_;
  SolverConfig cfg_;
};

/// Exponential integrator with coefficients a_ij e^{(c_i-c_j)hK} and
/// b_i e^{(1-c_i)hK}. Stage seeds are e^{c_i hK} y.
class SseiStepper final : public Stepper {
 public:
  SseiStepper(VectorFieldProblem p, ButcherTableau t, SolverConfig cfg);
  StepRecord step(const Vector& y) const override;
  std::size_t state_dim() const override { return problem_.dim(); }
  const ExpCoefficients& coefficients() const noexcept { return coeffs_; }

 private:
  VectorFieldProblem problem_;
  ExpCoefficients coeffs_;
};

/// Implicit Runge-Kutta on f(y) = K y + g(y); stage seeds are y.
class RkStepper final : public Stepper {
 public:
  RkStepper(VectorFieldProblem p, ButcherTableau t, SolverConfig cfg);
  StepRecord step(const Vector& y) const override;
  std::size_t state_dim() const override { return problem_.dim(); }

 private:
  VectorFieldProblem problem_;
};

/// Exponential integrator written on (q, q') for q'' - N q' + Omega q =
/// -grad V1(q), using the blocks of e^{x hK}. State is (q, q') stacked.
class SecondOrderEiStepper final : public Stepper {
 public:
  SecondOrderEiStepper(SecondOrderProblem p, ButcherTableau t, SolverConfig cfg);
  StepRecord step(const Vector& y) const override;
  std::size_t state_dim() const override { return 2 * problem_.dim(); }

 private:
  const ExpBlocks& blocks(double x) const { return blocks_.at(x); }

  SecondOrderProblem problem_;
  std::map<double, ExpBlocks> blocks_;
  bool explicit_stages_;
};

/// Extended RKN integrator for (q, p)' = (p, -Omega q + gtilde(q)) built
/// from the trigonometric series at V = h^2 Omega.
class ErknStepper final : public Stepper {
 public:
  ErknStepper(PartitionedProblem p, ButcherTableau t, SolverConfig cfg);
  StepRecord step(const Vector& y) const override;
  std::size_t state_dim() const override { return 2 * problem_.dim(); }

 private:
  PartitionedProblem problem_;
  std::map<double, Matrix> phi0_;  // keyed by x, holds phi_trig(0, x^2 V)
  std::map<double, Matrix> phi1_;
  bool explicit_stages_;
};

/// RKN method for q'' = gtilde(q) (Omega must be zero).
class RknStepper final : public Stepper {
 public:
  RknStepper(PartitionedProblem p, ButcherTableau t, SolverConfig cfg);
  StepRecord step(const Vector& y) const override;
  std::size_t state_dim() const override { return 2 * problem_.dim(); }

 private:
  PartitionedProblem problem_;
  bool explicit_stages_;
};

/// True when a_ij = 0 or c_i = c_j for every pair, i.e. the coupling
/// coefficients of the second-order schemes all vanish.
bool has_explicit_stages(const ButcherTableau& t);

StepRecord ssei_step(const VectorFieldProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                     const Vector& y);
StepRecord rk_step(const VectorFieldProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                   const Vector& y);
StepRecord second_order_ei_step(const SecondOrderProblem& p, const ButcherTableau& t,
                                const SolverConfig& cfg, const Vector& state);
StepRecord erkn_step(const PartitionedProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                     const Vector& state);
StepRecord rkn_step(const PartitionedProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                    const Vector& state);

struct StepMeta {
  int iterations = 0;
  bool converged = false;
  double increment_norm = 0.0;
  ConvergenceBranch branch = ConvergenceBranch::None;
};

struct Trajectory {
  double h = 0.0;
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<StepMeta> steps;
  int nonconverged = 0;

  std::size_t step_count() const noexcept { return steps.size(); }
  const Vector& back() const { return states.back(); }
};

/// Raised by integrate() when a step fails; carries everything computed up
/// to the failing step.
class IntegrationAborted : public Error {
 public:
  IntegrationAborted(const std::string& what, Trajectory partial, std::size_t failed_step)
      : Error(what), partial_(std::move(partial)), failed_step_(failed_step) {}

  const Trajectory& partial() const noexcept { return partial_; }
  std::size_t failed_step() const noexcept { return failed_step_; }

 private:
  Trajectory partial_;
  std::size_t failed_step_;
};

/// Number of steps m with m h = t_end. Throws PreconditionError when t_end
/// is not on the step grid (relative slack 1e-9).
std::size_t grid_steps(double h, double t_end);

/// Apply the stepper m = t_end/h times from y0.
Trajectory integrate(const Stepper& stepper, const Vector& y0, double t_end);

}  // namespace vpei
