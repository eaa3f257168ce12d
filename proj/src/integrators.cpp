#include "vpei/integrators.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace vpei {

void SolverConfig::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) throw RangeError("step size h must be positive and finite");
  if (!(fp_tol > 0.0)) throw RangeError("fp_tol must be positive");
  if (fp_max_iter < 1) throw RangeError("fp_max_iter must be at least 1");
}

std::string to_string(ConvergenceBranch b) {
  switch (b) {
    case ConvergenceBranch::Tolerance: return "tolerance";
    case ConvergenceBranch::Stagnation: return "stagnation";
    case ConvergenceBranch::Explicit: return "explicit";
    case ConvergenceBranch::None: return "none";
  }
  return "?";
}

namespace {

// Increments at this many ulps of the iterate are rounding noise.
constexpr double kStagnationUlps = 256.0;
// Growth of the increment over the budget that counts as divergence.
constexpr double kDivergenceGrowth = 1e8;

double max_abs_over(const Stages& x) {
  double m = 0.0;
  for (const auto& v : x) m = std::max(m, norm_inf(v));
  return m;
}

}  // namespace

FixedPointResult fixed_point_solve(const StageMap& stage_map, Stages initial, const SolverConfig& cfg) {
  if (cfg.fp_max_iter < 1) throw RangeError("fp_max_iter must be at least 1");
  FixedPointResult r;
  r.stages = std::move(initial);
  double first_inc = 0.0;
  double prev_inc = std::numeric_limits<double>::infinity();
  std::size_t worst_stage = 0;

  for (int it = 1; it <= cfg.fp_max_iter; ++it) {
    Stages next = stage_map(r.stages);
    if (next.size() != r.stages.size()) throw DimensionError("stage map changed the number of stages");
    double inc = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (!all_finite(next[i])) {
        throw DivergenceError("stage iteration produced a non-finite value", i, it);
      }
      const double d = norm_inf(next[i] - r.stages[i]);
      if (d > inc) {
        inc = d;
        worst_stage = i;
      }
    }
    r.stages = std::move(next);
    r.iterations = it;
    r.increment_norm = inc;
    if (inc <= cfg.fp_tol) {
      r.converged = true;
      r.branch = ConvergenceBranch::Tolerance;
      return r;
    }
    const double noise = kStagnationUlps * std::numeric_limits<double>::epsilon() *
                         std::max(1.0, max_abs_over(r.stages));
    if (inc >= prev_inc && inc <= noise) {
      r.converged = true;
      r.branch = ConvergenceBranch::Stagnation;
      return r;
    }
    if (it == 1) first_inc = inc;
    prev_inc = inc;
  }
  if (r.increment_norm > kDivergenceGrowth * std::max(first_inc, cfg.fp_tol)) {
    throw DivergenceError("stage iteration increments grew without bound", worst_stage, r.iterations);
  }
  r.branch = ConvergenceBranch::None;
  return r;
}

Stepper::Stepper(ButcherTableau t, SolverConfig cfg) : tableau_(std::move(t)), cfg_(cfg) {
  tableau_.validate();
  cfg_.validate();
}

bool has_explicit_stages(const ButcherTableau& t) {
  for (std::size_t i = 0; i < t.stages(); ++i)
    for (std::size_t j = 0; j < t.stages(); ++j)
      if (t.a(i, j) != 0.0 && t.c[i] != t.c[j]) return false;
  return true;
}

namespace {

StepRecord finish(Vector y_next, const FixedPointResult& fp) {
  StepRecord rec;
  rec.y_next = std::move(y_next);
  rec.stages = fp.stages;
  rec.iterations = fp.iterations;
  rec.converged = fp.converged;
  rec.increment_norm = fp.increment_norm;
  rec.branch = fp.branch;
  return rec;
}

FixedPointResult explicit_result(Stages stages) {
  FixedPointResult fp;
  fp.stages = std::move(stages);
  fp.iterations = 1;
  fp.converged = true;
  fp.branch = ConvergenceBranch::Explicit;
  return fp;
}

void check_state(const Vector& y, std::size_t dim, const char* who) {
  if (y.size() != dim) {
    std::ostringstream msg;
    msg << who << ": state has length " << y.size() << ", expected " << dim;
    throw DimensionError(msg.str());
  }
}

void check_second_order(std::size_t n, const Matrix& omega) {
  if (!omega.is_square() || omega.rows() != n) throw DimensionError("Omega must be square and match the problem size");
}

Vector head(const Vector& y, std::size_t n) { return {y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n)}; }
Vector tail(const Vector& y, std::size_t n) { return {y.begin() + static_cast<std::ptrdiff_t>(n), y.end()}; }

Vector concat(const Vector& a, const Vector& b) {
  Vector r = a;
  r.insert(r.end(), b.begin(), b.end());
  return r;
}

}  // namespace

// ---- exponential integrator on y' = K y + g(y) -----------------------------

SseiStepper::SseiStepper(VectorFieldProblem p, ButcherTableau t, SolverConfig cfg)
    : Stepper(std::move(t), cfg), problem_(std::move(p)) {
  if (!problem_.k.is_square()) throw DimensionError("K must be square");
  if (!problem_.g) throw PreconditionError("problem has no nonlinearity g");
  coeffs_ = build_exp_coefficients(tableau_, cfg_.h, problem_.k);
}

StepRecord SseiStepper::step(const Vector& y) const {
  check_state(y, problem_.dim(), "ssei_step");
  const std::size_t s = tableau_.stages();
  const double h = cfg_.h;

  Stages base(s);
  for (std::size_t i = 0; i < s; ++i) base[i] = coeffs_.node_exponentials[i] * y;

  auto map = [&](const Stages& k) {
    Stages gk(s);
    for (std::size_t j = 0; j < s; ++j) gk[j] = problem_.g(k[j]);
    Stages out = base;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j)
        if (tableau_.a(i, j) != 0.0) axpy(h, coeffs_.abar[i][j] * gk[j], out[i]);
    return out;
  };
  const FixedPointResult fp = fixed_point_solve(map, base, cfg_);

  Vector y_next = coeffs_.step_exponential * y;
  for (std::size_t i = 0; i < s; ++i)
    if (tableau_.b[i] != 0.0) axpy(h, coeffs_.bbar[i] * problem_.g(fp.stages[i]), y_next);
  return finish(std::move(y_next), fp);
}

// ---- classical implicit Runge-Kutta ----------------------------------------

RkStepper::RkStepper(VectorFieldProblem p, ButcherTableau t, SolverConfig cfg)
    : Stepper(std::move(t), cfg), problem_(std::move(p)) {
  if (!problem_.k.is_square()) throw DimensionError("K must be square");
  if (!problem_.g) throw PreconditionError("problem has no nonlinearity g");
}

StepRecord RkStepper::step(const Vector& y) const {
  check_state(y, problem_.dim(), "rk_step");
  const std::size_t s = tableau_.stages();
  const double h = cfg_.h;

  auto map = [&](const Stages& k) {
    Stages fk(s);
    for (std::size_t j = 0; j < s; ++j) fk[j] = problem_.f(k[j]);
    Stages out(s, y);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j)
        if (tableau_.a(i, j) != 0.0) axpy(h * tableau_.a(i, j), fk[j], out[i]);
    return out;
  };
  const FixedPointResult fp = fixed_point_solve(map, Stages(s, y), cfg_);

  Vector y_next = y;
  for (std::size_t i = 0; i < s; ++i)
    if (tableau_.b[i] != 0.0) axpy(h * tableau_.b[i], problem_.f(fp.stages[i]), y_next);
  return finish(std::move(y_next), fp);
}

// ---- second-order exponential integrator -----------------------------------

SecondOrderEiStepper::SecondOrderEiStepper(SecondOrderProblem p, ButcherTableau t, SolverConfig cfg)
    : Stepper(std::move(t), cfg), problem_(std::move(p)), explicit_stages_(has_explicit_stages(tableau_)) {
  const std::size_t n = problem_.dim();
  if (!problem_.n.is_square()) throw DimensionError("N must be square");
  check_second_order(n, problem_.omega);
  if (!problem_.grad_v1) throw PreconditionError("problem has no gradient of V1");

  auto add = [&](double x) {
    if (!blocks_.count(x)) blocks_.emplace(x, partition_exp_blocks(x * cfg_.h, problem_.n, problem_.omega));
  };
  const std::size_t s = tableau_.stages();
  add(1.0);
  for (std::size_t i = 0; i < s; ++i) {
    add(tableau_.c[i]);
    add(1.0 - tableau_.c[i]);
    for (std::size_t j = 0; j < s; ++j) add(tableau_.c[i] - tableau_.c[j]);
  }
}

StepRecord SecondOrderEiStepper::step(const Vector& state) const {
  const std::size_t n = problem_.dim();
  check_state(state, 2 * n, "second_order_ei_step");
  const std::size_t s = tableau_.stages();
  const double h = cfg_.h;
  const Vector q = head(state, n);
  const Vector v = tail(state, n);
  const auto& c = tableau_.c;

  Stages base(s);
  for (std::size_t i = 0; i < s; ++i) {
    const ExpBlocks& e = blocks(c[i]);
    base[i] = e.e11 * q + e.e12 * v;
  }

  auto map = [&](const Stages& k) {
    Stages grad(s);
    for (std::size_t j = 0; j < s; ++j) grad[j] = problem_.grad_v1(k[j]);
    Stages out = base;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j)
        if (tableau_.a(i, j) != 0.0) axpy(-h * tableau_.a(i, j), blocks(c[i] - c[j]).e12 * grad[j], out[i]);
    return out;
  };
  // With no coupling the stage map is constant and one application is exact.
  const FixedPointResult fp = explicit_stages_ ? explicit_result(map(base)) : fixed_point_solve(map, base, cfg_);

  const ExpBlocks& e1 = blocks(1.0);
  Vector q_next = e1.e11 * q + e1.e12 * v;
  Vector v_next = e1.e21 * q + e1.e22 * v;
  for (std::size_t i = 0; i < s; ++i) {
    if (tableau_.b[i] == 0.0) continue;
    const Vector grad = problem_.grad_v1(fp.stages[i]);
    const ExpBlocks& e = blocks(1.0 - c[i]);
    axpy(-h * tableau_.b[i], e.e12 * grad, q_next);
    axpy(-h * tableau_.b[i], e.e22 * grad, v_next);
  }
  return finish(concat(q_next, v_next), fp);
}

// ---- ERKN ------------------------------------------------------------------

ErknStepper::ErknStepper(PartitionedProblem p, ButcherTableau t, SolverConfig cfg)
    : Stepper(std::move(t), cfg), problem_(std::move(p)), explicit_stages_(has_explicit_stages(tableau_)) {
  check_second_order(problem_.dim(), problem_.omega);
  if (!problem_.gtilde) throw PreconditionError("problem has no nonlinearity gtilde");
  const Matrix v = (cfg_.h * cfg_.h) * problem_.omega;

  auto add = [&](double x) {
    if (phi0_.count(x)) return;
    const Matrix vx = (x * x) * v;
    phi0_.emplace(x, phi_trig(0, vx));
    phi1_.emplace(x, phi_trig(1, vx));
  };
  const std::size_t s = tableau_.stages();
  add(1.0);
  for (std::size_t i = 0; i < s; ++i) {
    add(tableau_.c[i]);
    add(1.0 - tableau_.c[i]);
    for (std::size_t j = 0; j < s; ++j) add(tableau_.c[i] - tableau_.c[j]);
  }
}

StepRecord ErknStepper::step(const Vector& state) const {
  const std::size_t n = problem_.dim();
  check_state(state, 2 * n, "erkn_step");
  const std::size_t s = tableau_.stages();
  const double h = cfg_.h;
  const Vector q = head(state, n);
  const Vector p = tail(state, n);
  const auto& c = tableau_.c;

  Stages base(s);
  for (std::size_t i = 0; i < s; ++i) {
    base[i] = phi0_.at(c[i]) * q;
    axpy(h * c[i], phi1_.at(c[i]) * p, base[i]);
  }

  auto map = [&](const Stages& qs) {
    Stages gq(s);
    for (std::size_t j = 0; j < s; ++j) gq[j] = problem_.gtilde(qs[j]);
    Stages out = base;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const double w = tableau_.a(i, j) * (c[i] - c[j]);
        if (w != 0.0) axpy(h * h * w, phi1_.at(c[i] - c[j]) * gq[j], out[i]);
      }
    return out;
  };
  const FixedPointResult fp = explicit_stages_ ? explicit_result(map(base)) : fixed_point_solve(map, base, cfg_);

  Vector q_next = phi0_.at(1.0) * q;
  axpy(h, phi1_.at(1.0) * p, q_next);
  Vector p_next = phi0_.at(1.0) * p;
  axpy(-h, problem_.omega * (phi1_.at(1.0) * q), p_next);
  for (std::size_t i = 0; i < s; ++i) {
    if (tableau_.b[i] == 0.0) continue;
    const Vector g = problem_.gtilde(fp.stages[i]);
    const double x = 1.0 - c[i];
    axpy(h * h * tableau_.b[i] * x, phi1_.at(x) * g, q_next);
    axpy(h * tableau_.b[i], phi0_.at(x) * g, p_next);
  }
  return finish(concat(q_next, p_next), fp);
}

// ---- RKN -------------------------------------------------------------------

RknStepper::RknStepper(PartitionedProblem p, ButcherTableau t, SolverConfig cfg)
    : Stepper(std::move(t), cfg), problem_(std::move(p)), explicit_stages_(has_explicit_stages(tableau_)) {
  check_second_order(problem_.dim(), problem_.omega);
  if (problem_.omega.max_abs() != 0.0) throw PreconditionError("RKN methods need Omega = 0");
  if (!problem_.gtilde) throw PreconditionError("problem has no nonlinearity gtilde");
}

StepRecord RknStepper::step(const Vector& state) const {
  const std::size_t n = problem_.dim();
  check_state(state, 2 * n, "rkn_step");
  const std::size_t s = tableau_.stages();
  const double h = cfg_.h;
  const Vector q = head(state, n);
  const Vector p = tail(state, n);
  const auto& c = tableau_.c;

  Stages base(s);
  for (std::size_t i = 0; i < s; ++i) {
    base[i] = q;
    axpy(h * c[i], p, base[i]);
  }

  auto map = [&](const Stages& qs) {
    Stages gq(s);
    for (std::size_t j = 0; j < s; ++j) gq[j] = problem_.gtilde(qs[j]);
    Stages out = base;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const double w = tableau_.a(i, j) * (c[i] - c[j]);
        if (w != 0.0) axpy(h * h * w, gq[j], out[i]);
      }
    return out;
  };
  const FixedPointResult fp = explicit_stages_ ? explicit_result(map(base)) : fixed_point_solve(map, base, cfg_);

  Vector q_next = q;
  axpy(h, p, q_next);
  Vector p_next = p;
  for (std::size_t i = 0; i < s; ++i) {
    if (tableau_.b[i] == 0.0) continue;
    const Vector g = problem_.gtilde(fp.stages[i]);
    axpy(h * h * tableau_.b[i] * (1.0 - c[i]), g, q_next);
    axpy(h * tableau_.b[i], g, p_next);
  }
  return finish(concat(q_next, p_next), fp);
}

// ---- free-function wrappers ------------------------------------------------

StepRecord ssei_step(const VectorFieldProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                     const Vector& y) {
  return SseiStepper(p, t, cfg).step(y);
}

StepRecord rk_step(const VectorFieldProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                   const Vector& y) {
  return RkStepper(p, t, cfg).step(y);
}

StepRecord second_order_ei_step(const SecondOrderProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                                const Vector& state) {
  return SecondOrderEiStepper(p, t, cfg).step(state);
}

StepRecord erkn_step(const PartitionedProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                     const Vector& state) {
  return ErknStepper(p, t, cfg).step(state);
}

StepRecord rkn_step(const PartitionedProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                    const Vector& state) {
  return RknStepper(p, t, cfg).step(state);
}

// ---- trajectories ----------------------------------------------------------

std::size_t grid_steps(double h, double t_end) {
  if (!(h > 0.0) || !std::isfinite(h)) throw RangeError("step size h must be positive and finite");
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw RangeError("t_end must be finite and non-negative");
  const double m = std::round(t_end / h);
  if (std::abs(m * h - t_end) > 1e-9 * std::max(1.0, t_end)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "t_end = " << t_end << " is not an integer multiple of h = " << h;
    throw PreconditionError(msg.str());
  }
  return static_cast<std::size_t>(m);
}

Trajectory integrate(const Stepper& stepper, const Vector& y0, double t_end) {
  const double h = stepper.config().h;
  const std::size_t m = grid_steps(h, t_end);
  if (y0.size() != stepper.state_dim()) throw DimensionError("initial state has the wrong length");

  Trajectory tr;
  tr.h = h;
  tr.times.reserve(m + 1);
  tr.states.reserve(m + 1);
  tr.steps.reserve(m);
  tr.times.push_back(0.0);
  tr.states.push_back(y0);

  for (std::size_t n = 1; n <= m; ++n) {
    StepRecord rec;
    try {
      rec = stepper.step(tr.states.back());
    } catch (const DivergenceError& e) {
      std::ostringstream msg;
      msg << "step " << n << " diverged: " << e.what();
      throw IntegrationAborted(msg.str(), std::move(tr), n);
    }
    if (!all_finite(rec.y_next)) {
      std::ostringstream msg;
      msg << "step " << n << " produced a non-finite state";
      throw IntegrationAborted(msg.str(), std::move(tr), n);
    }
    if (!rec.converged) ++tr.nonconverged;
    tr.steps.push_back({rec.iterations, rec.converged, rec.increment_norm, rec.branch});
    tr.times.push_back(static_cast<double>(n) * h);
    tr.states.push_back(std::move(rec.y_next));
  }
  return tr;
}

}  // namespace vpei
