#include "vpei/vpcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "vpei/csv.hpp"

namespace vpei {

BlockMatrix e_matrix(double h, const Matrix& k, std::span<const double> c) {
  if (!k.is_square()) throw DimensionError("e_matrix: K must be square");
  const std::size_t s = c.size();
  BlockMatrix e(s, s, k.rows());
  std::map<double, Matrix> cache;
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      const double x = c[i] - c[j];
      auto it = cache.find(x);
      if (it == cache.end()) it = cache.emplace(x, x == 0.0 ? Matrix::identity(k.rows()) : expm((x * h) * k)).first;
      e(i, j) = it->second;
    }
  return e;
}

double VpCondition::scaled_residual() const {
  return (lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1.0});
}

VolumeAnalyzer::VolumeAnalyzer(VectorFieldProblem p, ButcherTableau t, SolverConfig cfg)
    : problem_(std::move(p)),
      tableau_(std::move(t)),
      cfg_(cfg),
      stepper_(problem_, tableau_, cfg_),
      e_(e_matrix(cfg_.h, problem_.k, tableau_.c)),
      exp_det_(det(stepper_.coefficients().step_exponential)) {
  if (!problem_.g_jac) throw PreconditionError("volume analysis needs the Jacobian of g");
  for (double ci : tableau_.c) shift_.push_back(expm(((ci - 1.0) * cfg_.h) * problem_.k));
}

StepRecord VolumeAnalyzer::stages_at(const Vector& y) const { return stepper_.step(y); }

std::vector<Matrix> VolumeAnalyzer::stage_jacobians(const Stages& k) const {
  if (k.size() != tableau_.stages()) throw DimensionError("stage count does not match the tableau");
  std::vector<Matrix> jac;
  jac.reserve(k.size());
  for (const auto& ki : k) jac.push_back(problem_.g_jac(ki));
  return jac;
}

template <class Coef>
Matrix VolumeAnalyzer::stage_system(const std::vector<Matrix>& jac, Coef&& coef) const {
  const std::size_t s = tableau_.stages();
  const std::size_t n = problem_.dim();
  Matrix m = Matrix::identity(s * n);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      const Matrix block = coef(i, j) * jac[j];
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) m(i * n + r, j * n + c) -= cfg_.h * block(r, c);
    }
  return m;
}

Matrix VolumeAnalyzer::step_jacobian(const Stages& k) const {
  const auto jac = stage_jacobians(k);
  const auto& co = stepper_.coefficients();
  const std::size_t s = tableau_.stages();
  const std::size_t n = problem_.dim();

  const Matrix sys = stage_system(jac, [&](std::size_t i, std::size_t j) -> const Matrix& { return co.abar[i][j]; });
  Matrix rhs(s * n, n);
  for (std::size_t i = 0; i < s; ++i) rhs.set_block(i * n, 0, co.node_exponentials[i]);
  const Matrix x = solve(sys, rhs);

  Matrix out = co.step_exponential;
  for (std::size_t i = 0; i < s; ++i) out += cfg_.h * (co.bbar[i] * (jac[i] * x.block(i * n, 0, n, n)));
  return out;
}

double VolumeAnalyzer::volume_ratio(const Stages& k) const {
  const auto jac = stage_jacobians(k);
  const auto& co = stepper_.coefficients();
  const Matrix denom = stage_system(jac, [&](std::size_t i, std::size_t j) -> const Matrix& { return co.abar[i][j]; });
  const Matrix numer = stage_system(jac, [&](std::size_t i, std::size_t j) {
    return co.abar[i][j] - shift_[i] * co.bbar[j];
  });
  const double d = det(denom);
  if (d == 0.0) throw SingularityError("volume_ratio: stage system I - hAF is singular");
  return exp_det_ * det(numer) / d;
}

VpCondition VolumeAnalyzer::vp_condition(const Stages& k) const {
  const auto jac = stage_jacobians(k);
  const Matrix left = stage_system(jac, [&](std::size_t i, std::size_t j) { return tableau_.a(i, j) * e_(i, j); });
  // The right factor carries +h; flip the sign of the coefficient.
  const Matrix right = stage_system(jac, [&](std::size_t i, std::size_t j) { return -tableau_.a(j, i) * e_(i, j); });
  return {det(left), exp_det_ * det(right)};
}

Matrix step_jacobian(const VectorFieldProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                     const Vector& y) {
  return VolumeAnalyzer(p, t, cfg).step_jacobian_at(y);
}

double volume_ratio(const VectorFieldProblem& p, const ButcherTableau& t, const SolverConfig& cfg, const Vector& y) {
  return VolumeAnalyzer(p, t, cfg).volume_ratio_at(y);
}

double vp_condition_residual(const VectorFieldProblem& p, const ButcherTableau& t, const SolverConfig& cfg,
                             const Vector& y) {
  return VolumeAnalyzer(p, t, cfg).vp_condition_at(y).scaled_residual();
}

// ---- class certificates ----------------------------------------------------

namespace {

constexpr double kMaxCondition = 1e8;

Matrix checked_inverse(const Matrix& p) {
  if (!p.is_square()) throw CertificateInvalidError("certificate matrix P must be square");
  Matrix inv;
  try {
    inv = inverse(p);
  } catch (const SingularityError&) {
    throw CertificateInvalidError("certificate matrix P is singular");
  }
  if (p.norm_one() * inv.norm_one() > kMaxCondition) {
    throw CertificateInvalidError("certificate matrix P is too ill-conditioned");
  }
  return inv;
}

double similarity_residual(const Matrix& p, const Matrix& p_inv, const Matrix& j, bool transpose) {
  const Matrix lhs = p * j * p_inv;
  const Matrix r = transpose ? lhs + j.transpose() : lhs + j;
  return r.norm_frobenius() / std::max(1.0, j.norm_frobenius());
}

bool inner_allowed(ClassTag outer, ClassTag inner) {
  if (outer == ClassTag::FInf) return inner == ClassTag::H || inner == ClassTag::FInf;
  return inner == ClassTag::H || inner == ClassTag::S || inner == ClassTag::F2;
}

}  // namespace

double class_relation_residual(const ClassCertificate& cert, const Matrix& jac) {
  if (!jac.is_square()) throw DimensionError("class check needs a square Jacobian");
  const std::size_t n = jac.rows();

  if (cert.tag == ClassTag::H || cert.tag == ClassTag::S) {
    if (cert.p.rows() != n) throw CertificateInvalidError("certificate P does not match the field dimension");
    const Matrix inv = checked_inverse(cert.p);
    return similarity_residual(cert.p, inv, jac, cert.tag == ClassTag::H);
  }

  const std::size_t m = cert.split.value_or(0);
  if (m >= n) throw CertificateInvalidError("block split must leave a nonempty y2 block");
  const std::size_t n2 = n - m;
  if (cert.p.rows() != n2) throw CertificateInvalidError("certificate P must act on the y2 block");
  const Matrix inv = checked_inverse(cert.p);
  const double scale = std::max(1.0, jac.norm_frobenius());

  double worst = 0.0;
  if (m > 0) {
    if (cert.inner.size() != 1) throw CertificateInvalidError("block certificate needs one inner certificate for u");
    const ClassCertificate& inner = cert.inner.front();
    if (!inner_allowed(cert.tag, inner.tag)) {
      throw CertificateInvalidError("inner certificate " + to_string(inner.tag) + " is not allowed inside " +
                                    to_string(cert.tag));
    }
    worst = jac.block(0, m, m, n2).norm_frobenius() / scale;
    worst = std::max(worst, class_relation_residual(inner, jac.block(0, 0, m, m)));
  }
  const Matrix d = jac.block(m, m, n2, n2);
  double rel = similarity_residual(cert.p, inv, d, true);
  if (cert.tag == ClassTag::F2) rel = std::min(rel, similarity_residual(cert.p, inv, d, false));
  return std::max(worst, rel);
}

ClassResiduals verify_class(const VectorFieldProblem& p, const ClassCertificate& cert, std::size_t samples,
                            std::uint64_t seed, double box) {
  if (samples == 0) throw RangeError("verify_class needs at least one sample");
  if (!(box > 0.0)) throw RangeError("sampling box must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-box, box);

  ClassResiduals r;
  r.samples = samples;
  double sum = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    Vector y(p.dim());
    for (auto& v : y) v = dist(rng);
    const double rf = class_relation_residual(cert, p.f_jac(y));
    const double rg = class_relation_residual(cert, p.g_jac(y));
    r.max_f = std::max(r.max_f, rf);
    r.max_g = std::max(r.max_g, rg);
    sum += std::max(rf, rg);
  }
  r.mean = sum / static_cast<double>(samples);
  return r;
}

ClassResiduals require_class(const VectorFieldProblem& p, const ClassCertificate& cert, std::size_t samples,
                             std::uint64_t seed, double box) {
  ClassResiduals r = verify_class(p, cert, samples, seed, box);
  if (!r.passed()) {
    std::ostringstream msg;
    msg << p.name << " does not satisfy the " << to_string(cert.tag) << " relation (max residual " << r.max()
        << ")";
    throw CertificateInvalidError(msg.str());
  }
  return r;
}

// ---- drift along trajectories ----------------------------------------------

double VolumeReport::max_deviation(double target) const {
  double m = 0.0;
  for (double d : per_step_det) m = std::max(m, std::abs(d - target));
  return m;
}

VolumeReport volume_drift(const Trajectory& tr, const VectorFieldProblem& p, const ButcherTableau& t,
                          const SolverConfig& cfg) {
  const VolumeAnalyzer an(p, t, cfg);
  VolumeReport rep;
  rep.h = cfg.h;
  const std::size_t m = tr.step_count();
  rep.per_step_det.reserve(m);
  rep.vp_residual.reserve(m);
  for (std::size_t n = 0; n < m; ++n) {
    try {
      const StepRecord rec = an.stages_at(tr.states[n]);
      const double d = an.volume_ratio(rec.stages);
      rep.per_step_det.push_back(d);
      rep.vp_residual.push_back(an.vp_condition(rec.stages).scaled_residual());
      rep.cumulative_log_drift += std::log(std::abs(d));
      rep.max_abs_det_minus_one = std::max(rep.max_abs_det_minus_one, std::abs(d - 1.0));
    } catch (const SingularityError& e) {
      throw SingularityError("step " + std::to_string(n + 1) + ": " + e.what(), e.pivot());
    }
  }
  return rep;
}

void write_volume_csv(std::ostream& out, const VolumeReport& report) {
  CsvWriter csv(out);
  csv.header({"step", "t", "det", "abs_det_minus_one", "vp_residual", "cum_log_drift"});
  double cum = 0.0;
  for (std::size_t n = 0; n < report.per_step_det.size(); ++n) {
    const double d = report.per_step_det[n];
    cum += std::log(std::abs(d));
    csv.row(n + 1, static_cast<double>(n + 1) * report.h, d, std::abs(d - 1.0), report.vp_residual[n], cum);
  }
}

}  // namespace vpei
