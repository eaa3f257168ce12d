#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vpei/integrators.hpp"
#include "vpei/problems.hpp"
#include "vpei/vpcheck.hpp"

namespace vpei {

/// Bad names, flags or config files; the CLI maps it to exit status 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

enum class StepperFamily { Ssei, Rk, Erkn, Rkn };

std::string to_string(StepperFamily f);

/// A registered method: a tableau plus the stepper that consumes it.
///   SSEI1 / SSEI2 / SSEI2EQ: midpoint / 2-stage Gauss / equal-node, exponential
///   SSRK1 / SSRK2:           midpoint / 2-stage Gauss, classical RK
///   ERKN1 / ERKN2EQ:         midpoint / equal-node, ERKN
///   RKN1 / RKN2EQ:           midpoint / equal-node, RKN
/// Any other name that is a readable tableau file runs as an SSEI method.
struct MethodSpec {
  std::string name;
  StepperFamily family = StepperFamily::Ssei;
  ButcherTableau tableau;
};

const std::vector<std::string>& method_names();

/// Resolve a method name; `tableau_override`, when set, replaces the
/// registered tableau while keeping the stepper family. Throws UsageError.
MethodSpec resolve_method(const std::string& name,
                          const std::optional<std::filesystem::path>& tableau_override = std::nullopt);

/// Resolve a problem name; throws UsageError for unknown names.
BenchmarkSpec resolve_problem(const std::string& name, std::uint64_t seed = 0);

/// Stepper for a (problem, method) pair. Exponential methods use the
/// second-order form when the problem has one. Throws UsageError when the
/// method needs a form the problem lacks (ERKN needs (q, p) form; RKN also
/// needs Omega = 0).
std::unique_ptr<Stepper> make_stepper(const BenchmarkSpec& b, const MethodSpec& m, const SolverConfig& cfg);

/// The first-order field whose exponential-integrator stages reproduce the
/// method's steps, used for determinant analysis. Classical RK methods
/// analyse the field with K folded into g.
VectorFieldProblem analysis_field(const BenchmarkSpec& b, const MethodSpec& m);

/// Whether a volume result covers (problem, method, h), and what the
/// per-step determinant must equal when it does.
struct VolumeClaim {
  bool asserted = false;
  std::string rule;     ///< identifier printed in CSV headers, empty when report-only
  double target = 1.0;  ///< expected per-step determinant
  std::string reason;   ///< why the claim is or is not asserted
};

/// Rules:
///   VP-H     class H certificate, symplectic tableau with nonzero weights
///   VP-S     class S certificate, one stage or equal nodes
///   VP-FINF  block-triangular certificate, symplectic tableau with nonzero weights
///   DAMPED   uncertified field with trace K != 0, one stage or equal nodes;
///            target e^{h trace K}
/// Classical RK methods are always report-only. The certificate is verified
/// (64 samples) before it is relied on.
VolumeClaim volume_claim(const BenchmarkSpec& b, const MethodSpec& m, double h);

/// Descriptions for the rule identifiers above.
std::string rule_description(const std::string& rule);

constexpr double kVolumeAssertTolerance = 1e-9;

struct RunConfig {
  std::string problem;
  std::string method;
  double h = 0.0;
  double t_end = 0.0;
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> tableau;
  bool assert_volume = true;
  bool volume = true;         ///< write the determinant report
  bool reference = false;     ///< compute a self-converged reference when no exact solution exists
  double fp_tol = 1e-16;
  int fp_max_iter = 100;
};

struct RunSummary {
  std::string problem;
  std::string method;
  double h = 0.0;
  double t_end = 0.0;
  std::size_t steps = 0;
  int nonconverged = 0;
  std::optional<double> rge;
  std::optional<VolumeReport> volume;
  VolumeClaim claim;
  bool assert_enabled = true;
  double max_det_deviation = 0.0;  ///< max |det - claim.target|
  bool aborted = false;
  std::string failure;
  double wall_seconds = 0.0;

  bool assertion_failed() const;
  /// 0 ok, 3 numerical failure, 4 assertion failure.
  int exit_code() const;
};

/// Integrate and write trajectory.csv, flow_snapshots.csv, volume.csv and
/// summary.csv into cfg.out_dir (created if needed). A diverged run still
/// writes the partial trajectory and returns with `aborted` set.
RunSummary run(const RunConfig& cfg);

/// Same as run() but writes nothing.
RunSummary run_in_memory(const RunConfig& cfg);

struct ConvergenceRow {
  std::string method;
  double h = 0.0;
  double rge = 0.0;  ///< +inf when the run diverged
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::map<std::string, std::optional<double>> slope;  ///< per method; empty with fewer than two finite errors
};

/// Least-squares slope of log(err) against log(h) over finite, positive
/// errors; nullopt with fewer than two usable points.
std::optional<double> fitted_slope(const std::vector<double>& h, const std::vector<double>& err);

/// RGE per (method, h) at t_end against the exact or reference solution, and
/// the fitted slope per method. Configs run concurrently; output order is
/// the input order.
ConvergenceResult converge_study(const std::string& problem, const std::vector<std::string>& methods,
                                 const std::vector<double>& h_list, double t_end, std::uint64_t seed = 0);

/// Columns: method, h, rge, slope.
void write_convergence_csv(std::ostream& out, const ConvergenceResult& r, const std::string& problem, double t_end);

struct VolumeStudyRow {
  std::string method;
  double h = 0.0;
  std::size_t steps = 0;
  VolumeClaim claim;
  double max_deviation = 0.0;
  double cumulative_log_drift = 0.0;
  double max_vp_residual = 0.0;
  bool aborted = false;
  std::string failure;

  bool passed() const { return !claim.asserted || (!aborted && max_deviation <= kVolumeAssertTolerance); }
};

struct VolumeStudyResult {
  std::vector<VolumeStudyRow> rows;
  std::vector<VolumeReport> reports;  ///< parallel to rows; empty report for aborted runs
  bool all_passed() const;
};

VolumeStudyResult volume_study(const std::string& problem, const std::vector<std::string>& methods,
                               const std::vector<double>& h_list, double t_end, std::uint64_t seed = 0);

/// Writes summary.csv plus volume_<method>_<index>.csv per row.
void write_volume_study(const std::filesystem::path& out_dir, const VolumeStudyResult& r, const std::string& problem,
                        double t_end);

/// key=value certificate text:
///   tag=H|S|F_inf|F_2
///   P=row;row;...       (entries separated by commas or spaces)
///   split=m             (block classes)
///   inner.tag=..., inner.P=..., inner.split=...
/// '#' starts a comment. Throws ParseError.
ClassCertificate parse_certificate(const std::string& text);
ClassCertificate load_certificate(const std::filesystem::path& path);
std::string format_certificate(const ClassCertificate& c);

struct ClassifyResult {
  ClassCertificate certificate;
  ClassResiduals residuals;
};

ClassifyResult classify(const std::string& problem, const ClassCertificate& cert, std::uint64_t seed = 0);

/// key=value lines with '#' comments; keys are long flag names without the
/// leading dashes. Throws ParseError on malformed lines or repeated keys.
std::map<std::string, std::string> parse_config(const std::string& text);
std::map<std::string, std::string> load_config(const std::filesystem::path& path);

/// Real number from text, exact fractions allowed ("1/200").
double parse_step(const std::string& text);

}  // namespace vpei
