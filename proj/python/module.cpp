// Python bindings for the integrators, the volume checks and the harness.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vpei/harness.hpp"
#include "vpei/matfun.hpp"

namespace py = pybind11;
using namespace vpei;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
  Matrix m(a.shape(0), a.shape(1));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = r(i, j);
  return m;
}

Array from_matrix(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) w(i, j) = m(i, j);
  return out;
}

Array from_states(const std::vector<Vector>& states) {
  const std::size_t n = states.empty() ? 0 : states.front().size();
  Array out({states.size(), n});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < states.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) w(i, j) = states[i][j];
  return out;
}

py::dict tableau_dict(const ButcherTableau& t) {
  py::dict d;
  d["c"] = t.c;
  d["b"] = t.b;
  d["a"] = from_matrix(t.a);
  return d;
}

ButcherTableau method_tableau(const std::string& method) { return resolve_method(method).tableau; }

// The field and tableau a method's determinant analysis uses.
VolumeAnalyzer analyzer(const std::string& problem, const std::string& method, double h, std::uint64_t seed) {
  const BenchmarkSpec b = resolve_problem(problem, seed);
  const MethodSpec m = resolve_method(method);
  SolverConfig cfg;
  cfg.h = h;
  return VolumeAnalyzer(analysis_field(b, m), m.tableau, cfg);
}

py::dict claim_dict(const VolumeClaim& c) {
  py::dict d;
  d["asserted"] = c.asserted;
  d["rule"] = c.rule;
  d["target"] = c.target;
  d["reason"] = c.reason;
  return d;
}

py::dict summary_dict(const RunSummary& s) {
  py::dict d;
  d["problem"] = s.problem;
  d["method"] = s.method;
  d["h"] = s.h;
  d["t_end"] = s.t_end;
  d["steps"] = s.steps;
  d["nonconverged"] = s.nonconverged;
  d["rge"] = s.rge;
  d["claim"] = claim_dict(s.claim);
  d["max_det_deviation"] = s.max_det_deviation;
  d["max_abs_det_minus_one"] = s.volume ? py::cast(s.volume->max_abs_det_minus_one) : py::none();
  d["cumulative_log_drift"] = s.volume ? py::cast(s.volume->cumulative_log_drift) : py::none();
  d["aborted"] = s.aborted;
  d["failure"] = s.failure;
  d["exit_code"] = s.exit_code();
  return d;
}

RunConfig run_config(const std::string& problem, const std::string& method, double h, double t_end,
                     std::uint64_t seed, bool reference) {
  RunConfig cfg;
  cfg.problem = problem;
  cfg.method = method;
  cfg.h = h;
  cfg.t_end = t_end;
  cfg.seed = seed;
  cfg.reference = reference;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Volume-preserving exponential integrators";

  auto base = py::register_exception<Error>(m, "VpeiError", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<CertificateInvalidError>(m, "CertificateInvalidError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());

  m.def("expm", [](const Array& a) { return from_matrix(expm(to_matrix(a))); }, py::arg("m"));
  m.def("phi", [](int k, const Array& a) { return from_matrix(phi(k, to_matrix(a))); }, py::arg("k"), py::arg("m"));
  m.def("det", [](const Array& a) { return det(to_matrix(a)); }, py::arg("m"));

  m.def(
      "jacobi_elliptic",
      [](double u, double modulus) {
        const EllipticValues v = jacobi_elliptic(u, modulus);
        return py::make_tuple(v.sn, v.cn, v.dn);
      },
      py::arg("u"), py::arg("modulus"), "(sn, cn, dn) for modulus k, parameter k^2.");

  m.def("problem_names", &problem_names);
  m.def("method_names", &method_names);
  m.def("tableau", [](const std::string& method) { return tableau_dict(method_tableau(method)); },
        py::arg("method"));
  m.def("gauss_legendre", [](int s) { return tableau_dict(gauss_legendre(s)); }, py::arg("s"));
  m.def("is_symplectic", [](const std::string& method) { return is_symplectic(method_tableau(method)); },
        py::arg("method"));

  m.def(
      "integrate",
      [](const std::string& problem, const std::string& method, double h, double t_end, std::uint64_t seed) {
        const BenchmarkSpec b = resolve_problem(problem, seed);
        SolverConfig cfg;
        cfg.h = h;
        const auto stepper = make_stepper(b, resolve_method(method), cfg);
        Trajectory tr;
        {
          py::gil_scoped_release release;
          tr = integrate(*stepper, b.y0, t_end);
        }
        return py::make_tuple(tr.times, from_states(tr.states));
      },
      py::arg("problem"), py::arg("method"), py::arg("h"), py::arg("t_end"), py::arg("seed") = 0,
      "Returns (times, states) with one row per grid point.");

  m.def(
      "run",
      [](const std::string& problem, const std::string& method, double h, double t_end,
         std::optional<std::filesystem::path> out_dir, std::uint64_t seed, bool reference) {
        RunConfig cfg = run_config(problem, method, h, t_end, seed, reference);
        RunSummary s;
        py::gil_scoped_release release;
        if (out_dir) {
          cfg.out_dir = *out_dir;
          s = run(cfg);
        } else {
          s = run_in_memory(cfg);
        }
        py::gil_scoped_acquire acquire;
        return summary_dict(s);
      },
      py::arg("problem"), py::arg("method"), py::arg("h"), py::arg("t_end"), py::arg("out_dir") = py::none(),
      py::arg("seed") = 0, py::arg("reference") = false,
      "Integrate with volume tracking; writes the CSV reports when out_dir is given.");

  m.def(
      "converge",
      [](const std::string& problem, const std::vector<std::string>& methods, const std::vector<double>& h_list,
         double t_end, std::uint64_t seed) {
        ConvergenceResult r;
        {
          py::gil_scoped_release release;
          r = converge_study(problem, methods, h_list, t_end, seed);
        }
        py::list rows;
        for (const auto& row : r.rows) {
          py::dict d;
          d["method"] = row.method;
          d["h"] = row.h;
          d["rge"] = row.rge;
          rows.append(d);
        }
        py::dict out;
        out["rows"] = rows;
        out["slope"] = r.slope;
        return out;
      },
      py::arg("problem"), py::arg("methods"), py::arg("h_list"), py::arg("t_end"), py::arg("seed") = 0);

  m.def(
      "volume",
      [](const std::string& problem, const std::vector<std::string>& methods, const std::vector<double>& h_list,
         double t_end, std::uint64_t seed) {
        VolumeStudyResult r;
        {
          py::gil_scoped_release release;
          r = volume_study(problem, methods, h_list, t_end, seed);
        }
        py::list rows;
        for (std::size_t i = 0; i < r.rows.size(); ++i) {
          const auto& row = r.rows[i];
          py::dict d;
          d["method"] = row.method;
          d["h"] = row.h;
          d["steps"] = row.steps;
          d["claim"] = claim_dict(row.claim);
          d["max_deviation"] = row.max_deviation;
          d["cumulative_log_drift"] = row.cumulative_log_drift;
          d["max_vp_residual"] = row.max_vp_residual;
          d["aborted"] = row.aborted;
          d["passed"] = row.passed();
          d["per_step_det"] = r.reports[i].per_step_det;
          rows.append(d);
        }
        return rows;
      },
      py::arg("problem"), py::arg("methods"), py::arg("h_list"), py::arg("t_end"), py::arg("seed") = 0);

  m.def(
      "step_jacobian",
      [](const std::string& problem, const std::string& method, double h, const Vector& y, std::uint64_t seed) {
        return from_matrix(analyzer(problem, method, h, seed).step_jacobian_at(y));
      },
      py::arg("problem"), py::arg("method"), py::arg("h"), py::arg("y"), py::arg("seed") = 0);
  m.def(
      "volume_ratio",
      [](const std::string& problem, const std::string& method, double h, const Vector& y, std::uint64_t seed) {
        return analyzer(problem, method, h, seed).volume_ratio_at(y);
      },
      py::arg("problem"), py::arg("method"), py::arg("h"), py::arg("y"), py::arg("seed") = 0);
  m.def(
      "vp_condition_residual",
      [](const std::string& problem, const std::string& method, double h, const Vector& y, std::uint64_t seed) {
        return analyzer(problem, method, h, seed).vp_condition_at(y).scaled_residual();
      },
      py::arg("problem"), py::arg("method"), py::arg("h"), py::arg("y"), py::arg("seed") = 0);

  m.def(
      "classify",
      [](const std::string& problem, const std::string& certificate, std::uint64_t seed) {
        const ClassifyResult r = classify(problem, parse_certificate(certificate), seed);
        py::dict d;
        d["passed"] = r.residuals.passed();
        d["max_f"] = r.residuals.max_f;
        d["max_g"] = r.residuals.max_g;
        d["mean"] = r.residuals.mean;
        d["samples"] = r.residuals.samples;
        return d;
      },
      py::arg("problem"), py::arg("certificate"), py::arg("seed") = 0,
      "Check a certificate given as key=value text against a problem's Jacobians.");
}
