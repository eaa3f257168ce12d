#include "vpei/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "vpei/csv.hpp"

namespace vpei {

std::string to_string(StepperFamily f) {
  switch (f) {
    case StepperFamily::Ssei: return "exponential";
    case StepperFamily::Rk: return "runge-kutta";
    case StepperFamily::Erkn: return "erkn";
    case StepperFamily::Rkn: return "rkn";
  }
  return "?";
}

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {"SSEI1", "SSEI2", "SSEI2EQ", "SSRK1",  "SSRK2",
                                                 "ERKN1", "ERKN2EQ", "RKN1",  "RKN2EQ"};
  return names;
}

MethodSpec resolve_method(const std::string& name, const std::optional<std::filesystem::path>& tableau_override) {
  MethodSpec m;
  m.name = name;
  if (name == "SSEI1") m = {name, StepperFamily::Ssei, gauss_legendre(1)};
  else if (name == "SSEI2") m = {name, StepperFamily::Ssei, gauss_legendre(2)};
  else if (name == "SSEI2EQ") m = {name, StepperFamily::Ssei, equal_node_two_stage()};
  else if (name == "SSRK1") m = {name, StepperFamily::Rk, gauss_legendre(1)};
  else if (name == "SSRK2") m = {name, StepperFamily::Rk, gauss_legendre(2)};
  else if (name == "ERKN1") m = {name, StepperFamily::Erkn, gauss_legendre(1)};
  else if (name == "ERKN2EQ") m = {name, StepperFamily::Erkn, equal_node_two_stage()};
  else if (name == "RKN1") m = {name, StepperFamily::Rkn, gauss_legendre(1)};
  else if (name == "RKN2EQ") m = {name, StepperFamily::Rkn, equal_node_two_stage()};
  else if (std::filesystem::is_regular_file(name)) m = {name, StepperFamily::Ssei, load_tableau(name)};
  else throw UsageError("unknown method '" + name + "'");

  if (tableau_override) {
    if (!std::filesystem::is_regular_file(*tableau_override)) {
      throw UsageError("tableau file " + tableau_override->string() + " does not exist");
    }
    m.tableau = load_tableau(*tableau_override);
  }
  return m;
}

BenchmarkSpec resolve_problem(const std::string& name, std::uint64_t seed) {
  if (!is_problem_name(name)) throw UsageError("unknown problem '" + name + "'");
  return make_problem(name, seed);
}

std::unique_ptr<Stepper> make_stepper(const BenchmarkSpec& b, const MethodSpec& m, const SolverConfig& cfg) {
  switch (m.family) {
    case StepperFamily::Ssei:
      if (b.second_order) return std::make_unique<SecondOrderEiStepper>(*b.second_order, m.tableau, cfg);
      return std::make_unique<SseiStepper>(b.field, m.tableau, cfg);
    case StepperFamily::Rk:
      return std::make_unique<RkStepper>(b.field, m.tableau, cfg);
    case StepperFamily::Erkn:
      if (!b.partitioned) throw UsageError(m.name + " needs a problem in (q, p) form; " + b.id + " is not");
      return std::make_unique<ErknStepper>(*b.partitioned, m.tableau, cfg);
    case StepperFamily::Rkn:
      if (!b.partitioned || b.partitioned->omega.max_abs() != 0.0) {
        throw UsageError(m.name + " needs q'' = g(q) with Omega = 0; " + b.id + " is not of that form");
      }
      return std::make_unique<RknStepper>(*b.partitioned, m.tableau, cfg);
  }
  throw UsageError("unhandled stepper family");
}

VectorFieldProblem analysis_field(const BenchmarkSpec& b, const MethodSpec& m) {
  return m.family == StepperFamily::Rk ? as_rk_problem(b.field) : b.field;
}

std::string rule_description(const std::string& rule) {
  if (rule == "VP-H") return "class H field (P f' P^-1 = -f'^T) with a symplectic tableau of nonzero weights: det = 1";
  if (rule == "VP-S") return "class S field (P f' P^-1 = -f') with one stage or equal nodes: det = 1";
  if (rule == "VP-FINF") return "block-triangular field with transpose-similar diagonal blocks, symplectic tableau: det = 1";
  if (rule == "DAMPED") return "linear part with nonzero trace, one stage or equal nodes: det = exp(h trace K)";
  return "report only";
}

VolumeClaim volume_claim(const BenchmarkSpec& b, const MethodSpec& m, double h) {
  VolumeClaim c;
  const double trace = b.field.k.trace();
  c.target = std::exp(h * trace);
  if (m.family == StepperFamily::Rk) {
    c.reason = "classical Runge-Kutta method";
    return c;
  }
  const ButcherTableau& t = m.tableau;
  const bool gate = passes_ssei_gate(t);
  const bool narrow = t.stages() == 1 || t.equal_nodes();
  if (!gate) {
    c.reason = "tableau is not symplectic or has a zero weight";
    return c;
  }

  const auto& cert = b.field.certificate;
  if (!cert) {
    if (trace != 0.0 && narrow) {
      c = {true, "DAMPED", c.target, "damped linear part, one stage or equal nodes"};
    } else {
      c.reason = "no class certificate";
    }
    return c;
  }
  if (!verify_class(b.field, *cert).passed()) {
    c.reason = "certificate does not verify";
    return c;
  }
  switch (cert->tag) {
    case ClassTag::H: return {true, "VP-H", c.target, "class H"};
    case ClassTag::FInf: return {true, "VP-FINF", c.target, "block-triangular class"};
    case ClassTag::S:
      if (narrow) return {true, "VP-S", c.target, "class S, one stage or equal nodes"};
      c.reason = "class S but distinct nodes";
      return c;
    case ClassTag::F2: c.reason = "F_2 class is report-only"; return c;
  }
  return c;
}

// ---- run -------------------------------------------------------------------

bool RunSummary::assertion_failed() const {
  return assert_enabled && claim.asserted && volume && max_det_deviation > kVolumeAssertTolerance;
}

int RunSummary::exit_code() const {
  if (aborted) return 3;
  if (assertion_failed()) return 4;
  return 0;
}

namespace {

SolverConfig solver_config(const RunConfig& cfg) {
  SolverConfig sc{cfg.h, cfg.fp_tol, cfg.fp_max_iter};
  try {
    sc.validate();
    grid_steps(cfg.h, cfg.t_end);
  } catch (const RangeError& e) {
    throw UsageError(e.what());
  } catch (const PreconditionError& e) {
    throw UsageError(e.what());
  }
  return sc;
}

struct RunOutput {
  RunSummary summary;
  Trajectory trajectory;
};

RunOutput execute(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const BenchmarkSpec b = resolve_problem(cfg.problem, cfg.seed);
  const MethodSpec m = resolve_method(cfg.method, cfg.tableau);
  const SolverConfig sc = solver_config(cfg);
  const auto stepper = make_stepper(b, m, sc);

  RunOutput out;
  RunSummary& s = out.summary;
  s.problem = b.id;
  s.method = m.name;
  s.h = cfg.h;
  s.t_end = cfg.t_end;
  s.assert_enabled = cfg.assert_volume;
  s.claim = volume_claim(b, m, cfg.h);

  try {
    out.trajectory = integrate(*stepper, b.y0, cfg.t_end);
  } catch (const IntegrationAborted& e) {
    out.trajectory = e.partial();
    s.aborted = true;
    s.failure = e.what();
  }
  const Trajectory& tr = out.trajectory;
  s.steps = tr.step_count();
  s.nonconverged = tr.nonconverged;

  if (!s.aborted) {
    if (b.has_exact()) {
      s.rge = relative_global_error(tr.back(), b.field.exact(cfg.t_end));
    } else if (cfg.reference) {
      s.rge = relative_global_error(tr.back(), reference_solution(b, cfg.t_end, {cfg.h}));
    }
  }

  if (cfg.volume && tr.step_count() > 0) {
    try {
      s.volume = volume_drift(tr, analysis_field(b, m), m.tableau, sc);
      s.max_det_deviation = s.volume->max_deviation(s.claim.target);
    } catch (const Error& e) {
      if (!s.aborted) {
        s.aborted = true;
        s.failure = std::string("volume analysis failed: ") + e.what();
      }
    }
  }
  s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& tr, bool snapshots_only) {
  CsvWriter csv(os);
  const std::size_t d = tr.states.empty() ? 0 : tr.states.front().size();
  os << "t";
  for (std::size_t i = 0; i < d; ++i) os << ",y" << i;
  os << '\n';
  for (std::size_t n = 0; n < tr.states.size(); ++n) {
    const double t = tr.times[n];
    if (snapshots_only) {
      const double half = std::round(2.0 * t) / 2.0;
      if (std::abs(t - half) > 1e-9 * std::max(1.0, t)) continue;
    }
    Vector row{t};
    row.insert(row.end(), tr.states[n].begin(), tr.states[n].end());
    csv.row_range(row);
  }
}

std::string optional_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

void write_run_header(CsvWriter& csv, const RunSummary& s) {
  csv.comment("problem=" + s.problem + " method=" + s.method + " h=" + format_real(s.h) +
              " t_end=" + format_real(s.t_end));
  if (s.claim.asserted) {
    csv.comment("asserted rule " + s.claim.rule + ": " + rule_description(s.claim.rule));
  } else {
    csv.comment("report only: " + s.claim.reason);
  }
}

template <class Fn>
auto parallel_map(std::size_t count, Fn fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<std::optional<R>> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(count, std::thread::hardware_concurrency()));
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        results[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  std::vector<R> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*results[i]));
  }
  return out;
}

}  // namespace

RunSummary run_in_memory(const RunConfig& cfg) { return execute(cfg).summary; }

RunSummary run(const RunConfig& cfg) {
  RunOutput out = execute(cfg);
  const RunSummary& s = out.summary;
  std::filesystem::create_directories(cfg.out_dir);

  {
    std::ofstream f(cfg.out_dir / "trajectory.csv");
    write_trajectory_csv(f, out.trajectory, false);
  }
  {
    std::ofstream f(cfg.out_dir / "flow_snapshots.csv");
    write_trajectory_csv(f, out.trajectory, true);
  }
  if (s.volume) {
    std::ofstream f(cfg.out_dir / "volume.csv");
    CsvWriter csv(f);
    write_run_header(csv, s);
    write_volume_csv(f, *s.volume);
  }
  {
    std::ofstream f(cfg.out_dir / "summary.csv");
    CsvWriter csv(f);
    write_run_header(csv, s);
    csv.header({"problem", "method", "h", "t_end", "steps", "nonconverged", "rge", "det_target",
                "max_abs_det_minus_target", "cum_log_drift", "asserted", "rule", "status"});
    const std::string status = s.aborted ? "aborted" : (s.assertion_failed() ? "fail" : "ok");
    csv.row(s.problem, s.method, s.h, s.t_end, s.steps, s.nonconverged, optional_real(s.rge), s.claim.target,
            s.volume ? format_real(s.max_det_deviation) : std::string(),
            s.volume ? format_real(s.volume->cumulative_log_drift) : std::string(),
            s.claim.asserted && s.assert_enabled ? "yes" : "no", s.claim.rule, status);
  }
  return s;
}

// ---- convergence -----------------------------------------------------------

std::optional<double> fitted_slope(const std::vector<double>& h, const std::vector<double>& err) {
  if (h.size() != err.size()) throw DimensionError("fitted_slope: length mismatch");
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i] > 0.0 && err[i] > 0.0 && std::isfinite(err[i])) pts.emplace_back(std::log(h[i]), std::log(err[i]));
  if (pts.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0.0, sxx = 0.0;
  for (auto [x, y] : pts) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

ConvergenceResult converge_study(const std::string& problem, const std::vector<std::string>& methods,
                                 const std::vector<double>& h_list, double t_end, std::uint64_t seed) {
  if (methods.empty() || h_list.empty()) throw UsageError("converge: need at least one method and one step size");
  const BenchmarkSpec b = resolve_problem(problem, seed);
  for (const auto& m : methods) resolve_method(m);
  for (double h : h_list) {
    RunConfig probe;
    probe.h = h;
    probe.t_end = t_end;
    solver_config(probe);
  }
  const double h_min = *std::min_element(h_list.begin(), h_list.end());
  const Vector ref = reference_solution(b, t_end, {h_min});

  const std::size_t jobs = methods.size() * h_list.size();
  auto rges = parallel_map(jobs, [&](std::size_t i) {
    const BenchmarkSpec local = resolve_problem(problem, seed);
    const MethodSpec m = resolve_method(methods[i / h_list.size()]);
    const SolverConfig sc{h_list[i % h_list.size()], 1e-16, 100};
    try {
      const auto stepper = make_stepper(local, m, sc);
      return relative_global_error(integrate(*stepper, local.y0, t_end).back(), ref);
    } catch (const IntegrationAborted&) {
      return std::numeric_limits<double>::infinity();
    }
  });

  ConvergenceResult r;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    std::vector<double> errs;
    for (std::size_t hi = 0; hi < h_list.size(); ++hi) {
      const double e = rges[mi * h_list.size() + hi];
      r.rows.push_back({methods[mi], h_list[hi], e});
      errs.push_back(e);
    }
    r.slope[methods[mi]] = fitted_slope(h_list, errs);
  }
  return r;
}

void write_convergence_csv(std::ostream& out, const ConvergenceResult& r, const std::string& problem, double t_end) {
  CsvWriter csv(out);
  csv.comment("problem=" + problem + " t_end=" + format_real(t_end));
  csv.comment("rge = ||y_N - y_ref(t_end)||_2 / ||y_ref(t_end)||_2; slope = least-squares fit of log rge on log h");
  csv.header({"method", "h", "rge", "slope"});
  for (const auto& row : r.rows) csv.row(row.method, row.h, row.rge, optional_real(r.slope.at(row.method)));
}

// ---- volume study ----------------------------------------------------------

bool VolumeStudyResult::all_passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const VolumeStudyRow& r) { return r.passed(); });
}

VolumeStudyResult volume_study(const std::string& problem, const std::vector<std::string>& methods,
                               const std::vector<double>& h_list, double t_end, std::uint64_t seed) {
  if (methods.empty() || h_list.empty()) throw UsageError("volume: need at least one method and one step size");
  const std::size_t jobs = methods.size() * h_list.size();
  auto summaries = parallel_map(jobs, [&](std::size_t i) {
    RunConfig cfg;
    cfg.problem = problem;
    cfg.method = methods[i / h_list.size()];
    cfg.h = h_list[i % h_list.size()];
    cfg.t_end = t_end;
    cfg.seed = seed;
    return run_in_memory(cfg);
  });

  VolumeStudyResult r;
  for (auto& s : summaries) {
    VolumeStudyRow row;
    row.method = s.method;
    row.h = s.h;
    row.steps = s.steps;
    row.claim = s.claim;
    row.aborted = s.aborted;
    row.failure = s.failure;
    if (s.volume) {
      row.max_deviation = s.max_det_deviation;
      row.cumulative_log_drift = s.volume->cumulative_log_drift;
      for (double v : s.volume->vp_residual) row.max_vp_residual = std::max(row.max_vp_residual, std::abs(v));
    }
    r.rows.push_back(std::move(row));
    r.reports.push_back(s.volume.value_or(VolumeReport{}));
  }
  return r;
}

void write_volume_study(const std::filesystem::path& out_dir, const VolumeStudyResult& r, const std::string& problem,
                        double t_end) {
  std::filesystem::create_directories(out_dir);
  std::ofstream f(out_dir / "summary.csv");
  CsvWriter csv(f);
  csv.comment("problem=" + problem + " t_end=" + format_real(t_end) +
              " tolerance=" + format_real(kVolumeAssertTolerance));
  std::vector<std::string> rules;
  for (const auto& row : r.rows)
    if (row.claim.asserted && std::find(rules.begin(), rules.end(), row.claim.rule) == rules.end())
      rules.push_back(row.claim.rule);
  for (const auto& rule : rules) csv.comment(rule + ": " + rule_description(rule));
  csv.header({"method", "h", "steps", "det_target", "max_abs_det_minus_target", "cum_log_drift", "max_vp_residual",
              "asserted", "rule", "status", "file"});

  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    std::string stem;
    for (char ch : std::filesystem::path(row.method).filename().string())
      stem += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
    const std::string file = "volume_" + stem + "_" + std::to_string(i) + ".csv";
    const std::string status = row.aborted ? "aborted" : (!row.claim.asserted ? "report" : (row.passed() ? "pass" : "fail"));
    csv.row(row.method, row.h, row.steps, row.claim.target, row.max_deviation, row.cumulative_log_drift,
            row.max_vp_residual, row.claim.asserted ? "yes" : "no", row.claim.rule, status, file);

    std::ofstream vf(out_dir / file);
    CsvWriter vcsv(vf);
    vcsv.comment("problem=" + problem + " method=" + row.method + " h=" + format_real(row.h));
    vcsv.comment(row.claim.asserted ? row.claim.rule + ": " + rule_description(row.claim.rule)
                                    : "report only: " + row.claim.reason);
    write_volume_csv(vf, r.reports[i]);
  }
}

// ---- certificates and configs ----------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const char* what) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(std::string(what) + " line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(std::string(what) + " line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) {
      throw ParseError(std::string(what) + ": key '" + key + "' given twice");
    }
  }
  return kv;
}

Matrix parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream rin(text);
  for (std::string row; std::getline(rin, row, ';');) {
    for (char& ch : row)
      if (ch == ',') ch = ' ';
    std::istringstream ein(row);
    std::vector<double> vals;
    for (std::string tok; ein >> tok;) vals.push_back(parse_real(tok));
    if (vals.empty()) throw ParseError("matrix has an empty row");
    if (!rows.empty() && vals.size() != rows.front().size()) throw ParseError("matrix rows differ in length");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ParseError("matrix is empty");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  if (!m.is_square()) throw ParseError("certificate matrix must be square");
  return m;
}

ClassCertificate certificate_from(const std::map<std::string, std::string>& kv, const std::string& prefix) {
  auto get = [&](const std::string& key) -> const std::string* {
    const auto it = kv.find(prefix + key);
    return it == kv.end() ? nullptr : &it->second;
  };
  const std::string* tag = get("tag");
  const std::string* p = get("P");
  if (!tag || !p) throw ParseError("certificate needs " + prefix + "tag and " + prefix + "P");

  ClassCertificate c;
  c.tag = class_tag_from_string(*tag);
  c.p = parse_matrix(*p);
  if (const std::string* split = get("split")) {
    const double v = parse_real(*split);
    if (v < 0.0 || v != std::floor(v)) throw ParseError("split must be a non-negative integer");
    c.split = static_cast<std::size_t>(v);
  }
  if (get("inner.tag")) c.inner.push_back(certificate_from(kv, prefix + "inner."));
  return c;
}

void format_certificate_into(std::ostream& out, const ClassCertificate& c, const std::string& prefix) {
  out << prefix << "tag=" << to_string(c.tag) << '\n' << prefix << "P=";
  for (std::size_t i = 0; i < c.p.rows(); ++i) {
    if (i) out << ';';
    for (std::size_t j = 0; j < c.p.cols(); ++j) out << (j ? "," : "") << format_real(c.p(i, j));
  }
  out << '\n';
  if (c.split) out << prefix << "split=" << *c.split << '\n';
  for (const auto& in : c.inner) format_certificate_into(out, in, prefix + "inner.");
}

std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ParseError(std::string("cannot open ") + what + " " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

ClassCertificate parse_certificate(const std::string& text) {
  const auto kv = parse_key_values(text, "certificate");
  for (const auto& [key, value] : kv) {
    std::string base = key;
    while (base.rfind("inner.", 0) == 0) base = base.substr(6);
    if (base != "tag" && base != "P" && base != "split") throw ParseError("certificate: unknown key '" + key + "'");
  }
  return certificate_from(kv, "");
}

ClassCertificate load_certificate(const std::filesystem::path& path) {
  return parse_certificate(read_file(path, "certificate file"));
}

std::string format_certificate(const ClassCertificate& c) {
  std::ostringstream out;
  format_certificate_into(out, c, "");
  return out.str();
}

ClassifyResult classify(const std::string& problem, const ClassCertificate& cert, std::uint64_t seed) {
  const BenchmarkSpec b = resolve_problem(problem, seed);
  return {cert, verify_class(b.field, cert, 64, seed)};
}

std::map<std::string, std::string> parse_config(const std::string& text) {
  return parse_key_values(text, "config");
}

std::map<std::string, std::string> load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path, "config file"));
}

double parse_step(const std::string& text) { return parse_real(text); }

}  // namespace vpei
