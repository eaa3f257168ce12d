// Command-line driver: integrations, convergence and volume studies, class checks.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "vpei/csv.hpp"
#include "vpei/harness.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitAssertion = 4;

// Options a config file may fill in; command-line values take precedence.
void apply_config(CLI::App& sub, const std::string& path) {
  if (path.empty()) return;
  for (const auto& [key, value] : vpei::load_config(path)) {
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt || key == "config") throw vpei::UsageError("config key '" + key + "' is not an option of " + sub.get_name());
    if (opt->count() > 0) continue;
    std::vector<std::string> parts;
    if (opt->get_items_expected_max() > 1) {
      std::string cur;
      for (char ch : value) {
        if (ch == ',') {
          parts.push_back(cur);
          cur.clear();
        } else {
          cur += ch;
        }
      }
      parts.push_back(cur);
    } else {
      parts.push_back(value);
    }
    for (const auto& p : parts) opt->add_result(p);
    opt->run_callback();
  }
}

void require(CLI::App& sub, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (sub.get_option(n)->count() == 0) {
      throw vpei::UsageError(std::string(n) + " is required (flag or config file)");
    }
  }
}

std::vector<double> parse_steps(const std::vector<std::string>& texts) {
  std::vector<double> out;
  for (const auto& t : texts) out.push_back(vpei::parse_step(t));
  return out;
}

void print_summary(const vpei::RunSummary& s) {
  std::cout << "problem=" << s.problem << " method=" << s.method << " h=" << vpei::format_real(s.h)
            << " t_end=" << vpei::format_real(s.t_end) << " steps=" << s.steps << " nonconverged=" << s.nonconverged
            << " rge=" << (s.rge ? vpei::format_real(*s.rge) : std::string("n/a"));
  if (s.volume) {
    std::cout << " max|det-target|=" << vpei::format_real(s.max_det_deviation)
              << " cum_log_drift=" << vpei::format_real(s.volume->cumulative_log_drift);
  }
  std::cout << " rule=" << (s.claim.asserted ? s.claim.rule : std::string("report-only"))
            << " wall=" << s.wall_seconds << "s";
  if (s.aborted) std::cout << " status=aborted (" << s.failure << ")";
  else if (s.assertion_failed()) std::cout << " status=assertion-failed";
  else std::cout << " status=ok";
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volume-preserving exponential integrators: runs, studies and class checks"};
  app.set_help_flag("--help", "print help and exit");
  app.require_subcommand(1);

  std::string problem, method, h_text, t_end_text = "", out_dir = ".", tableau, config, cert;
  std::vector<std::string> methods, h_list;
  std::uint64_t seed = 0;
  bool assert_flag = true;
  bool reference = false;

  auto* run = app.add_subcommand("run", "integrate one (problem, method, h) and write CSV reports");
  run->add_option("--problem", problem, "problem name (see `list`)");
  run->add_option("--method", method, "method name or tableau file");
  run->add_option("--h", h_text, "step size, fractions allowed (1/200)");
  run->add_option("--t-end", t_end_text, "final time, a multiple of h");
  run->add_option("--out-dir", out_dir, "directory for CSV output");
  run->add_option("--seed", seed, "seed for synthetic problems");
  run->add_option("--tableau", tableau, "tableau file replacing the method's tableau");
  run->add_flag("--assert,!--no-assert", assert_flag, "fail (exit 4) when an asserted determinant law is violated");
  run->add_flag("--reference", reference, "compute a self-converged reference when no exact solution exists");
  run->add_option("--config", config, "key=value file with the same keys as the flags");

  auto* conv = app.add_subcommand("converge", "relative global errors and fitted orders");
  conv->add_option("--problem", problem, "problem name");
  conv->add_option("--method", methods, "methods (repeat or comma-separate)")->delimiter(',');
  conv->add_option("--h", h_list, "step sizes (repeat or comma-separate)")->delimiter(',');
  conv->add_option("--t-end", t_end_text, "final time");
  conv->add_option("--out-dir", out_dir, "directory for convergence.csv");
  conv->add_option("--seed", seed, "seed for synthetic problems");
  conv->add_option("--config", config, "key=value file");

  auto* vol = app.add_subcommand("volume", "per-step determinant tracking with asserted determinant laws");
  vol->add_option("--problem", problem, "problem name");
  vol->add_option("--method", methods, "methods (repeat or comma-separate)")->delimiter(',');
  vol->add_option("--h", h_list, "step sizes (repeat or comma-separate)")->delimiter(',');
  vol->add_option("--t-end", t_end_text, "final time");
  vol->add_option("--out-dir", out_dir, "directory for summary.csv and per-run CSVs");
  vol->add_option("--seed", seed, "seed for synthetic problems");
  vol->add_flag("--assert,!--no-assert", assert_flag, "exit 4 when an asserted row fails");
  vol->add_option("--config", config, "key=value file");

  auto* cls = app.add_subcommand("classify", "check a class certificate on sampled states");
  cls->add_option("--problem", problem, "problem name");
  cls->add_option("--cert", cert, "certificate file (tag=, P=, split=, inner.*)");
  cls->add_option("--seed", seed, "sampling seed");
  cls->add_option("--config", config, "key=value file");

  auto* lst = app.add_subcommand("list", "list problems and methods");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (lst->parsed()) {
      std::cout << "problems:";
      for (const auto& p : vpei::problem_names()) std::cout << ' ' << p;
      std::cout << "\nmethods:";
      for (const auto& m : vpei::method_names()) std::cout << ' ' << m;
      std::cout << " <tableau-file>\n";
      return 0;
    }

    if (run->parsed()) {
      apply_config(*run, config);
      require(*run, {"--problem", "--method", "--h", "--t-end"});
      vpei::RunConfig cfg;
      cfg.problem = problem;
      cfg.method = method;
      cfg.h = vpei::parse_step(h_text);
      cfg.t_end = vpei::parse_step(t_end_text);
      cfg.out_dir = out_dir;
      cfg.seed = seed;
      if (!tableau.empty()) cfg.tableau = tableau;
      cfg.assert_volume = assert_flag;
      cfg.reference = reference;
      const vpei::RunSummary s = vpei::run(cfg);
      print_summary(s);
      return s.exit_code();
    }

    if (conv->parsed()) {
      apply_config(*conv, config);
      require(*conv, {"--problem", "--method", "--h", "--t-end"});
      const double t_end = vpei::parse_step(t_end_text);
      const auto r = vpei::converge_study(problem, methods, parse_steps(h_list), t_end, seed);
      std::filesystem::create_directories(out_dir);
      std::ofstream f(std::filesystem::path(out_dir) / "convergence.csv");
      vpei::write_convergence_csv(f, r, problem, t_end);
      vpei::write_convergence_csv(std::cout, r, problem, t_end);
      return 0;
    }

    if (vol->parsed()) {
      apply_config(*vol, config);
      require(*vol, {"--problem", "--method", "--h", "--t-end"});
      const double t_end = vpei::parse_step(t_end_text);
      const auto r = vpei::volume_study(problem, methods, parse_steps(h_list), t_end, seed);
      vpei::write_volume_study(out_dir, r, problem, t_end);
      bool aborted = false;
      for (const auto& row : r.rows) {
        std::cout << row.method << " h=" << vpei::format_real(row.h) << " max|det-target|="
                  << vpei::format_real(row.max_deviation) << ' '
                  << (row.claim.asserted ? row.claim.rule : std::string("report-only"))
                  << (row.aborted ? " aborted" : (row.passed() ? " ok" : " FAIL")) << '\n';
        aborted = aborted || row.aborted;
      }
      if (assert_flag && !r.all_passed()) return kExitAssertion;
      return aborted ? kExitNumerical : 0;
    }

    if (cls->parsed()) {
      apply_config(*cls, config);
      require(*cls, {"--problem", "--cert"});
      const auto r = vpei::classify(problem, vpei::load_certificate(cert), seed);
      const auto& res = r.residuals;
      const char* verdict = res.passed() ? "pass" : "fail";
      std::cout << "class " << vpei::to_string(r.certificate.tag) << " on " << problem << " (" << res.samples
                << " samples, tolerance " << res.tolerance << ")\n"
                << "  f' relation: max residual " << vpei::format_real(res.max_f) << '\n'
                << "  g' relation: max residual " << vpei::format_real(res.max_g) << '\n'
                << "  mean residual " << vpei::format_real(res.mean) << '\n'
                << verdict << '\n';
      return res.passed() ? 0 : kExitAssertion;
    }
  } catch (const vpei::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const vpei::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const vpei::CertificateInvalidError& e) {
    std::cerr << "invalid certificate: " << e.what() << '\n';
    return kExitUsage;
  } catch (const vpei::Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
