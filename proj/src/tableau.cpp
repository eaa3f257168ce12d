#include "vpei/tableau.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "vpei/errors.hpp"
#include "vpei/matfun.hpp"

namespace vpei {

void ButcherTableau::validate() const {
  const std::size_t s = b.size();
  if (s == 0) throw DimensionError("tableau needs at least one stage");
  if (c.size() != s || a.rows() != s || a.cols() != s) {
    throw DimensionError("tableau sizes of c, b and A disagree");
  }
  if (!all_finite(c) || !all_finite(b) || !a.all_finite()) {
    throw DomainError("tableau entries must be finite");
  }
}

bool ButcherTableau::equal_nodes() const {
  for (double ci : c)
    if (ci != c.front()) return false;
  return true;
}

bool ButcherTableau::weights_nonzero() const {
  for (double bi : b)
    if (bi == 0.0) return false;
  return true;
}

ButcherTableau gauss_legendre(int s) {
  if (s == 1) return {{0.5}, {1.0}, Matrix{{0.5}}};
  if (s == 2) {
    const double r = std::sqrt(3.0) / 6.0;
    return {{0.5 - r, 0.5 + r}, {0.5, 0.5}, Matrix{{0.25, 0.25 - r}, {0.25 + r, 0.25}}};
  }
  throw UnsupportedError("gauss_legendre: only 1 and 2 stages are provided");
}

ButcherTableau equal_node_two_stage() {
  return {{0.5, 0.5}, {0.5, 0.5}, Matrix{{0.25, 0.25}, {0.25, 0.25}}};
}

ButcherTableau explicit_euler() { return {{0.0}, {1.0}, Matrix{{0.0}}}; }

double symplecticity_residual(const ButcherTableau& t) {
  t.validate();
  const std::size_t s = t.stages();
  Matrix r(s, s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      r(i, j) = t.b[i] * t.a(i, j) + t.a(j, i) * t.b[j] - t.b[i] * t.b[j];
  return r.norm_frobenius();
}

bool is_symplectic(const ButcherTableau& t) {
  const double bb = norm2(t.b);
  return symplecticity_residual(t) <= 1e-14 * (1.0 + bb * bb);
}

bool passes_ssei_gate(const ButcherTableau& t) { return is_symplectic(t) && t.weights_nonzero(); }

bool order_check(const ButcherTableau& t, int p) {
  if (p < 1 || p > 4) throw UnsupportedError("order_check: supported orders are 1..4");
  t.validate();
  const std::size_t s = t.stages();
  constexpr double tol = 1e-13;
  const auto& b = t.b;
  const Matrix& a = t.a;

  Vector c(s, 0.0);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) c[i] += a(i, j);

  auto weighted = [&](const Vector& v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s; ++i) acc += b[i] * v[i];
    return acc;
  };
  auto pow_c = [&](int k) {
    Vector v(s);
    for (std::size_t i = 0; i < s; ++i) v[i] = std::pow(c[i], k);
    return v;
  };
  auto holds = [&](double value, double target) { return std::abs(value - target) <= tol; };

  if (!holds(weighted(Vector(s, 1.0)), 1.0)) return false;
  if (p == 1) return true;

  for (std::size_t i = 0; i < s; ++i)
    if (std::abs(t.c[i] - c[i]) > tol) return false;
  if (!holds(weighted(c), 0.5)) return false;
  if (p == 2) return true;

  const Vector ac = a * c;
  if (!holds(weighted(pow_c(2)), 1.0 / 3.0)) return false;
  if (!holds(weighted(ac), 1.0 / 6.0)) return false;
  if (p == 3) return true;

  Vector c_ac(s);
  for (std::size_t i = 0; i < s; ++i) c_ac[i] = c[i] * ac[i];
  if (!holds(weighted(pow_c(3)), 0.25)) return false;
  if (!holds(weighted(c_ac), 1.0 / 8.0)) return false;
  if (!holds(weighted(a * pow_c(2)), 1.0 / 12.0)) return false;
  if (!holds(weighted(a * ac), 1.0 / 24.0)) return false;
  return true;
}

ExpCoefficients build_exp_coefficients(const ButcherTableau& t, double h, const Matrix& k) {
  t.validate();
  if (!k.is_square()) throw DimensionError("build_exp_coefficients: K must be square");
  const std::size_t s = t.stages();

  // Many exponents coincide (c_i - c_j = 0 on the diagonal, equal nodes, ...).
  std::map<double, Matrix> cache;
  auto exp_of = [&](double x) -> const Matrix& {
    auto it = cache.find(x);
    if (it == cache.end()) it = cache.emplace(x, expm((x * h) * k)).first;
    return it->second;
  };

  ExpCoefficients out;
  out.s = s;
  out.abar.assign(s, std::vector<Matrix>(s));
  out.bbar.resize(s);
  out.node_exponentials.resize(s);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) out.abar[i][j] = t.a(i, j) * exp_of(t.c[i] - t.c[j]);
    out.bbar[i] = t.b[i] * exp_of(1.0 - t.c[i]);
    out.node_exponentials[i] = exp_of(t.c[i]);
  }
  out.step_exponential = exp_of(1.0);
  return out;
}

namespace {

class ExpressionParser {
 public:
  explicit ExpressionParser(std::string_view text) : text_(text) {}

  double parse() {
    const double v = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ParseError("cannot parse '" + std::string(text_) + "': " + why);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char ch) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == ch) {
      ++pos_;
      return true;
    }
    return false;
  }

  double expr() {
    double v = term();
    for (;;) {
      if (accept('+'))
        v += term();
      else if (accept('-'))
        v -= term();
      else
        return v;
    }
  }

  double term() {
    double v = unary();
    for (;;) {
      if (accept('*')) {
        v *= unary();
      } else if (accept('/')) {
        const double d = unary();
        if (d == 0.0) fail("division by zero");
        v /= d;
      } else {
        return v;
      }
    }
  }

  double unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return primary();
  }

  double primary() {
    skip_ws();
    if (accept('(')) {
      const double v = expr();
      if (!accept(')')) fail("missing ')'");
      return v;
    }
    if (text_.substr(pos_, 4) == "sqrt") {
      pos_ += 4;
      if (!accept('(')) fail("expected '(' after sqrt");
      const double v = expr();
      if (!accept(')')) fail("missing ')'");
      if (v < 0.0) fail("sqrt of a negative number");
      return std::sqrt(v);
    }
    double v = 0.0;
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr == first) fail("expected a number");
    pos_ += static_cast<std::size_t>(ptr - first);
    return v;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

}  // namespace

double parse_real(std::string_view text) {
  const double v = ExpressionParser(text).parse();
  if (!std::isfinite(v)) throw ParseError("expression '" + std::string(text) + "' is not finite");
  return v;
}

ButcherTableau parse_tableau(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      lines.push_back(line);
    }
  }
  if (lines.empty()) throw ParseError("tableau: empty input");

  const double s_value = parse_real(lines[0]);
  if (s_value < 1.0 || s_value != std::floor(s_value)) {
    throw ParseError("tableau: stage count must be a positive integer");
  }
  const auto s = static_cast<std::size_t>(s_value);
  if (lines.size() != s + 2) {
    throw ParseError("tableau: expected " + std::to_string(s + 2) + " non-comment lines");
  }

  ButcherTableau t{std::vector<double>(s), std::vector<double>(s), Matrix(s, s)};
  for (std::size_t i = 0; i < s; ++i) {
    const std::string& line = lines[i + 1];
    const auto bar = line.find('|');
    if (bar == std::string::npos) throw ParseError("tableau: stage row lacks '|': " + line);
    t.c[i] = parse_real(line.substr(0, bar));
    const auto row = split_ws(line.substr(bar + 1));
    if (row.size() != s) throw ParseError("tableau: stage row needs " + std::to_string(s) + " entries");
    for (std::size_t j = 0; j < s; ++j) t.a(i, j) = parse_real(row[j]);
  }
  const auto weights = split_ws(lines[s + 1]);
  if (weights.size() != s) throw ParseError("tableau: weight row needs " + std::to_string(s) + " entries");
  for (std::size_t j = 0; j < s; ++j) t.b[j] = parse_real(weights[j]);
  t.validate();
  return t;
}

ButcherTableau load_tableau(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open tableau file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_tableau(buf.str());
}

std::string format_tableau(const ButcherTableau& t) {
  std::ostringstream out;
  out.precision(17);
  out << t.stages() << '\n';
  for (std::size_t i = 0; i < t.stages(); ++i) {
    out << t.c[i] << " |";
    for (std::size_t j = 0; j < t.stages(); ++j) out << ' ' << t.a(i, j);
    out << '\n';
  }
  for (std::size_t j = 0; j < t.stages(); ++j) out << (j ? " " : "") << t.b[j];
  out << '\n';
  return out.str();
}

}  // namespace vpei
