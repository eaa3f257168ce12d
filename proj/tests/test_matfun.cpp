#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "vpei/errors.hpp"
#include "vpei/matfun.hpp"

using namespace vpei;
using oracle::max_abs_diff;
using oracle::rel_diff;

namespace {

Matrix flat_k(const Matrix& n, const Matrix& omega) {
  const std::size_t d = n.rows();
  Matrix k(2 * d, 2 * d);
  k.set_block(0, d, Matrix::identity(d));
  k.set_block(d, 0, -omega);
  k.set_block(d, d, n);
  return k;
}

Matrix assemble(const ExpBlocks& b) {
  const std::size_t d = b.e11.rows();
  Matrix m(2 * d, 2 * d);
  m.set_block(0, 0, b.e11);
  m.set_block(0, d, b.e12);
  m.set_block(d, 0, b.e21);
  m.set_block(d, d, b.e22);
  return m;
}

Matrix random_spd(std::size_t n, std::mt19937_64& rng) {
  const Matrix r = oracle::random_matrix(n, n, rng);
  return r.transpose() * r + Matrix::identity(n);
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace

TEST_CASE("expm of simple matrices") {
  CHECK(max_abs_diff(expm(Matrix::zeros(3, 3)), Matrix::identity(3)) == 0.0);

  const Matrix d = expm(Matrix{{1.0, 0.0}, {0.0, -1.0}});
  CHECK(d(0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
  CHECK(d(1, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(d(0, 1) == 0.0);

  const double t = 0.7;
  const Matrix m = t * Matrix{{0.0, 1.0}, {-1.0, 0.0}};
  const Matrix e = expm(m);
  CHECK(max_abs_diff(e, oracle::taylor_exp(m)) < 1e-15);
  CHECK(max_abs_diff(e, Matrix{{std::cos(t), std::sin(t)}, {-std::sin(t), std::cos(t)}}) < 1e-15);
}

TEST_CASE("expm matches a scaled Taylor oracle on random matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial % 6;
    const Matrix m = oracle::random_matrix(n, n, rng, 0.3 + trial * 0.25);
    CHECK(rel_diff(expm(m), oracle::taylor_exp_scaled(m)) < 1e-12);
  }
}

TEST_CASE("expm errors") {
  CHECK_THROWS_AS(expm(Matrix(2, 3)), DimensionError);
  Matrix bad = Matrix::identity(2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(expm(bad), RangeError);
  CHECK_THROWS_AS(expm(Matrix{{1e6, 0.0}, {0.0, 0.0}}), RangeError);
}

TEST_CASE("expm of commuting sums factorises") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = oracle::random_matrix(4, 4, rng, 0.5);
    const Matrix b = 0.5 * a + 0.3 * (a * a) - 0.2 * Matrix::identity(4);
    REQUIRE((a * b - b * a).max_abs() <= 1e-13);
    CHECK(rel_diff(expm(a + b), expm(a) * expm(b)) < 1e-10);
  }
}

TEST_CASE("det of expm is exp of trace") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 4;
    Matrix m = oracle::random_matrix(n, n, rng);
    m *= 5.0 / m.norm_one() * ((trial + 1) / 20.0);
    const double expected = std::exp(m.trace());
    CHECK(std::abs(det(expm(m)) - expected) / expected < 1e-10);
  }
}

TEST_CASE("phi functions") {
  for (int k = 0; k <= 4; ++k) {
    CHECK(max_abs_diff(phi(k, Matrix::zeros(3, 3)), (1.0 / factorial(k)) * Matrix::identity(3)) < 1e-16);
  }

  const double z = 0.3;
  const double phi1 = phi(1, Matrix{{z}})(0, 0);
  const double phi2 = phi(2, Matrix{{z}})(0, 0);
  CHECK(phi1 == doctest::Approx(oracle::phi_quadrature(1, z)).epsilon(1e-13));
  CHECK(phi1 == doctest::Approx(std::expm1(z) / z).epsilon(1e-14));
  CHECK(phi2 == doctest::Approx(oracle::phi_quadrature(2, z)).epsilon(1e-13));
  CHECK(phi2 == doctest::Approx((phi1 - 1.0) / z).epsilon(1e-13));

  // Large arguments, where the naive series cancels.
  for (double big : {-40.0, 25.0}) {
    CHECK(phi(3, Matrix{{big}})(0, 0) == doctest::Approx(oracle::phi_quadrature(3, big)).epsilon(1e-9));
  }
}

TEST_CASE("phi recurrence") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    const Matrix m = oracle::random_matrix(3, 3, rng, 0.5 + trial);
    for (int k = 0; k <= 4; ++k) {
      const Matrix lhs = m * phi(k + 1, m);
      const Matrix rhs = phi(k, m) - (1.0 / factorial(k)) * Matrix::identity(3);
      CHECK((lhs - rhs).max_abs() <= 1e-12 * std::max(1.0, rhs.max_abs()));
    }
  }
}

TEST_CASE("trigonometric phi series") {
  CHECK(max_abs_diff(phi_trig(0, Matrix::zeros(2, 2)), Matrix::identity(2)) == 0.0);
  CHECK(max_abs_diff(phi_trig(1, Matrix::zeros(2, 2)), Matrix::identity(2)) == 0.0);

  const double v = 2.25;
  CHECK(phi_trig(0, Matrix{{v}})(0, 0) == doctest::Approx(std::cos(1.5)).epsilon(1e-15));
  CHECK(phi_trig(1, Matrix{{v}})(0, 0) == doctest::Approx(std::sin(1.5) / 1.5).epsilon(1e-15));

  // Large arguments go through the scaled path.
  const double w = 400.0;
  CHECK(phi_trig(0, Matrix{{w}})(0, 0) == doctest::Approx(std::cos(20.0)).epsilon(1e-11));
  CHECK(phi_trig(1, Matrix{{w}})(0, 0) == doctest::Approx(std::sin(20.0) / 20.0).epsilon(1e-11));

  CHECK_THROWS_AS(phi_trig(0, Matrix(2, 3)), DimensionError);
}

TEST_CASE("trigonometric blocks reassemble the exponential") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 1 + trial % 3;
    const Matrix omega = random_spd(n, rng);
    const double x = 0.1 + 0.4 * trial;
    const Matrix v = (x * x) * omega;
    const Matrix p0 = phi_trig(0, v);
    const Matrix p1 = phi_trig(1, v);
    ExpBlocks b{p0, x * p1, -x * (omega * p1), p0};
    const Matrix k = flat_k(Matrix::zeros(n, n), omega);
    CHECK(max_abs_diff(assemble(b), expm(x * k)) < 1e-10);
  }
}

TEST_CASE("second-order exponential blocks") {
  SUBCASE("Omega = 0 gives the phi form") {
    const Matrix n{{-0.3, 0.1}, {0.1, 0.2}};
    const double h = 0.4;
    const ExpBlocks b = second_order_exp_blocks(h, n, Matrix::zeros(2, 2));
    CHECK(max_abs_diff(b.e11, Matrix::identity(2)) < 1e-14);
    CHECK(max_abs_diff(b.e12, h * phi(1, h * n)) < 1e-14);
    CHECK(b.e21.max_abs() < 1e-14);
    CHECK(max_abs_diff(b.e22, phi(0, h * n)) < 1e-14);
  }
  SUBCASE("harmonic oscillator") {
    const double h = 0.1, w = 2.0;
    const ExpBlocks b = second_order_exp_blocks(h, Matrix::zeros(2, 2), (w * w) * Matrix::identity(2));
    const Matrix i2 = Matrix::identity(2);
    CHECK(max_abs_diff(b.e11, std::cos(h * w) * i2) < 1e-15);
    CHECK(max_abs_diff(b.e12, (std::sin(h * w) / w) * i2) < 1e-15);
    CHECK(max_abs_diff(b.e21, (-w * std::sin(h * w)) * i2) < 1e-14);
    CHECK(max_abs_diff(b.e22, std::cos(h * w) * i2) < 1e-15);
  }
  SUBCASE("h = 0") {
    const ExpBlocks b = second_order_exp_blocks(0.0, Matrix{{1.0}}, Matrix{{3.0}});
    CHECK(b.e11(0, 0) == 1.0);
    CHECK(b.e12(0, 0) == 0.0);
    CHECK(b.e21(0, 0) == 0.0);
    CHECK(b.e22(0, 0) == 1.0);
  }
  SUBCASE("scalar closed form, oscillatory and overdamped") {
    for (auto [nu, w] : {std::pair{-0.02, 200.0}, std::pair{-3.0, 1.0}, std::pair{0.5, 0.06}}) {
      const double h = 0.05;
      const ExpBlocks b = second_order_exp_blocks(h, Matrix{{nu}}, Matrix{{w}});
      const auto cf = oracle::closed_form_blocks(h, nu, w);
      CHECK(b.e11(0, 0) == doctest::Approx(cf.e11).epsilon(1e-13));
      CHECK(b.e12(0, 0) == doctest::Approx(cf.e12).epsilon(1e-13));
      CHECK(b.e21(0, 0) == doctest::Approx(cf.e21).epsilon(1e-13));
      CHECK(b.e22(0, 0) == doctest::Approx(cf.e22).epsilon(1e-13));
    }
  }
  SUBCASE("reassembled blocks equal the flat exponential") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix base = random_spd(3, rng);
      const Matrix n = -0.1 * base;
      const Matrix omega = base * base + Matrix::identity(3);
      REQUIRE(commutes(n, omega));
      const double h = 0.05 * (trial + 1);
      CHECK(max_abs_diff(assemble(second_order_exp_blocks(h, n, omega)), expm(h * flat_k(n, omega))) < 1e-10);
    }
  }
  SUBCASE("non-commuting input") {
    const Matrix n{{0.0, 1.0}, {0.0, 0.0}};
    const Matrix omega{{1.0, 0.0}, {0.0, 2.0}};
    CHECK_FALSE(commutes(n, omega));
    CHECK_THROWS_AS(second_order_exp_blocks(0.1, n, omega), PreconditionError);
    const ExpBlocks b = partition_exp_blocks(0.1, n, omega);
    CHECK(max_abs_diff(assemble(b), expm(0.1 * flat_k(n, omega))) < 1e-15);
  }
}

TEST_CASE("determinants") {
  CHECK(det(Matrix::identity(4)) == 1.0);
  const double d3[] = {2.0, 3.0, 4.0};
  CHECK(det(Matrix::diagonal(d3)) == doctest::Approx(24.0).epsilon(1e-15));
  CHECK(det(Matrix{{0.0, 1.0}, {1.0, 0.0}}) == -1.0);
  CHECK(det(Matrix{{1.0, 2.0}, {2.0, 4.0}}) == 0.0);

  std::mt19937_64 rng(19);
  for (std::size_t n = 1; n <= 6; ++n) {
    const Matrix m = oracle::random_matrix(n, n, rng);
    const double ref = oracle::cofactor_det(m);
    CHECK(std::abs(det(m) - ref) <= 1e-12 * std::abs(ref));
  }
}

TEST_CASE("linear solves") {
  std::mt19937_64 rng(23);
  const Matrix a = oracle::random_matrix(4, 4, rng) + 4.0 * Matrix::identity(4);
  const Matrix b = oracle::random_matrix(4, 2, rng);
  const Matrix x = solve(a, b);
  CHECK((a * x - b).max_abs() < 1e-14);
  CHECK(max_abs_diff(a * inverse(a), Matrix::identity(4)) < 1e-14);

  try {
    solve(Matrix{{1.0, 2.0}, {2.0, 4.0}}, Matrix::identity(2));
    FAIL("expected SingularityError");
  } catch (const SingularityError& e) {
    CHECK(e.pivot().has_value());
    CHECK(*e.pivot() == 1);
  }
}

TEST_CASE("block solves") {
  SUBCASE("identity blocks") {
    BlockMatrix s(2, 2, 2);
    s.set(0, 0, Matrix::identity(2));
    s.set(1, 1, Matrix::identity(2));
    const Matrix rhs{{1.0}, {2.0}, {3.0}, {4.0}};
    CHECK(max_abs_diff(solve_block(s, rhs), rhs) == 0.0);
  }
  SUBCASE("diagonal blocks") {
    BlockMatrix s(2, 2, 1);
    s.set(0, 0, Matrix{{2.0}});
    s.set(1, 1, Matrix{{4.0}});
    const Matrix x = solve_block(s, Matrix{{1.0}, {1.0}});
    CHECK(x(0, 0) == 0.5);
    CHECK(x(1, 0) == 0.25);
  }
  SUBCASE("random system against the flattened solve") {
    std::mt19937_64 rng(29);
    BlockMatrix s(3, 3, 2);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        s.set(i, j, oracle::random_matrix(2, 2, rng, 0.3) + (i == j ? 2.0 : 0.0) * Matrix::identity(2));
    const Matrix rhs = oracle::random_matrix(6, 3, rng);
    const Matrix x = solve_block(s, rhs);
    const Matrix flat = s.flatten();
    CHECK((flat * x - rhs).max_abs() <= 1e-12 * rhs.max_abs());
    CHECK(max_abs_diff(x, inverse(flat) * rhs) < 1e-13);
  }
  SUBCASE("singular") {
    BlockMatrix s(2, 2, 1);
    s.set(0, 0, Matrix{{1.0}});
    s.set(0, 1, Matrix{{1.0}});
    s.set(1, 0, Matrix{{1.0}});
    s.set(1, 1, Matrix{{1.0}});
    CHECK_THROWS_AS(solve_block(s, Matrix{{1.0}, {1.0}}), SingularityError);
  }
}

TEST_CASE("block matrix round trip") {
  std::mt19937_64 rng(31);
  const Matrix flat = oracle::random_matrix(6, 6, rng);
  const BlockMatrix b = BlockMatrix::from_flat(flat, 3);
  CHECK(b.block_rows() == 2);
  CHECK(max_abs_diff(b.flatten(), flat) == 0.0);
  BlockMatrix c(1, 1, 2);
  CHECK_THROWS_AS(c.set(0, 0, Matrix::identity(3)), DimensionError);
}
