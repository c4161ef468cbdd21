#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "bcpd/density.hpp"
#include "bcpd/density_csv.hpp"
#include "bcpd/errors.hpp"
#include "test_support.hpp"

using namespace bcpd;
using oracle::Vec;
using testing_support::density;
using testing_support::to_vec;

namespace {

Vec sample(const Grid& grid, double (*fn)(double)) {
  Vec v(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) v[j] = fn(grid.node(j));
  return v;
}

DensityFunction beta(const Grid& grid, double a, double b) {
  return density(grid, oracle::beta_density(grid.size(), a, b));
}

}  // namespace

TEST_CASE("grid nodes are uniform with exact endpoints") {
  for (std::size_t m : {16u, 17u, 512u, 1025u}) {
    const Grid g(m);
    const auto x = g.nodes();
    CHECK(x.front() == 0.0);
    CHECK(x.back() == 1.0);
    for (std::size_t j = 1; j < m; ++j) {
      CHECK(x[j] > x[j - 1]);
      CHECK(x[j] - x[j - 1] == doctest::Approx(g.spacing()).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(Grid(8), StructuralError);
  CHECK(Grid().size() == 512);
}

TEST_CASE("trapezoid integration") {
  const Grid g(1025);
  CHECK(integrate(Vec(g.size(), 1.0), g) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(integrate(Vec(37, 1.0), Grid(37)) == doctest::Approx(1.0).epsilon(1e-14));
  const double lin = integrate(sample(g, [](double x) { return 2 * x; }), g);
  CHECK(std::abs(lin - 1.0) <= 1e-6);
  const double sq = integrate(sample(g, [](double x) { return x * x; }), g);
  CHECK(std::abs(sq - 1.0 / 3.0) <= 1e-5);

  // Refinement: trapezoid error on a smooth integrand shrinks by ~4x when h halves.
  const auto err = [](std::size_t m) {
    const Grid grid(m);
    return std::abs(integrate(sample(grid, [](double x) { return std::exp(x); }), grid) -
                    (std::numbers::e - 1.0));
  };
  const double r = err(257) / err(513);
  CHECK(r == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("density validation") {
  const Grid g(64);
  CHECK_NOTHROW(DensityFunction(g, Vec(64, 1.0)));
  CHECK_THROWS_AS(DensityFunction(g, Vec(64, 2.0)), DomainError);
  Vec with_zero(64, 1.0);
  with_zero[3] = 0.0;
  CHECK_THROWS_AS(DensityFunction(g, with_zero), DomainError);
  CHECK_THROWS_AS(DensityFunction(g, Vec(63, 1.0)), StructuralError);
  Vec nan(64, 1.0);
  nan[5] = std::nan("");
  CHECK_THROWS(DensityFunction(g, nan));
  CHECK_THROWS_AS(ClrFunction(g, Vec(64, 1.0)), DomainError);
  CHECK_THROWS_AS(DistributionalSequence(std::vector<DensityFunction>(3, DensityFunction::uniform(g))),
                  StructuralError);
  std::vector<DensityFunction> mixed(4, DensityFunction::uniform(g));
  mixed[2] = DensityFunction::uniform(Grid(65));
  CHECK_THROWS_AS(DistributionalSequence{mixed}, StructuralError);
}

TEST_CASE("zero avoidance") {
  const Grid g(257);
  const auto u = zero_avoid(DensityFunction::uniform(g));
  CHECK(oracle::sup_abs_diff(to_vec(u.values()), Vec(g.size(), 1.0)) < 1e-15);

  Vec f = oracle::normalize(oracle::beta_density(g.size(), 3, 4));
  f[0] = f[g.size() - 1] = 0.0;
  f = oracle::normalize(f);
  const auto z = zero_avoid(g, f);
  CHECK(*std::min_element(z.values().begin(), z.values().end()) == doctest::Approx(0.1).epsilon(1e-9));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shape(1.2, 30);
  for (int t = 0; t < 50; ++t) {
    const auto r = zero_avoid(g, oracle::normalize(oracle::beta_density(g.size(), shape(rng), shape(rng))));
    CHECK(std::abs(integrate(r.values(), g) - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS(zero_avoid(g, Vec(g.size(), -1.0)), DomainError);
}

TEST_CASE("perturbation") {
  const Grid g(1025);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 25; ++t) {
    const auto f = density(g, oracle::random_density(rng, g.size()));
    const auto h = density(g, oracle::random_density(rng, g.size()));
    CHECK(oracle::sup_abs_diff(to_vec(b_add(f, DensityFunction::uniform(g)).values()), to_vec(f.values())) < 1e-12);
    CHECK(oracle::sup_abs_diff(to_vec(b_add(f, h).values()), to_vec(b_add(h, f).values())) < 1e-12);
    CHECK(oracle::sup_abs_diff(to_vec(b_add(f, h).values()),
                               oracle::perturb(to_vec(f.values()), to_vec(h.values()))) < 1e-10);
  }
  const auto b22 = beta(g, 2, 2);
  CHECK(oracle::sup_abs_diff(to_vec(b_add(b22, b22).values()), to_vec(beta(g, 3, 3).values())) < 1e-8);
  CHECK_THROWS_AS(b_add(b22, DensityFunction::uniform(Grid(64))), StructuralError);
}

TEST_CASE("powering") {
  const Grid g(1025);
  const auto b22 = beta(g, 2, 2);
  CHECK(oracle::sup_abs_diff(to_vec(b_smul(1.0, b22).values()), to_vec(b22.values())) < 1e-12);
  CHECK(oracle::sup_abs_diff(to_vec(b_smul(0.0, b22).values()), Vec(g.size(), 1.0)) < 1e-12);
  CHECK(oracle::sup_abs_diff(to_vec(b_smul(2.0, b22).values()), to_vec(beta(g, 3, 3).values())) < 1e-8);
  // Large exponents stay finite through the log-domain shift.
  const auto big = b_smul(200.0, zero_avoid(beta(g, 5, 5)));
  CHECK(std::abs(integrate(big.values(), g) - 1.0) < 1e-9);
  CHECK_THROWS_AS(b_smul(500.0, beta(g, 5, 5)), NumericError);
}

TEST_CASE("Bayes mean") {
  const Grid g(512);
  std::mt19937_64 rng(5);
  const auto f = density(g, oracle::random_density(rng, g.size()));
  CHECK(oracle::sup_abs_diff(to_vec(b_mean(std::vector<DensityFunction>(7, f)).values()), to_vec(f.values())) <
        1e-12);

  const std::vector<DensityFunction> pair{beta(g, 2, 3), beta(g, 3, 2)};
  const auto m = b_mean(pair);
  for (std::size_t j = 0; j < g.size(); ++j) CHECK(m[j] == doctest::Approx(m[g.size() - 1 - j]).epsilon(1e-10));

  for (int t = 0; t < 10; ++t) {
    std::vector<DensityFunction> seq;
    std::vector<Vec> raw;
    for (int i = 0; i < 10; ++i) {
      raw.push_back(oracle::random_density(rng, g.size()));
      seq.push_back(density(g, raw.back()));
    }
    CHECK(oracle::sup_abs_diff(to_vec(b_mean(seq).values()), oracle::mean_chain(raw)) < 1e-9);
  }

  // Hundreds of densities: the direct product would underflow.
  std::vector<DensityFunction> many(600, beta(g, 30, 30));
  const auto mm = b_mean(many);
  CHECK(oracle::sup_abs_diff(to_vec(mm.values()), to_vec(many[0].values())) < 1e-9);
}

TEST_CASE("clr and its inverse") {
  const Grid g(1025);
  CHECK(oracle::sup_abs_diff(to_vec(clr(DensityFunction::uniform(g)).values()), Vec(g.size(), 0.0)) < 1e-15);
  CHECK(oracle::sup_abs_diff(to_vec(clr_inv(ClrFunction::zero(g)).values()), Vec(g.size(), 1.0)) < 1e-15);

  const auto ex = density(g, sample(g, [](double x) { return std::exp(x) / (std::numbers::e - 1.0); }));
  const auto c = clr(ex);
  CHECK(oracle::sup_abs_diff(to_vec(c.values()), sample(g, [](double x) { return x - 0.5; })) < 1e-8);

  // Outputs carry a unit trapezoid integral, so the reference is the closed form renormalized on
  // the grid; the continuum density itself is off by the quadrature error O(h²).
  const auto back = clr_inv(g, sample(g, [](double x) { return x - 0.5; }));
  const Vec closed = sample(g, [](double x) { return std::exp(x) / (std::numbers::e - 1.0); });
  CHECK(oracle::sup_abs_diff(to_vec(back.values()), oracle::normalize(closed)) < 1e-8);
  const double h = g.spacing();
  CHECK(oracle::sup_abs_diff(to_vec(back.values()), closed) < std::numbers::e * h * h / 12.0);

  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const auto f = density(g, oracle::random_density(rng, g.size()));
    const auto cf = clr(f);
    CHECK(std::abs(integrate(cf.values(), g)) < 1e-6);
    CHECK(oracle::sup_abs_diff(to_vec(clr_inv(cf).values()), to_vec(f.values())) < 1e-9);
    CHECK(oracle::sup_abs_diff(to_vec(cf.values()), oracle::log_centered(to_vec(f.values()))) < 1e-10);
  }
}

TEST_CASE("isomorphism linearity and isometry") {
  const Grid g(1025);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    const auto f = density(g, oracle::random_density(rng, g.size()));
    const auto h = density(g, oracle::random_density(rng, g.size()));
    const double a = coef(rng);
    const auto cf = clr(f), ch = clr(h);
    const auto sum = clr(b_add(f, h));
    const auto scaled = clr(b_smul(a, f));
    double add_err = 0.0, mul_err = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      add_err = std::max(add_err, std::abs(sum[j] - cf[j] - ch[j]));
      mul_err = std::max(mul_err, std::abs(scaled[j] - a * cf[j]));
    }
    CHECK(add_err < 1e-10);
    CHECK(mul_err < 1e-10);
    Vec d(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) d[j] = (cf[j] - ch[j]) * (cf[j] - ch[j]);
    const double l2 = std::sqrt(oracle::trapezoid(d));
    CHECK(std::abs(b_distance(f, h) - l2) <= 1e-8 * l2);
  }
}

TEST_CASE("inner product") {
  const Grid g(257);
  std::mt19937_64 rng(4);
  const auto u = DensityFunction::uniform(g);
  for (int t = 0; t < 20; ++t) {
    const auto f = density(g, oracle::random_density(rng, g.size()));
    const auto h = density(g, oracle::random_density(rng, g.size()));
    CHECK(b_inner(u, f) == doctest::Approx(0.0));
    CHECK(b_inner(f, f) > 0.0);
    const double ref = oracle::inner_double_integral(to_vec(f.values()), to_vec(h.values()));
    CHECK(std::abs(b_inner(f, h) - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
    CHECK(b_norm(f) == doctest::Approx(std::sqrt(b_inner(f, f))));
  }
  CHECK(b_norm(u) == 0.0);
}

TEST_CASE("closure of Bayes operations") {
  const Grid g(512);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> coef(-5.0, 5.0);
  for (int t = 0; t < 200; ++t) {
    const auto f = density(g, oracle::random_density(rng, g.size()));
    const auto h = density(g, oracle::random_density(rng, g.size()));
    for (const auto& r : {b_add(f, h), b_smul(coef(rng), f)}) {
      CHECK(*std::min_element(r.values().begin(), r.values().end()) > 0.0);
      CHECK(std::abs(integrate(r.values(), g) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("first moment") {
  const Grid g(1025);
  CHECK(first_moment(DensityFunction::uniform(g)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(first_moment(beta(g, 2, 5)) == doctest::Approx(2.0 / 7.0).epsilon(1e-4));
}

TEST_CASE("density CSV round trip") {
  const Grid g(32);
  std::mt19937_64 rng(2);
  std::vector<DensityFunction> fs;
  for (int i = 0; i < 5; ++i) fs.push_back(density(g, oracle::random_density(rng, g.size())));
  std::stringstream ss;
  write_density_csv(ss, g, fs);
  const auto table = read_density_table(ss);
  CHECK(table.grid == g);
  const auto back = densities_from_table(table, false);
  REQUIRE(back.size() == fs.size());
  for (std::size_t i = 0; i < fs.size(); ++i) {
    for (std::size_t j = 0; j < g.size(); ++j) CHECK(back[i][j] == fs[i][j]);
  }
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("density CSV errors carry line numbers") {
  const auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      read_density_table(in);
    } catch (const CsvFormatError& e) {
      return e.line();
    }
    return 0;
  };
  std::string grid_row;
  const Grid g(16);
  for (std::size_t j = 0; j < g.size(); ++j) grid_row += (j ? "," : "") + format_double(g.node(j));
  std::string ok_row;
  for (std::size_t j = 0; j < g.size(); ++j) ok_row += j ? ",1" : "1";
  CHECK(line_of(grid_row + "\n" + ok_row + "\n" + ok_row + ",1\n") == 3);
  CHECK(line_of(grid_row + "\n" + ok_row + "\n" + "1,x" + ok_row.substr(3) + "\n") == 3);
  CHECK(line_of("0,0.5,0.7,1\n") == 1);
  CHECK(line_of("") == 1);
}
