#include <doctest.h>

#include <cmath>
#include <vector>

#include "dpfed/analysis.hpp"

using namespace dpfed;

namespace {

ProblemConstants constants(double mu = 2.0, double lambda = 4.0) {
  ProblemConstants c;
  c.mu = mu;
  c.lambda = lambda;
  c.g_bound = 1.0;
  c.gamma_noniid = 0.3;
  c.y0 = 5.0;
  c.theta_star = ParamVector::Zero(3);
  return c;
}

MechanismSpec laplace(double eps) {
  MechanismSpec s;
  s.kind = MechanismKind::Laplace;
  s.epsilon = eps;
  s.xi1 = 1.0;
  return s;
}

}  // namespace

TEST_CASE("omega0 by direct substitution") {
  CHECK(omega0(1.0, 0.0, 2, 1.0, 2, 1) == doctest::Approx(24.0));
}

TEST_CASE("omega0 keeps only the non-IID term for E = 1 and full pools") {
  CHECK(omega0(3.0, 0.5, 1, 7.0, 10, 10) == doctest::Approx(6.0 * 3.0 * 0.5));
  CHECK(omega0(3.0, 0.5, 1, 7.0, 1, 1) == doctest::Approx(9.0));
}

TEST_CASE("omega0 is non-decreasing in E and dominates its non-IID term") {
  double prev = 0.0;
  for (int E = 1; E <= 20; ++E) {
    const double w = omega0(2.0, 0.4, E, 1.5, 10, 2);
    CHECK(w >= prev);
    CHECK(w >= 6.0 * 2.0 * 0.4);
    prev = w;
  }
}

TEST_CASE("mechanism constants by direct substitution") {
  MechanismSpec lap = laplace(1.0);
  CHECK(c_mechanism(lap, 1, 1, 1) == doctest::Approx(8.0));
  MechanismSpec gau;
  gau.kind = MechanismKind::Gaussian;
  gau.epsilon = 2.0;
  gau.delta = std::exp(-1.0);
  gau.xi2 = 1.0;
  CHECK(c_mechanism(gau, 1, 1, 2) == doctest::Approx(1.0));
  CHECK(c_mechanism(no_mechanism(), 5, 2, 4) == 0.0);
}

TEST_CASE("mechanism constants scale as inverse epsilon squared") {
  CHECK(c_mechanism(laplace(0.5), 3, 2, 8) == doctest::Approx(4.0 * c_mechanism(laplace(1.0), 3, 2, 8)));
}

TEST_CASE("bound parameters") {
  const auto bp = make_bound_params(constants(), laplace(2.0), 3, 4, 10, 8, 2);
  CHECK(bp.gamma == doctest::Approx(std::max(8.0 * 4.0 / 2.0, 4.0)));
  CHECK(bp.z == 2.0);
  CHECK(bp.omega1 == doctest::Approx(bp.c_m * 16.0 * 100.0));
  CHECK(bp.omega1 >= 0.0);
  CHECK(bp.omega0 >= 6.0 * 4.0 * 0.3);
  CHECK(schedule_gamma(1.0, 1.0, 20) == 20.0);
}

TEST_CASE("bound at k = 0 dominates Y0") {
  const auto c = constants();
  const auto bp = make_bound_params(c, no_mechanism(), 3, 2, 10, 4, 2);
  CHECK(convergence_bound(0, bp, c.y0) >= c.y0);
  const double mu2 = c.mu * c.mu;
  CHECK(convergence_bound(0, bp, c.y0) == doctest::Approx((4.0 / mu2 * bp.omega0 + bp.gamma * c.y0) / bp.gamma));
}

TEST_CASE("noise-free bound decreases strictly") {
  const auto c = constants();
  const auto bp = make_bound_params(c, no_mechanism(), 3, 2, 1000, 4, 2);
  for (long k = 1; k < 2000; ++k) CHECK(convergence_bound(k + 1, bp, c.y0) < convergence_bound(k, bp, c.y0));
}

TEST_CASE("bound evaluates the two-term formula") {
  const auto c = constants();
  const auto bp = make_bound_params(c, laplace(3.0), 3, 5, 40, 8, 4);
  const long k = 37;
  const double t = 7.0;  // floor(37 / 5)
  const double mu2 = c.mu * c.mu;
  const double want = (4.0 / mu2 * bp.omega0 + bp.gamma * c.y0) / (k + bp.gamma) +
                      4.0 / mu2 * t / ((k + bp.gamma - 1.0) * (k + bp.gamma - 1.0)) * bp.omega1;
  CHECK(convergence_bound(k, bp, c.y0) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("violated assumptions disable the bound") {
  auto c = constants();
  c.assumptions_hold = false;
  const auto bp = make_bound_params(c, no_mechanism(), 3, 1, 10, 4, 2);
  CHECK_THROWS_AS(convergence_bound(5, bp, c.y0), ConfigError);
}

TEST_CASE("Laplace bound in T is eventually increasing with a finite minimiser") {
  const auto c = constants();
  std::vector<long> grid;
  for (long T = 5; T <= 20000; T += 5) grid.push_back(T);
  const auto search = search_optimal_total_iterations(c, laplace(1.0), 3, 5, 8, 4, grid);
  CHECK(search.best.T > grid.front());
  CHECK(search.best.T < grid.back());
  CHECK(search.curve.back().bound > search.best.bound);
  // Unique interior minimiser: decreasing before it, increasing after.
  for (std::size_t i = 1; i < search.curve.size(); ++i) {
    if (search.curve[i].T <= search.best.T) {
      CHECK(search.curve[i].bound < search.curve[i - 1].bound);
    } else {
      CHECK(search.curve[i].bound > search.curve[i - 1].bound);
    }
  }
  const std::vector<long> bad{7};
  CHECK_THROWS_AS(search_optimal_total_iterations(c, laplace(1.0), 3, 5, 8, 4, bad), ConfigError);
}

TEST_CASE("optimal local iterations follow the rounded power") {
  for (long T : {8L, 27L, 64L, 120L, 1000L}) {
    for (double z : {0.0, 1.0, 2.0}) {
      const long direct = static_cast<long>(std::round(std::pow(static_cast<double>(T), z / (z + 1.0))));
      CHECK(raw_optimal_local_iterations(T, z) == direct);
      const long e = optimal_local_iterations(T, z);
      CHECK(T % e == 0);
      for (long d = 1; d <= T; ++d) {
        if (T % d == 0) CHECK(std::abs(e - direct) <= std::abs(d - direct));
      }
    }
  }
  CHECK(raw_optimal_local_iterations(1000, 2.0) == 100);
  CHECK(optimal_local_iterations(1000, 2.0) == 100);
  CHECK(optimal_local_iterations(1000, 0.0) == 1);
}

TEST_CASE("divisor ties go to the smaller divisor") {
  CHECK(nearest_divisor(120, 11) == 10);
  CHECK(nearest_divisor(120, 24) == 24);
  CHECK(nearest_divisor(7, 4) == 1);
  CHECK(nearest_divisor(12, 5) == 4);
}

TEST_CASE("optimal local iterations are non-decreasing in z") {
  for (long T = 1; T <= 300; ++T) {
    long prev = 0;
    for (double z = 0.0; z <= 2.0; z += 0.25) {
      const long e = raw_optimal_local_iterations(T, z);
      CHECK(e >= prev);
      CHECK(e >= 1);
      CHECK(e <= T);
      prev = e;
    }
  }
}

TEST_CASE("rate exponents") {
  CHECK(rate_exponent(0.0) == -1.0);
  CHECK(rate_exponent(1.0) == 0.0);
  CHECK(rate_exponent(2.0) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(rate_exponent(3.0), ConfigError);
}
