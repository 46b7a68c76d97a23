#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "calderon/oscillatory.hpp"

using namespace calderon;

namespace {

Poly quadratic_phase() { return Poly(CVec{0.0, 0.0, 1.0}); }  // z^2

// Composite Simpson on [0,1] with n panels (n even).
template <class F>
double simpson01(F&& f, int n) {
  double h = 1.0 / n;
  double acc = f(0.0) + f(1.0);
  for (int j = 1; j < n; ++j) acc += f(j * h) * ((j % 2) ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// For radial g and phase z^2: integral = 2 pi int_0^1 g(r) J0(2 tau r^2) r dr.
double radial_bessel_oracle(double tau, int bessel_order, double support) {
  auto f = [&](double r) {
    return compact_gaussian(r, support) * std::cyl_bessel_j(bessel_order, 2.0 * tau * r * r) * r;
  };
  return 2.0 * kPi * simpson01(f, 16384);
}

}  // namespace

TEST_CASE("oscillatory grid chooser meets the phase-per-cell budget") {
  auto src = build_disk_grid(64, 128);
  GridPtr fine = choose_oscillatory_grid(src, quadratic_phase(), 128.0);
  CHECK(fine->n_theta == 4096);
  CHECK(fine->n_r >= 660);
  CHECK(fine->n_r <= 672);

  SECTION("tau = 0 keeps the source grid") {
    CHECK(choose_oscillatory_grid(src, quadratic_phase(), 0.0) == src);
  }
  SECTION("excessive tau is rejected") {
    CHECK_THROWS_AS(choose_oscillatory_grid(src, quadratic_phase(), 1e5),
                    ResolutionInsufficient);
  }
}

TEST_CASE("oscillatory integral matches independent Bessel-series oracles") {
  auto grid = build_disk_grid(48, 96);
  auto radial = GridFunction::sample(
      grid, [](cplx z) { return compact_gaussian(std::abs(z), 0.45); });

  SECTION("radial amplitude against the J0 reduction") {
    for (double tau : {4.0, 16.0, 64.0}) {
      cplx osc = oscillatory_integral(radial, quadratic_phase(), tau);
      double oracle = radial_bessel_oracle(tau, 0, 0.45);
      CHECK(std::abs(osc - oracle) < 1e-8);
      CHECK(std::abs(osc.imag()) < 1e-10);
    }
  }

  SECTION("mode-2 amplitude against the J1 reduction") {
    auto g2 = GridFunction::sample(grid, [](cplx z) {
      double r = std::abs(z);
      if (r == 0.0) return cplx(0.0);
      cplx ph = z / r;
      return cplx(compact_gaussian(r, 0.45)) * ph * ph;
    });
    for (double tau : {4.0, 16.0}) {
      cplx osc = oscillatory_integral(g2, quadratic_phase(), tau);
      double oracle = -radial_bessel_oracle(tau, 1, 0.45);
      CHECK(std::abs(osc - oracle) < 1e-8);
    }
  }

  SECTION("odd angular symmetry integrates to zero") {
    auto godd = GridFunction::sample(
        grid, [](cplx z) { return compact_gaussian(std::abs(z), 0.45) * z.real(); });
    cplx osc = oscillatory_integral(godd, quadratic_phase(), 16.0);
    CHECK(std::abs(osc) < 1e-13);
  }

  SECTION("tau = 0 reduces to the plain area integral") {
    cplx osc = oscillatory_integral(radial, quadratic_phase(), 0.0);
    CHECK(std::abs(osc - integrate(radial)) < 1e-15);
  }
}

TEST_CASE("stationary leading term tracks the integral at rate tau^{-3/2}") {
  auto grid = build_disk_grid(48, 96);
  auto one = GridFunction::sample(grid, [](cplx) { return cplx(1.0); });
  Poly phi = quadratic_phase();
  CriticalPointSet cps = find_critical_points(phi);

  for (double tau : {16.0, 32.0, 64.0, 128.0}) {
    cplx osc = oscillatory_integral(one, phi, tau);
    cplx lead = stationary_leading_term(phi, tau, cps, CVec{1.0});
    CHECK(std::abs(lead - kPi / (2.0 * tau)) < 1e-15);
    double scaled = std::abs(osc - lead) * std::pow(tau, 1.5);
    CHECK(scaled < 1.0);  // remainder from the domain edge stays bounded
  }

  SECTION("phase offset at the critical point enters through Im F") {
    Poly shifted = phi + Poly(CVec{cplx(0.0, 0.7)});  // F = z^2 + 0.7 i
    CriticalPointSet cs = find_critical_points(shifted);
    double tau = 32.0;
    cplx lead = stationary_leading_term(shifted, tau, cs, CVec{1.0});
    cplx expect = kPi / (2.0 * tau) * std::polar(1.0, 2.0 * tau * 0.7);
    CHECK(std::abs(lead - expect) < 1e-14);
  }
}

TEST_CASE("asymptotic coefficient extraction") {
  RVec taus{8.0, 16.0, 32.0, 64.0, 128.0};
  cplx c0(2.0, 1.0), c1(0.5, -0.3), c2(-1.0, 2.0);
  CVec vals;
  for (double t : taus) vals.push_back(c0 + c1 / t + c2 / (t * t));

  CVec fit = extract_coefficients(taus, vals, 3);
  REQUIRE(fit.size() == 3);
  CHECK(std::abs(fit[0] - c0) < 1e-10);
  CHECK(std::abs(fit[1] - c1) < 1e-8);
  CHECK(std::abs(fit[2] - c2) < 1e-6);

  SECTION("degenerate sample sets are rejected") {
    RVec same{8.0, 8.0, 8.0};
    CVec v{c0, c0, c0};
    CHECK_THROWS_AS(extract_coefficients(same, v, 2), IllConditionedFit);
  }
}
