#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "calderon/grid.hpp"

using namespace calderon;

TEST_CASE("area weights sum to pi and integrate polynomials exactly") {
  auto g = build_disk_grid(24, 32);
  double area = 0.0;
  for (int ir = 0; ir < g->n_r; ++ir) area += g->w_ring[ir] * g->n_theta;
  CHECK(std::abs(area - kPi) < 1e-12);

  // integral of (1-|z|^2) over the disk = pi/2, of |z|^4 = pi/3
  auto f1 = GridFunction::sample(g, [](cplx z) { return 1.0 - std::norm(z); });
  auto f2 = GridFunction::sample(g, [](cplx z) { return sq(std::norm(z)); });
  CHECK(std::abs(integrate(f1) - cplx(kPi / 2.0)) < 1e-12);
  CHECK(std::abs(integrate(f2) - cplx(kPi / 3.0)) < 1e-12);
}

TEST_CASE("radial differentiation matrix is spectrally accurate") {
  auto g = build_disk_grid(32, 16);
  Eigen::VectorXd v(g->n_r), expect(g->n_r);
  for (int i = 0; i < g->n_r; ++i) {
    v(i) = std::exp(g->r[i]);
    expect(i) = std::exp(g->r[i]);
  }
  Eigen::VectorXd dv = g->Dr * v;
  CHECK((dv - expect).cwiseAbs().maxCoeff() < 1e-10);

  // boundary rows: value and derivative of exp at r = 1
  CHECK(std::abs(g->bd_eval * v - std::exp(1.0)) < 1e-11);
  CHECK(std::abs(g->bd_deriv * v - std::exp(1.0)) < 1e-9);
}

TEST_CASE("fft round trip and monomial modes") {
  auto g = build_disk_grid(12, 32);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CVec v(g->size());
  for (auto& x : v) x = cplx(u(rng), u(rng));
  auto m = g->to_modes(v);
  CVec back = g->from_modes(m);
  double err = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) err = std::max(err, std::abs(v[i] - back[i]));
  CHECK(err < 1e-13);

  auto z3 = GridFunction::sample(g, [](cplx z) { return z * z * z; });
  auto mz = g->to_modes(z3.v);
  for (int t = 0; t < g->n_theta; ++t) {
    for (int ir = 0; ir < g->n_r; ++ir) {
      double expect = (g->freq_of_bin(t) == 3) ? std::pow(g->r[ir], 3) : 0.0;
      CHECK(std::abs(mz(ir, t) - cplx(expect)) < 1e-13);
    }
  }
}

TEST_CASE("wirtinger and laplacian operators on closed forms") {
  auto g = build_disk_grid(24, 48);
  auto f = GridFunction::sample(g, [](cplx z) {
    cplx zb = std::conj(z);
    return zb * zb + 0.5 * z * zb;  // dbar -> 2 zbar + z/2
  });
  auto db = dbar_apply(f);
  auto expect_db = GridFunction::sample(
      g, [](cplx z) { return 2.0 * std::conj(z) + 0.5 * z; });
  CHECK(norm_sup(db - expect_db) < 1e-11);

  auto h = GridFunction::sample(g, [](cplx z) { return z * z * z; });
  auto dzh = dz_apply(h);
  auto expect_dz = GridFunction::sample(g, [](cplx z) { return 3.0 * z * z; });
  CHECK(norm_sup(dzh - expect_dz) < 1e-11);
  CHECK(norm_sup(dbar_apply(h)) < 1e-11);  // holomorphic

  auto p = GridFunction::sample(g, [](cplx z) { return sq(std::norm(z)); });
  auto lap = laplacian_apply(p);
  auto expect_lap = GridFunction::sample(g, [](cplx z) { return 16.0 * std::norm(z); });
  CHECK(norm_sup(lap - expect_lap) < 1e-9);
}

TEST_CASE("transport mode solves reproduce exact cauchy profiles") {
  auto g = build_disk_grid(24, 32);
  // nu = -1, rhs = 2: solution r (the zbar profile of the transform of 1)
  Eigen::VectorXcd rhs(g->n_r);
  for (int i = 0; i < g->n_r; ++i) rhs(i) = 2.0;
  Eigen::VectorXcd w = g->transport_solve(-1, rhs);
  for (int i = 0; i < g->n_r; ++i) CHECK(std::abs(w(i) - cplx(g->r[i])) < 1e-12);

  // nu = 2 (from source mode n = 3): rhs = 2 r^3, exact -r^2(1-r^2)
  for (int i = 0; i < g->n_r; ++i) rhs(i) = 2.0 * std::pow(g->r[i], 3);
  w = g->transport_solve(2, rhs);
  for (int i = 0; i < g->n_r; ++i) {
    double expect = -sq(g->r[i]) * (1.0 - sq(g->r[i]));
    CHECK(std::abs(w(i) - cplx(expect)) < 1e-11);
  }
}

TEST_CASE("laplace mode solves: harmonic extension and poisson") {
  auto g = build_disk_grid(24, 32);
  Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(g->n_r);
  Eigen::VectorXcd u = g->laplace_mode_solve(2, zero, cplx(1.0));
  for (int i = 0; i < g->n_r; ++i) CHECK(std::abs(u(i) - cplx(sq(g->r[i]))) < 1e-11);

  Eigen::VectorXcd rhs = Eigen::VectorXcd::Ones(g->n_r);  // f = 1
  u = g->laplace_mode_solve(0, rhs, cplx(0.0));
  for (int i = 0; i < g->n_r; ++i)
    CHECK(std::abs(u(i) - cplx((sq(g->r[i]) - 1.0) / 4.0)) < 1e-11);
}

TEST_CASE("modal field: off-grid evaluation, traces, radial derivative") {
  auto g = build_disk_grid(20, 32);
  auto f = GridFunction::sample(g, [](cplx z) {
    return z * z * std::conj(z) + cplx(0.3, 0.1);
  });
  ModalField mf(f);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ur(0.05, 0.95), ut(0.0, 2.0 * kPi);
  for (int k = 0; k < 25; ++k) {
    cplx z = std::polar(ur(rng), ut(rng));
    cplx expect = z * z * std::conj(z) + cplx(0.3, 0.1);
    CHECK(std::abs(mf.eval(z) - expect) < 1e-11);
  }
  CHECK(std::abs(mf.boundary_value(0.7) -
                 (std::polar(1.0, 0.7) + cplx(0.3, 0.1))) < 1e-11);
  // d/dr of r^3 e^{i theta} = 3 e^{i theta}
  CHECK(std::abs(mf.boundary_radial_derivative(1.1) -
                 3.0 * std::polar(1.0, 1.1)) < 1e-9);
}

TEST_CASE("resample reproduces smooth fields on the finer grid") {
  auto g = build_disk_grid(20, 32);
  auto fine = build_disk_grid(33, 80);
  auto f = GridFunction::sample(g, [](cplx z) {
    return std::exp(0.5 * z) * std::conj(z);
  });
  auto rf = resample(f, fine);
  auto expect = GridFunction::sample(fine, [](cplx z) {
    return std::exp(0.5 * z) * std::conj(z);
  });
  CHECK(norm_sup(rf - expect) < 1e-9);
}
