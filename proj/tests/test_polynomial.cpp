#include <catch2/catch_amalgamated.hpp>

#include "calderon/polynomial.hpp"

using namespace calderon;

TEST_CASE("horner derivatives match closed forms") {
  // p(z) = 3 + 2z + z^3
  Poly p(CVec{3.0, 2.0, 0.0, 1.0});
  cplx z{0.7, -0.3};
  CVec d = p.eval_derivs(z, 3);
  CHECK(std::abs(d[0] - (3.0 + 2.0 * z + z * z * z)) < 1e-14);
  CHECK(std::abs(d[1] - (2.0 + 3.0 * z * z)) < 1e-14);
  CHECK(std::abs(d[2] - 6.0 * z) < 1e-14);
  CHECK(std::abs(d[3] - cplx(6.0)) < 1e-14);
  CHECK(std::abs(p.derivative().eval(z) - d[1]) < 1e-14);
  CHECK(std::abs(p.antiderivative(cplx(5.0)).derivative().eval(z) - d[0]) < 1e-13);
}

TEST_CASE("companion roots recover known factorizations") {
  CVec wanted{cplx(0.5, 0.0), cplx(-0.25, 0.6), cplx(0.1, -0.9)};
  Poly p = poly_from_roots(wanted, cplx(2.0, 1.0));
  CVec got = poly_roots(p);
  REQUIRE(got.size() == wanted.size());
  std::sort(wanted.begin(), wanted.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  for (std::size_t i = 0; i < wanted.size(); ++i)
    CHECK(std::abs(got[i] - wanted[i]) < 1e-12);
}

TEST_CASE("roots of z^2 wrapper polynomials") {
  // Phi' for Phi = z^2 is 2z: single root at 0.
  Poly dphi(CVec{0.0, 2.0});
  CVec r = poly_roots(dphi);
  REQUIRE(r.size() == 1);
  CHECK(std::abs(r[0]) < 1e-14);
}

TEST_CASE("zzbar calculus: laplacian and wirtinger derivatives are exact") {
  // u = (1 - |z|^2) * (z^2 + 2 zbar)
  ZZbarPoly g = ZZbarPoly::zero(3, 2);
  g.c[2][0] = 1.0;  // z^2
  g.c[0][1] = 2.0;  // 2 zbar
  ZZbarPoly u = one_minus_rsq() * g;

  cplx z{0.4, 0.25};
  cplx zb = std::conj(z);
  cplx expect_u = (1.0 - std::norm(z)) * (z * z + 2.0 * zb);
  CHECK(std::abs(u.eval(z) - expect_u) < 1e-14);

  // d/dz [ (1 - z zb)(z^2 + 2 zb) ] = -zb (z^2 + 2 zb) + (1 - z zb) 2 z
  cplx expect_dz = -zb * (z * z + 2.0 * zb) + (1.0 - z * zb) * 2.0 * z;
  CHECK(std::abs(u.dz().eval(z) - expect_dz) < 1e-14);

  // Laplacian = 4 d2/dz dzbar; computed symbolically here, cross-check by
  // finite differences.
  double h = 1e-5;
  auto ev = [&](double x, double y) { return u.eval(cplx(x, y)); };
  cplx lap_fd = (ev(z.real() + h, z.imag()) + ev(z.real() - h, z.imag()) +
                 ev(z.real(), z.imag() + h) + ev(z.real(), z.imag() - h) -
                 4.0 * ev(z.real(), z.imag())) /
                (h * h);
  CHECK(std::abs(u.laplacian().eval(z) - lap_fd) < 1e-5);
}

TEST_CASE("trace factor vanishes on the circle") {
  ZZbarPoly u = one_minus_rsq() * one_minus_rsq();
  for (double th : {0.1, 1.2, 3.0, 5.5})
    CHECK(std::abs(u.eval(std::polar(1.0, th))) < 1e-15);
}
