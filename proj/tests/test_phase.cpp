#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "calderon/phase.hpp"

using namespace calderon;

namespace {
Poly quadratic_phase() { return Poly(CVec{0.0, 0.0, 1.0}); }          // z^2
Poly cubic_phase() { return Poly(CVec{0.0, 0.0, -0.5, 1.0}); }        // z^2 (z - 1/2)
}  // namespace

TEST_CASE("pointwise phase data matches closed forms for z^2") {
  Poly phi = quadratic_phase();
  cplx z(0.3, -0.2);
  PhasePoint p = eval_phase(phi, z);
  CHECK(std::abs(p.value - z * z) < 1e-15);
  CHECK(std::abs(p.d1 - 2.0 * z) < 1e-15);
  CHECK(std::abs(p.d2 - 2.0) < 1e-15);
  CHECK(p.weight() == Catch::Approx((z * z).real()));
  CHECK(p.oscillation() == Catch::Approx((z * z).imag()));

  Eigen::Matrix2d h = hessian_im(p.d2);
  CHECK(h(0, 0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(h(0, 1) == Catch::Approx(2.0));
  CHECK(h(1, 0) == Catch::Approx(2.0));
  CHECK(h(1, 1) == Catch::Approx(0.0).margin(1e-15));
  CHECK(abs_det_hessian_im(p.d2) == Catch::Approx(4.0));
}

TEST_CASE("hessian of the imaginary part agrees with finite differences") {
  Poly phi(CVec{cplx(0.2, -0.1), cplx(0.0, 0.3), cplx(1.0, 0.5), cplx(-0.25, 0.125)});
  cplx z0(0.31, -0.4);
  double h = 1e-4;
  auto im_at = [&](double x, double y) { return phi.eval(cplx(x, y)).imag(); };
  double x = z0.real(), y = z0.imag();
  double vxx = (im_at(x + h, y) - 2.0 * im_at(x, y) + im_at(x - h, y)) / (h * h);
  double vyy = (im_at(x, y + h) - 2.0 * im_at(x, y) + im_at(x, y - h)) / (h * h);
  double vxy = (im_at(x + h, y + h) - im_at(x + h, y - h) - im_at(x - h, y + h) +
                im_at(x - h, y - h)) /
               (4.0 * h * h);
  Eigen::Matrix2d hess = hessian_im(eval_phase(phi, z0).d2);
  CHECK(hess(0, 0) == Catch::Approx(vxx).margin(1e-6));
  CHECK(hess(0, 1) == Catch::Approx(vxy).margin(1e-6));
  CHECK(hess(1, 1) == Catch::Approx(vyy).margin(1e-6));
}

TEST_CASE("boundary profile of z^m is m cos(m theta)") {
  for (int m : {1, 2, 3, 5}) {
    CVec c(static_cast<std::size_t>(m) + 1, 0.0);
    c.back() = 1.0;
    Poly phi(std::move(c));
    for (double th : {0.0, 0.37, 1.2, 2.9, 4.4, 6.1}) {
      CHECK(boundary_profile(phi, th) == Catch::Approx(m * std::cos(m * th)).margin(1e-13));
    }
  }
}

TEST_CASE("critical points of benchmark phases") {
  SECTION("z^2 has a single nondegenerate critical point at the origin") {
    CriticalPointSet cps = find_critical_points(quadratic_phase());
    REQUIRE(cps.size() == 1);
    CHECK(std::abs(cps[0].z) < 1e-14);
    CHECK(std::abs(cps[0].d2 - 2.0) < 1e-13);
  }
  SECTION("z^2 (z - 1/2) has critical points at 0 and 1/3") {
    CriticalPointSet cps = find_critical_points(cubic_phase());
    REQUIRE(cps.size() == 2);
    CHECK(std::abs(cps[0].z) < 1e-12);
    CHECK(std::abs(cps[1].z - cplx(1.0 / 3.0)) < 1e-12);
    // F'' = 6z - 1
    CHECK(std::abs(cps[0].d2 - cplx(-1.0)) < 1e-12);
    CHECK(std::abs(cps[1].d2 - cplx(1.0)) < 1e-12);
  }
  SECTION("roots outside the disk are ignored") {
    // F' = (z - 2)(z - 0.1): critical points at 2 (outside) and 0.1 (inside)
    Poly d = poly_from_roots(CVec{2.0, 0.1});
    CriticalPointSet cps = find_critical_points(d.antiderivative());
    REQUIRE(cps.size() == 1);
    CHECK(std::abs(cps[0].z - cplx(0.1)) < 1e-12);
  }
  SECTION("near-boundary critical point is rejected") {
    Poly d = poly_from_roots(CVec{0.97});
    CHECK_THROWS_AS(find_critical_points(d.antiderivative()), BoundaryCriticalPoint);
  }
  SECTION("double critical point is rejected") {
    Poly phi(CVec{0.0, 0.0, 0.0, 1.0});  // z^3, double critical point at 0
    CHECK_THROWS_AS(find_critical_points(phi), Error);
  }
  SECTION("constant phase is rejected") {
    CHECK_THROWS_AS(find_critical_points(Poly(CVec{1.0})), DegeneratePhase);
  }
}

TEST_CASE("splitting a degenerate phase yields simple critical points") {
  Poly phi(CVec{cplx(0.4, -0.2), 0.0, 0.0, 1.0});  // z^3 + const, double point at 0
  double eps2 = 0.05;
  Poly split = split_degenerate_critical_points(phi, eps2);
  CHECK(std::abs(split.c[0] - phi.c[0]) < 1e-15);  // constant term preserved
  CriticalPointSet cps = find_critical_points(split);
  REQUIRE(cps.size() == 2);
  CHECK(std::abs(cps[1].z - cps[0].z) == Catch::Approx(eps2).epsilon(1e-8));
  // Leading behavior preserved: derivative still monic cubic's derivative scale
  Poly d = split.derivative();
  d.trim(1e-12 * d.max_coeff());
  CHECK(std::abs(d.c.back() - cplx(3.0)) < 1e-12);

  SECTION("a phase with already-simple critical points is returned unchanged") {
    Poly same = split_degenerate_critical_points(cubic_phase(), eps2);
    CriticalPointSet a = find_critical_points(cubic_phase());
    CriticalPointSet b = find_critical_points(same);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k].z - b[k].z) < 1e-10);
  }
}

TEST_CASE("boundary partition membership and validation") {
  BoundaryPartition part(0.5 * kPi, 0.5, 0.3);
  CHECK(part.in_gap(0.5 * kPi));
  CHECK(part.in_gap(0.5 * kPi + 0.45));
  CHECK_FALSE(part.in_gap(0.5 * kPi + 0.55));
  CHECK(part.in_padded_gap(0.5 * kPi + 0.75));
  CHECK_FALSE(part.in_padded_gap(0.5 * kPi + 0.85));
  CHECK(part.in_accessible(0.5 * kPi + 0.85));
  CHECK(part.in_accessible(1.5 * kPi));
  // wrap-around
  BoundaryPartition wrap(0.1, 0.4, 0.2);
  CHECK(wrap.in_gap(2.0 * kPi - 0.1));
  CHECK(wrap.in_accessible(kPi));
  CHECK_THROWS_AS(BoundaryPartition(0.0, -0.1, 0.2), ConfigError);
  CHECK_THROWS_AS(BoundaryPartition(0.0, 2.0, 2.0), ConfigError);
}

TEST_CASE("boundary classification of the quadratic phase") {
  Poly phi = quadratic_phase();  // profile 2 cos(2 theta)

  SECTION("negative arcs are the two lobes around pi/2 and 3 pi/2") {
    BoundaryPartition part(0.5 * kPi, 0.5, 0.2);
    BoundaryClassification cls = classify_boundary(phi, part);
    REQUIRE(cls.negative_arcs.size() == 2);
    CHECK(cls.negative_arcs[0].lo == Catch::Approx(0.25 * kPi).margin(1e-9));
    CHECK(cls.negative_arcs[0].hi == Catch::Approx(0.75 * kPi).margin(1e-9));
    CHECK(cls.negative_arcs[1].lo == Catch::Approx(1.25 * kPi).margin(1e-9));
    CHECK(cls.negative_arcs[1].hi == Catch::Approx(1.75 * kPi).margin(1e-9));
    REQUIRE(cls.positive_arcs.size() == 2);

    // padded gap = [pi/2 - 0.7, pi/2 + 0.7] subset of the negative lobe:
    // sup there is attained at the endpoints, 2 cos(pi - 1.4).
    CHECK(cls.sup_gap == Catch::Approx(-2.0 * std::cos(1.4)).margin(1e-8));
    CHECK(cls.gap_negative);
    // the accessible arc wraps the antipodal negative lobe, so inf = -2
    CHECK(cls.inf_accessible == Catch::Approx(-2.0).margin(1e-8));
    CHECK_FALSE(cls.accessible_positive);
  }

  SECTION("padding past the sign change flips the gap flag") {
    BoundaryPartition part(0.5 * kPi, 0.5, 0.3);  // padded end 0.8 > pi/4
    BoundaryClassification cls = classify_boundary(phi, part);
    CHECK(cls.sup_gap == Catch::Approx(-2.0 * std::cos(1.6)).margin(1e-8));
    CHECK(cls.sup_gap > 0.0);
    CHECK_FALSE(cls.gap_negative);
  }

  SECTION("level margins shrink the reported arcs") {
    BoundaryPartition part(0.5 * kPi, 0.5, 0.2);
    double level = 0.5;  // 2 cos(2 theta) < -0.5
    BoundaryClassification cls = classify_boundary(phi, part, level);
    REQUIRE(cls.negative_arcs.size() == 2);
    double expect_lo = 0.5 * std::acos(-0.25);
    CHECK(cls.negative_arcs[0].lo == Catch::Approx(expect_lo).margin(1e-9));
    CHECK(cls.negative_arcs[0].hi == Catch::Approx(kPi - expect_lo).margin(1e-9));
  }
}

TEST_CASE("probe polynomial prescribes exact 2-jets at the critical points") {
  CriticalPointSet cps = find_critical_points(cubic_phase());
  REQUIRE(cps.size() == 2);
  cplx d(0.3, 0.1), d1(-0.2, 0.45);

  for (std::size_t j : {std::size_t{0}, std::size_t{1}}) {
    Poly p = build_probe_polynomial(cps, j, d, d1);
    for (std::size_t k = 0; k < cps.size(); ++k) {
      CVec jet = p.eval_derivs(cps[k].z, 2);
      if (k == j) {
        CHECK(std::abs(jet[0]) < 1e-12);
        CHECK(std::abs(jet[1] - d) < 1e-12);
        CHECK(std::abs(jet[2] - d1) < 1e-12);
      } else {
        CHECK(std::abs(jet[0]) < 1e-12);
        CHECK(std::abs(jet[1]) < 1e-12);
        CHECK(std::abs(jet[2]) < 1e-12);
      }
    }
  }

  SECTION("velocity matches the implicit-function prediction") {
    // critical point of F + eps p near z_j moves with velocity -d / F''(z_j)
    std::size_t j = 1;
    Poly p = build_probe_polynomial(cps, j, d, d1);
    double eps = 1e-6;
    Poly pert = cubic_phase() + Poly(CVec{}) + (cplx(eps) * p);
    CriticalPointSet moved = find_critical_points(pert);
    REQUIRE(moved.size() == 2);
    cplx vel_fd = (moved[1].z - cps[1].z) / eps;
    cplx vel = probe_velocity(cps, j, d);
    CHECK(std::abs(vel_fd - vel) < 1e-5);
    CHECK(std::abs(moved[0].z - cps[0].z) < 1e-10);  // other point stationary
  }
}

TEST_CASE("hermite jet interpolation reproduces prescribed 2-jets") {
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<cplx> nodes{cplx(0.1, -0.3), cplx(-0.45, 0.2), cplx(0.5, 0.4)};
  CVec v0, v1, v2;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    v0.push_back(cplx(u(rng), u(rng)));
    v1.push_back(cplx(u(rng), u(rng)));
    v2.push_back(cplx(u(rng), u(rng)));
  }
  Poly m = hermite_jet_interpolant(nodes, v0, v1, v2);
  CHECK(m.degree() <= 8);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    CVec jet = m.eval_derivs(nodes[k], 2);
    CHECK(std::abs(jet[0] - v0[k]) < 1e-11);
    CHECK(std::abs(jet[1] - v1[k]) < 1e-11);
    CHECK(std::abs(jet[2] - v2[k]) < 1e-11);
  }
  CHECK_THROWS_AS(hermite_jet_interpolant({cplx(0.1), cplx(0.1)}, CVec(2), CVec(2), CVec(2)),
                  InterpolationSingular);
}

TEST_CASE("two-plateau phase design meets its advertised contract") {
  TwoPlateauConfig cfg = canonical_two_plateau_config();
  AdmissiblePhase ap = build_admissible_phase(cfg);

  // attained plateau levels (frozen from the pinned canonical configuration)
  CHECK(ap.gap_depth == Catch::Approx(1.2).margin(0.1));
  CHECK(ap.classification.sup_gap < -1.0);
  CHECK(ap.classification.inf_accessible > 0.9);
  CHECK(ap.classification.gap_negative);
  CHECK(ap.classification.accessible_positive);
  CHECK(ap.fit_residual < 0.02);

  // phase vanishes to second order at the origin
  REQUIRE(ap.phi.c.size() >= 3);
  CHECK(std::abs(ap.phi.c[0]) == 0.0);
  CHECK(std::abs(ap.phi.c[1]) == 0.0);
  CHECK(std::abs(ap.phi.c[2]) > 0.1);

  // critical points: the origin plus auxiliaries confined near it
  REQUIRE(ap.critical_points.size() >= 1);
  bool has_origin = false;
  for (const auto& p : ap.critical_points.pts) {
    if (std::abs(p.z) < 1e-12) has_origin = true;
    CHECK(std::abs(p.z) <= cfg.interior_radius + 1e-12);
    CHECK(std::abs(p.d2) >= cfg.min_hessian);
  }
  CHECK(has_origin);

  // profile stays within the sign margins across entire plateau arcs
  BoundaryProfile T(ap.phi);
  for (int j = 0; j <= 200; ++j) {
    double t = -cfg.gap_plateau_end + 2.0 * cfg.gap_plateau_end * j / 200.0;
    CHECK(T(cfg.partition.center + t) <= -cfg.sign_margin);
  }
  for (int j = 0; j <= 200; ++j) {
    double span = 2.0 * (kPi - cfg.accessible_plateau_start);
    double t = cfg.accessible_plateau_start + span * j / 200.0;
    CHECK(T(cfg.partition.center + t) >= cfg.sign_margin);
  }

  SECTION("unachievable plateau geometry is rejected") {
    TwoPlateauConfig bad = cfg;
    bad.n_modes = 3;  // far too few modes to shape two plateaus
    CHECK_THROWS_AS(build_admissible_phase(bad), Error);
  }
}
