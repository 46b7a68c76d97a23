#pragma once
// Oscillatory area integrals over the unit disk: a resolution-budgeted
// semi-analytic quadrature for integrals of the form
//   I(tau) = integral of g(z) exp(2 i tau Im F(z)) dA,
// the stationary-point leading term they converge to, and least-squares
// extraction of asymptotic expansion coefficients in inverse powers of tau.

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "calderon/core.hpp"
#include "calderon/errors.hpp"
#include "calderon/grid.hpp"
#include "calderon/phase.hpp"
#include "calderon/polynomial.hpp"

namespace calderon {

struct OscillatoryBudget {
  double max_phase_per_cell = kPi / 4.0;  // radians of 2 tau Im F per grid cell
  int max_nr = 1024;
  int max_ntheta = 8192;
};

namespace detail {

// Coefficient-norm bound for |F'| on the circle of radius r (monotone in r).
inline double derivative_radial_bound(const Poly& dphi, double r) {
  double acc = 0.0, pw = 1.0;
  for (std::size_t k = 0; k < dphi.c.size(); ++k) {
    acc += std::abs(dphi.c[k]) * pw;
    pw *= r;
  }
  return acc;
}

}  // namespace detail

// Chooses a grid fine enough that the phase 2 tau Im F advances by at most
// the budgeted number of radians across any cell of the source grid family:
// radially, cell size ~ pi sqrt(r(1-r)) / n_r against rate 2 tau |F'|;
// angularly, cell size 2 pi / n_theta against rate 2 tau |z F'|.
inline GridPtr choose_oscillatory_grid(const GridPtr& src, const Poly& phi, double tau,
                                       const OscillatoryBudget& budget = {}) {
  Poly dphi = phi.derivative();
  double rate = 2.0 * std::abs(tau);

  double radial_need = 0.0;
  for (int j = 0; j <= 1024; ++j) {
    double r = static_cast<double>(j) / 1024.0;
    double b = detail::derivative_radial_bound(dphi, r);
    radial_need = std::max(radial_need, rate * b * kPi * std::sqrt(r * (1.0 - r)));
  }
  double angular_need = rate * detail::derivative_radial_bound(dphi, 1.0) * 2.0 * kPi;

  int nr = std::max(src->n_r, static_cast<int>(std::ceil(radial_need / budget.max_phase_per_cell)));
  int nt = std::max(src->n_theta, static_cast<int>(std::ceil(angular_need / budget.max_phase_per_cell)));
  if (nt % 2 == 1) ++nt;
  if (nr > budget.max_nr || nt > budget.max_ntheta)
    throw ResolutionInsufficient("oscillatory quadrature needs " + std::to_string(nr) + "x" +
                                 std::to_string(nt) + " exceeding the budget " +
                                 std::to_string(budget.max_nr) + "x" +
                                 std::to_string(budget.max_ntheta));
  if (nr == src->n_r && nt == src->n_theta) return src;
  return build_disk_grid(nr, nt, src->collar_width);
}

// integral of g(z) exp(2 i tau Im F(z)) dA over the unit disk. The smooth
// factor g is spectrally resampled to the budgeted fine grid and the phase
// factor is evaluated exactly at the fine nodes.
inline cplx oscillatory_integral(const GridFunction& g, const Poly& phi, double tau,
                                 const OscillatoryBudget& budget = {}) {
  GridPtr fine = choose_oscillatory_grid(g.grid, phi, tau, budget);
  const GridFunction gf = (fine == g.grid) ? g : resample(g, fine);
  const DiskGrid& gr = *fine;
  cplx acc = 0.0;
  for (int ir = 0; ir < gr.n_r; ++ir) {
    cplx ring = 0.0;
    for (int it = 0; it < gr.n_theta; ++it) {
      cplx z = gr.node(ir, it);
      double ph = 2.0 * tau * phi.eval(z).imag();
      ring += gf.at(ir, it) * cplx(std::cos(ph), std::sin(ph));
    }
    acc += gr.w_ring[static_cast<std::size_t>(ir)] * ring;
  }
  return acc;
}

// Stationary-point prediction: each nondegenerate critical point of the
// holomorphic phase contributes pi g(z_k) exp(2 i tau Im F(z_k)) / (tau |F''(z_k)|)
// (the Hessian of 2 Im F has signature zero, so no extra phase factor).
inline cplx stationary_leading_term(const Poly& phi, double tau, const CriticalPointSet& cps,
                                    const CVec& g_at_cps) {
  require(g_at_cps.size() == cps.size(),
          "stationary-term evaluation needs one amplitude per critical point");
  require(tau > 0.0, "stationary-term evaluation needs tau > 0");
  cplx acc = 0.0;
  for (std::size_t k = 0; k < cps.size(); ++k) {
    double im = phi.eval(cps[k].z).imag();
    acc += kPi * g_at_cps[k] * std::polar(1.0, 2.0 * tau * im) /
           (tau * std::abs(cps[k].d2));
  }
  return acc;
}

// Least-squares fit of values[i] ~ sum_j c_j / taus[i]^j, j = 0..n_terms-1.
inline CVec extract_coefficients(const RVec& taus, const CVec& values, int n_terms) {
  const int n = static_cast<int>(taus.size());
  require(static_cast<int>(values.size()) == n && n_terms >= 1 && n >= n_terms,
          "coefficient extraction needs at least as many samples as terms");
  Eigen::MatrixXcd a(n, n_terms);
  Eigen::VectorXcd b(n);
  for (int i = 0; i < n; ++i) {
    require(taus[static_cast<std::size_t>(i)] > 0.0, "coefficient extraction needs tau > 0");
    double invt = 1.0;
    for (int j = 0; j < n_terms; ++j) {
      a(i, j) = invt;
      invt /= taus[static_cast<std::size_t>(i)];
    }
    b[i] = values[static_cast<std::size_t>(i)];
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double smax = svd.singularValues()(0);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (!(smin > 0.0) || smax / smin > 1e12)
    throw IllConditionedFit("asymptotic coefficient fit is ill conditioned");
  Eigen::VectorXcd c = svd.solve(b);
  return CVec(c.data(), c.data() + c.size());
}

}  // namespace calderon
