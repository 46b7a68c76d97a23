#pragma once

#include "calderon/grid.hpp"
#include "calderon/polynomial.hpp"

namespace calderon {

// Solid Cauchy transforms on the unit disk and their phase-conjugated
// variants. Everything runs mode-by-mode: FFT in theta, then the radial
// first-order collocation solve r w' - nu w = 2 r g_n with nu = n - 1
// (output mode n - 1). The boundary row appended for nu >= 0 encodes the
// exact transform's value w(1) = 0 on those modes.

namespace detail {

// shared mode loop; conjugate = false: dbar^{-1} (output mode n-1),
// the dz^{-1} case is handled by conjugation at the call site.
inline GridFunction cauchy_solve(const GridFunction& g_in) {
  const DiskGrid& g = *g_in.grid;
  Eigen::MatrixXcd M = g.to_modes(g_in.v);
  Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(g.n_r, g.n_theta);
  Eigen::VectorXcd rhs(g.n_r);
  for (int t = 0; t < g.n_theta; ++t) {
    int n = g.freq_of_bin(t);
    if (n == -g.n_theta / 2) continue;      // drop source Nyquist
    int m = n - 1;                           // output mode
    if (m < -g.n_theta / 2 + 1) continue;    // would land on/below Nyquist
    for (int ir = 0; ir < g.n_r; ++ir) rhs(ir) = 2.0 * M(ir, t);
    Eigen::VectorXcd w = g.transport_solve(m, rhs);  // nu = n - 1 = m
    W.col(g.bin_of_freq(m)) = w;
  }
  return GridFunction(g_in.grid, g.from_modes(W));
}

}  // namespace detail

// w with dbar w = g, w = -(1/pi) int g(zeta)/(zeta - z) dA(zeta)
inline GridFunction dbar_inverse(const GridFunction& g) {
  return detail::cauchy_solve(g);
}

// w with dz w = g; mirror of dbar_inverse under conjugation
inline GridFunction dz_inverse(const GridFunction& g) {
  return conj(detail::cauchy_solve(conj(g)));
}

// Conjugated solvers. R_Phi g solves dbar w - tau conj(Phi') w = g and
// R~_Phi g solves dz w + tau Phi' w = g; both are computed as unimodular
// conjugations of the plain transforms, so no large exponentials appear:
//   R_Phi g  = e^{-2 i tau psi} dbar^{-1}( g e^{2 i tau psi} )
//   R~_Phi g = e^{-2 i tau psi} dz^{-1}  ( g e^{2 i tau psi} )
// with psi = Im Phi.

inline GridFunction oscillation_factor(const GridPtr& grid, const Poly& phi,
                                       double tau, double sign) {
  return GridFunction::sample(grid, [&](cplx z) {
    return std::polar(1.0, sign * 2.0 * tau * phi.eval(z).imag());
  });
}

inline GridFunction r_phi(const GridFunction& g, const Poly& phi, double tau) {
  GridFunction up = oscillation_factor(g.grid, phi, tau, +1.0);
  GridFunction dn = oscillation_factor(g.grid, phi, tau, -1.0);
  return dn * dbar_inverse(up * g);
}

inline GridFunction r_tilde_phi(const GridFunction& g, const Poly& phi, double tau) {
  GridFunction up = oscillation_factor(g.grid, phi, tau, +1.0);
  GridFunction dn = oscillation_factor(g.grid, phi, tau, -1.0);
  return dn * dz_inverse(up * g);
}

// Discrete residuals of the conjugated equations, evaluated through the same
// exact product-rule algebra used to build the solves: the residual of
// R_Phi equals e^{-2 i tau psi} (dbar W - G) with W the inner transform and
// G the conjugated source, so its magnitude is the inner discrete residual.
inline double r_phi_residual(const GridFunction& w, const GridFunction& g,
                             const Poly& phi, double tau) {
  GridFunction up = oscillation_factor(g.grid, phi, tau, +1.0);
  GridFunction W = up * w;                   // = dbar^{-1}(g e^{2 i tau psi})
  GridFunction res = dbar_apply(W) - up * g;
  return norm_sup(res);
}

inline double r_tilde_phi_residual(const GridFunction& w, const GridFunction& g,
                                   const Poly& phi, double tau) {
  GridFunction up = oscillation_factor(g.grid, phi, tau, +1.0);
  GridFunction W = up * w;
  GridFunction res = dz_apply(W) - up * g;
  return norm_sup(res);
}

}  // namespace calderon
