#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "calderon/carleman.hpp"
#include "calderon/cauchy.hpp"
#include "calderon/core.hpp"
#include "calderon/errors.hpp"
#include "calderon/grid.hpp"
#include "calderon/phase.hpp"
#include "calderon/polynomial.hpp"

namespace calderon {

// Solutions of (Delta + q) u = 0 of complex-geometrical-optics type on the
// unit disk: a growing factor e^{tau F} (or e^{-tau conj(F)}) times a
// holomorphic amplitude, corrected by a transport hierarchy u11 = u11_1 +
// u11_2, a reflected term that cancels the boundary trace on one arc, and a
// weighted bulk correction u12 that absorbs the remaining defect without
// touching that trace.

enum class Orientation {
  PlusPhi,      // factor e^{+tau F}; trace vanishes on the gap arc
  MinusPhiBar,  // factor e^{-tau conj(F)}; trace vanishes on the accessible arc
};

// ---------------------------------------------------------------------------
// Radial partition of unity
// ---------------------------------------------------------------------------

// e1 + e2 = 1 exactly; e1 = 1 on |z| <= r_in (covering the critical set),
// e1 = 0 on |z| >= r_in + overlap (so the algebraic branch never divides by a
// vanishing F').
struct UnityPair {
  double r_in = 0.45;
  double overlap = 0.1;
  GridFunction e1, e2;

  double e1_at(double rho) const {
    return 1.0 - smoothstep5((rho - r_in) / overlap);
  }
};

inline UnityPair build_unity(const GridPtr& grid, const CriticalPointSet& crit,
                             double overlap = 0.1, double clearance = 0.1) {
  require(overlap > 0.0, "build_unity: overlap must be positive");
  require(clearance > 0.0, "build_unity: clearance must be positive");
  UnityPair out;
  double r_crit = 0.0;
  for (const auto& p : crit.pts) r_crit = std::max(r_crit, std::abs(p.z));
  out.r_in = std::max(0.45, r_crit + clearance);
  out.overlap = overlap;
  if (out.r_in + out.overlap > 0.9)
    throw DegeneratePhase(
        "build_unity: critical set too close to the boundary to fit the "
        "separating annulus");
  const DiskGrid& g = *grid;
  out.e1 = GridFunction(grid);
  out.e2 = GridFunction(grid);
  for (int i = 0; i < g.n_r * g.n_theta; ++i) {
    double v = out.e1_at(std::abs(g.node(i)));
    out.e1.v[std::size_t(i)] = v;
    out.e2.v[std::size_t(i)] = 1.0 - v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Holomorphic amplitude
// ---------------------------------------------------------------------------

// a = e^{P} with P a polynomial, P(0) = 0. Never vanishes, and log|a| is
// harmonic, so forcing it far negative on chosen sectors costs only a bounded
// lift elsewhere.
struct Amplitude {
  Poly P;
  Poly dP;

  cplx eval(cplx z) const { return std::exp(P.eval(z)); }
  cplx dz(cplx z) const { return dP.eval(z) * std::exp(P.eval(z)); }
  cplx log_deriv(cplx z) const { return dP.eval(z); }  // a'/a
};

inline Amplitude make_amplitude(Poly P) {
  if (!P.c.empty()) P.c[0] = cplx(0.0);  // normalize a(0) = 1
  Amplitude a;
  a.dP = P.derivative();
  a.P = std::move(P);
  return a;
}

inline Amplitude unit_amplitude() { return make_amplitude(Poly(CVec{})); }

// Amplitude suppressed on a band of the two pad sectors of a boundary
// partition. The exponent P is the analytic completion of a boundary profile
// equal to -depth over [lo_frac, hi_frac] (in units of the pad, measured from
// the gap edge toward the accessible arc, smooth ramps of ramp_frac on both
// ends) and 0 elsewhere, fitted on the circle |w| = fit_radius. The fit
// radius must cover every reflected evaluation radius (up to 1/r_inner of the
// collar): outside the fit circle the truncated series rings with amplitude
// growing like (|w|/fit_radius)^n_modes and Re P can swing positive by several
// units. Inside it the ripple stays bounded by the Fourier tail, which the
// ramp width controls (mode n_modes must resolve ramp_frac * pad). The dropped
// mean of the target lifts Re P slightly on the rest of the circle, which is
// harmless: only the ratio between flank and elsewhere matters. The band
// should cover the angular ramp of whichever cutoff the amplitude rides with
// (the gap-side collar ramp lives in the inner part of the pad, the
// accessible-side one in the outer part).
inline Amplitude flank_amplitude(const BoundaryPartition& part, double depth,
                                 int n_modes = 36, double fit_radius = 1.2,
                                 double lo_frac = -0.15, double hi_frac = 0.75,
                                 double ramp_frac = 0.4) {
  require(depth >= 0.0, "flank_amplitude: depth must be nonnegative");
  require(n_modes >= 4, "flank_amplitude: need at least 4 modes");
  require(fit_radius > 1.0, "flank_amplitude: fit radius must exceed 1");
  require(part.pad > 0.0, "flank_amplitude: partition must have a pad");
  require(hi_frac > lo_frac, "flank_amplitude: empty suppression band");
  const double c = part.center, hw = part.half_width, p = part.pad;
  auto target = [&](double th) {
    // signed distance from each gap edge, oriented into its pad
    double up = std::remainder(th - (c + hw), 2.0 * kPi);
    double dn = std::remainder((c - hw) - th, 2.0 * kPi);
    return -depth * (plateau(up, (lo_frac - ramp_frac) * p,
                             (hi_frac + ramp_frac) * p, ramp_frac * p) +
                     plateau(dn, (lo_frac - ramp_frac) * p,
                             (hi_frac + ramp_frac) * p, ramp_frac * p));
  };
  const int N = 4096;
  CVec coeffs(std::size_t(n_modes) + 1, cplx(0.0));
  for (int j = 0; j < N; ++j) {
    double th = 2.0 * kPi * double(j) / double(N);
    double f = target(th);
    for (int k = 1; k <= n_modes; ++k)
      coeffs[std::size_t(k)] += (2.0 * f / double(N)) * std::polar(1.0, -k * th);
  }
  double rp = 1.0;
  for (int k = 1; k <= n_modes; ++k) {
    rp *= fit_radius;
    coeffs[std::size_t(k)] /= rp;  // P(w) = sum_k 2 f_k (w / fit_radius)^k
  }
  return make_amplitude(Poly(std::move(coeffs)));
}

// ---------------------------------------------------------------------------
// Boundary cutoffs
// ---------------------------------------------------------------------------

struct CutoffWidths {
  double r_inner = 0.86;          // radial support starts here
  double r_plateau = 0.93;        // radial factor reaches 1 here
  double plateau_pad_frac = 0.18; // angular plateau extends this fraction of
                                  // the pad beyond the covered arc
  double ramp_pad_frac = 0.22;    // angular ramp width as a fraction of the pad
  // Accessible-side fractions; negative means "same as the gap side". Phases
  // whose profile transitions slowly across the pad need the accessible
  // collar to stay closer to its own arc.
  double acc_plateau_pad_frac = -1.0;
  double acc_ramp_pad_frac = -1.0;
  double sign_margin = 1e-3;      // required margin in the sampled sign checks

  double plateau_frac(bool accessible) const {
    return (accessible && acc_plateau_pad_frac >= 0.0) ? acc_plateau_pad_frac
                                                       : plateau_pad_frac;
  }
  double ramp_frac(bool accessible) const {
    return (accessible && acc_ramp_pad_frac >= 0.0) ? acc_ramp_pad_frac
                                                    : ramp_pad_frac;
  }
  static CutoffWidths none() {
    CutoffWidths w;
    w.r_inner = 1.0;
    w.r_plateau = 1.0;
    w.plateau_pad_frac = 0.0;
    w.ramp_pad_frac = 0.0;
    return w;
  }
  bool empty() const {
    return r_plateau >= 1.0 || r_plateau <= r_inner || ramp_pad_frac <= 0.0;
  }
};

// Tensor cutoff chi(z) = Z(|z|) H(arg z): quintic radial ramp from r_inner to
// r_plateau (then 1 out to the boundary) times a C^4 angular plateau window.
// Closed-form Wirtinger derivative and Laplacian, so defect integrands never
// differentiate through grid samples.
class CutoffField {
 public:
  CutoffField() = default;  // identically zero
  CutoffField(double r0, double r1, detail::AngularWindow win)
      : empty_(false), r0_(r0), r1_(r1), win_(win) {}

  bool empty() const { return empty_; }
  double support_radius() const { return r0_; }
  const detail::AngularWindow& window() const { return win_; }

  double value(cplx z) const {
    if (empty_) return 0.0;
    return zfac(std::abs(z)) * win_.value(std::arg(z));
  }
  cplx dz(cplx z) const {
    if (empty_) return cplx(0.0);
    double rho = std::abs(z);
    if (rho <= r0_) return cplx(0.0);
    double th = std::arg(z);
    double Z = zfac(rho), Z1 = zfac_d1(rho);
    double H = win_.value(th), H1 = win_.d1(th);
    return 0.5 * std::polar(1.0, -th) * cplx(Z1 * H, -Z * H1 / rho);
  }
  double lap(cplx z) const {
    if (empty_) return 0.0;
    double rho = std::abs(z);
    if (rho <= r0_) return 0.0;
    double th = std::arg(z);
    double Z = zfac(rho), Z1 = zfac_d1(rho), Z2 = zfac_d2(rho);
    double H = win_.value(th), H2 = win_.d2(th);
    return Z2 * H + Z1 * H / rho + Z * H2 / (rho * rho);
  }

 private:
  double zfac(double rho) const {
    return smoothstep5((rho - r0_) / (r1_ - r0_));
  }
  double zfac_d1(double rho) const {
    double w = r1_ - r0_;
    return smoothstep5_deriv((rho - r0_) / w) / w;
  }
  double zfac_d2(double rho) const {
    double w = r1_ - r0_;
    return smoothstep5_d2((rho - r0_) / w) / (w * w);
  }

  bool empty_ = true;
  double r0_ = 1.0, r1_ = 1.0;
  detail::AngularWindow win_;
};

namespace detail {

enum class CutoffSide { Gap, Accessible };

// Build the collar cutoff over one side of the partition and verify, by
// sampling its closed support, the two inequalities the assembly relies on:
// the reflected weight comparison (phi1(1/zbar) vs phi1(z), strictly one-sided
// off the boundary) and the non-stationarity margin |Re(z F'(z))| >= c0 > 0.
inline CutoffField make_cutoff_side(const Poly& phi,
                                    const BoundaryPartition& part,
                                    const CutoffWidths& w, CutoffSide side,
                                    double* c0_out) {
  if (c0_out) *c0_out = 0.0;
  if (w.empty()) return CutoffField();
  require(w.r_inner > 0.5 && w.r_inner < w.r_plateau && w.r_plateau < 1.0,
          "cutoff widths: need 0.5 < r_inner < r_plateau < 1");
  require(part.pad > 0.0, "cutoff widths: partition must have a positive pad");
  require(w.plateau_frac(false) + w.ramp_frac(false) + w.plateau_frac(true) +
                  w.ramp_frac(true) <=
              1.0 + 1e-12,
          "cutoff widths: angular pad fractions must total at most 1 so the "
          "two collars stay disjoint");

  const bool acc = (side == CutoffSide::Accessible);
  const double c = part.center, hw = part.half_width, p = part.pad;
  const double ap = w.plateau_frac(acc) * p;  // plateau extension into the pad
  const double rw = w.ramp_frac(acc) * p;     // ramp width

  detail::AngularWindow win;
  if (side == CutoffSide::Gap) {
    win.lo = c - hw - ap - rw;
    win.width = 2.0 * (hw + ap + rw);
  } else {
    win.lo = c + hw + p - ap - rw;
    win.width = 2.0 * kPi - 2.0 * (hw + p) + 2.0 * (ap + rw);
  }
  win.ramp = rw;
  CutoffField chi(w.r_inner, w.r_plateau, win);

  // Sampled verification over the closed support.
  Poly dphi = phi.derivative();
  const int n_th = 720, n_rad = 48;
  double c0 = std::numeric_limits<double>::infinity();
  double worst_ratio = (side == CutoffSide::Gap)
                           ? -std::numeric_limits<double>::infinity()
                           : std::numeric_limits<double>::infinity();
  for (int jt = 0; jt <= n_th; ++jt) {
    double th = win.lo + win.width * double(jt) / double(n_th);
    for (int jr = 0; jr <= n_rad; ++jr) {
      double rho = w.r_inner + (1.0 - w.r_inner) * double(jr) / double(n_rad);
      cplx z = std::polar(rho, th);
      c0 = std::min(c0, std::abs((z * dphi.eval(z)).real()));
      if (rho > 0.9995) continue;  // weight comparison degenerates at r = 1
      cplx zr = 1.0 / std::conj(z);
      double gap = (phi.eval(zr).real() - phi.eval(z).real()) / (1.0 - rho);
      if (side == CutoffSide::Gap)
        worst_ratio = std::max(worst_ratio, gap);
      else
        worst_ratio = std::min(worst_ratio, gap);
    }
  }
  BoundaryProfile T(phi);
  double t_center = T(c + ((side == CutoffSide::Gap) ? 0.0 : kPi));
  if (side == CutoffSide::Gap) {
    if (t_center >= 0.0)
      throw SupportInfeasible(
          "cutoff: the gap arc does not sit in the negative boundary region "
          "of the phase profile");
    if (worst_ratio > -2.0 * w.sign_margin)
      throw SupportInfeasible(
          "cutoff: reflected weight comparison fails on the gap collar "
          "(profile sign margin too small for the requested widths)");
  } else {
    if (t_center <= 0.0)
      throw SupportInfeasible(
          "cutoff: the accessible arc does not sit in the positive boundary "
          "region of the phase profile");
    if (worst_ratio < 2.0 * w.sign_margin)
      throw SupportInfeasible(
          "cutoff: reflected weight comparison fails on the accessible "
          "collar (profile sign margin too small for the requested widths)");
  }
  if (!(c0 > w.sign_margin))
    throw SupportInfeasible(
        "cutoff: non-stationarity margin |Re(z F')| collapses on the collar "
        "support");
  if (c0_out) *c0_out = c0;
  return chi;
}

}  // namespace detail

struct CutoffPair {
  CutoffField chi1;  // collar over the padded gap arc
  CutoffField chi2;  // collar over the padded accessible arc
  double c0_gap = 0.0;
  double c0_accessible = 0.0;
};

inline CutoffPair build_cutoffs(const Poly& phi, const BoundaryPartition& part,
                                const CutoffWidths& widths = {}) {
  CutoffPair out;
  out.chi1 = detail::make_cutoff_side(phi, part, widths,
                                      detail::CutoffSide::Gap, &out.c0_gap);
  out.chi2 = detail::make_cutoff_side(
      phi, part, widths, detail::CutoffSide::Accessible, &out.c0_accessible);
  return out;
}

// ---------------------------------------------------------------------------
// Vanishing corrections at the critical set
// ---------------------------------------------------------------------------

// The transform w = dbar^{-1}(source) (or dz^{-1}) minus the polynomial m
// matching its 2-jet at each critical point, so the corrected field rho has
// rho = d rho = d^2 rho = 0 there (holomorphic jets for the dbar branch,
// conjugate jets for the dz branch).
struct VanishingCorrections {
  HermiteJetPieces pieces;  // m1: values, m2: first jets, m3: second jets
  bool antiholomorphic = false;
  GridFunction rho;          // transform minus the matched polynomial
  double jet_residual = 0.0; // corrected jets at the nodes, re-measured

  bool trivial() const {
    return pieces.m1.c.empty() && pieces.m2.c.empty() && pieces.m3.c.empty();
  }
  cplx correction_at(cplx z) const {
    if (trivial()) return cplx(0.0);
    cplx s = pieces.m1.eval(z) + pieces.m2.eval(z) + pieces.m3.eval(z);
    return antiholomorphic ? std::conj(s) : s;
  }
};

namespace detail {

// 2-jet of a smooth field by centered finite differences on a 3x3 stencil:
// value, first and second Wirtinger derivative (dz for holomorphic = false
// flag order: wirtinger = +1 selects d/dz, -1 selects d/dzbar).
inline std::array<cplx, 3> fd_jet(const std::function<cplx(cplx)>& F, cplx z,
                                  double h, int wirtinger) {
  const cplx ih(0.0, h);
  cplx c0 = F(z);
  cplx xp = F(z + h), xm = F(z - h);
  cplx yp = F(z + ih), ym = F(z - ih);
  cplx pp = F(z + h + ih), pm = F(z + h - ih);
  cplx mp = F(z - h + ih), mm = F(z - h - ih);
  cplx dx = (xp - xm) / (2.0 * h), dy = (yp - ym) / (2.0 * h);
  cplx dxx = (xp - 2.0 * c0 + xm) / (h * h);
  cplx dyy = (yp - 2.0 * c0 + ym) / (h * h);
  cplx dxy = (pp - pm - mp + mm) / (4.0 * h * h);
  cplx s = (wirtinger > 0) ? cplx(0.0, -1.0) : cplx(0.0, 1.0);
  cplx d1 = 0.5 * (dx + s * dy);
  cplx d2 = 0.25 * (dxx - dyy) + 0.5 * s * dxy;
  return {c0, d1, d2};
}

}  // namespace detail

inline VanishingCorrections build_vanishing_corrections(
    const GridFunction& source, const CriticalPointSet& crit,
    bool antiholomorphic = false) {
  VanishingCorrections out;
  out.antiholomorphic = antiholomorphic;
  GridFunction w = antiholomorphic ? dz_inverse(source) : dbar_inverse(source);
  if (crit.empty()) {
    out.rho = std::move(w);
    return out;
  }
  const DiskGrid& g = *source.grid;
  const double h = 1.0 / double(g.n_r);
  auto W = std::make_shared<ModalField>(w);
  std::vector<cplx> zs = crit.locations();
  CVec v0(zs.size()), v1(zs.size()), v2(zs.size());
  for (std::size_t k = 0; k < zs.size(); ++k) {
    require(std::abs(zs[k]) + 2.0 * h < 1.0,
            "vanishing corrections: critical point too close to the boundary "
            "for the difference stencil");
    auto jet = detail::fd_jet([&](cplx z) { return W->eval(z); }, zs[k], h,
                              antiholomorphic ? -1 : +1);
    if (antiholomorphic) {
      v0[k] = std::conj(jet[0]);
      v1[k] = std::conj(jet[1]);
      v2[k] = std::conj(jet[2]);
    } else {
      v0[k] = jet[0];
      v1[k] = jet[1];
      v2[k] = jet[2];
    }
  }
  out.pieces = hermite_jet_pieces(zs, v0, v1, v2);
  out.rho = GridFunction(source.grid);
  for (int i = 0; i < g.n_r * g.n_theta; ++i)
    out.rho.v[std::size_t(i)] =
        w.v[std::size_t(i)] - out.correction_at(g.node(i));
  double jr = 0.0;
  for (std::size_t k = 0; k < zs.size(); ++k) {
    auto jet = detail::fd_jet(
        [&](cplx z) { return W->eval(z) - out.correction_at(z); }, zs[k], h,
        antiholomorphic ? -1 : +1);
    jr = std::max({jr, std::abs(jet[0]), std::abs(jet[1]), std::abs(jet[2])});
  }
  out.jet_residual = jr;
  return out;
}

// ---------------------------------------------------------------------------
// Transport correction u11
// ---------------------------------------------------------------------------

struct CorrectionU11 {
  GridFunction u11_1;      // conjugated-transform branch (critical-set side)
  GridFunction u11_2;      // algebraic branch (boundary side)
  GridFunction u11;        // their sum
  GridFunction source_aq;  // amplitude times potential (the raw source)
  GridFunction source_m;   // M: right-hand side of the transport relation
  GridFunction e1m;        // localized source fed to the conjugated transform
  VanishingCorrections corrections;
  double sup_u11_2 = 0.0;
  double sup_boundary = 0.0;        // sup over theta of |u11| at r = 1
  double core_residual = 0.0;       // transport defect with the algebraic
                                    // branch's derivative subtracted
};

// Solve the transport relation 4 dz u11 + 4 tau F' u11 = M + (remainder),
// M = (dbar^{-1} of amplitude*q) minus its critical-set jet polynomial, by
// splitting M with the partition of unity: the e1 part goes through the
// phase-conjugated transform, the e2 part is matched algebraically (division
// by 4 tau F', legal because e2 vanishes near the critical set). The
// antiholomorphic orientation mirrors every operator (dbar <-> dz,
// F' <-> conj(F'), sign flip on the algebraic branch).
inline CorrectionU11 build_u11(const GridFunction& q, const Amplitude& amp,
                               const Poly& phi, const CriticalPointSet& crit,
                               const UnityPair& unity, double tau,
                               bool antiholomorphic = false) {
  require(tau > 0.0, "build_u11: tau must be positive");
  require(q.grid == unity.e1.grid, "build_u11: grid mismatch");
  const DiskGrid& g = *q.grid;
  const int n = g.n_r * g.n_theta;

  GridFunction src(q.grid);
  for (int i = 0; i < n; ++i) {
    cplx a = amp.eval(g.node(i));
    src.v[std::size_t(i)] =
        (antiholomorphic ? std::conj(a) : a) * q.v[std::size_t(i)];
  }
  CorrectionU11 out;
  out.corrections = build_vanishing_corrections(src, crit, antiholomorphic);
  out.source_aq = std::move(src);
  out.source_m = out.corrections.rho;

  Poly dphi = phi.derivative();
  out.e1m = GridFunction(q.grid);
  out.u11_2 = GridFunction(q.grid);
  double min_dp = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    std::size_t k = std::size_t(i);
    out.e1m.v[k] = unity.e1.v[k] * out.source_m.v[k];
    double e2 = unity.e2.v[k].real();
    if (e2 == 0.0) continue;
    cplx dp = dphi.eval(g.node(i));
    min_dp = std::min(min_dp, std::abs(dp));
    out.u11_2.v[k] = antiholomorphic
                         ? -e2 * out.source_m.v[k] / (4.0 * tau * std::conj(dp))
                         : e2 * out.source_m.v[k] / (4.0 * tau * dp);
  }
  if (min_dp < 1e-10)
    throw DegeneratePhase(
        "build_u11: F' vanishes where the algebraic branch is active; "
        "enlarge the partition-of-unity radius");

  out.u11_1 = 0.25 * (antiholomorphic ? r_phi(out.e1m, phi, tau)
                                      : r_tilde_phi(out.e1m, phi, tau));
  out.u11 = out.u11_1 + out.u11_2;
  out.sup_u11_2 = norm_sup(out.u11_2);
  GridFunction w4 = 4.0 * out.u11_1;
  out.core_residual = antiholomorphic
                          ? r_phi_residual(w4, out.e1m, phi, tau)
                          : r_tilde_phi_residual(w4, out.e1m, phi, tau);
  ModalField F(out.u11);
  double sb = 0.0;
  for (int j = 0; j < 720; ++j)
    sb = std::max(sb, std::abs(F.boundary_value(2.0 * kPi * j / 720.0)));
  out.sup_boundary = sb;
  return out;
}

// Pointwise defect of the full transport relation (both branches, remainder
// included). At large tau the conjugated transform's oscillation outruns any
// fixed grid, so this is meaningful only while 2 tau |Im F| stays resolved.
inline GridFunction transport_defect(const CorrectionU11& c, const Poly& phi,
                                     double tau, bool antiholomorphic = false) {
  const DiskGrid& g = *c.u11.grid;
  Poly dphi = phi.derivative();
  GridFunction out = antiholomorphic ? dbar_apply(c.u11) : dz_apply(c.u11);
  for (int i = 0; i < g.n_r * g.n_theta; ++i) {
    std::size_t k = std::size_t(i);
    cplx dp = dphi.eval(g.node(i));
    cplx lin = antiholomorphic ? -4.0 * tau * std::conj(dp) * c.u11.v[k]
                               : 4.0 * tau * dp * c.u11.v[k];
    out.v[k] = 4.0 * out.v[k] + lin - c.source_m.v[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reflected term
// ---------------------------------------------------------------------------

namespace detail {

// chi(z) e^{s F(1/zbar)} a(1/zbar) with s = +tau (PlusPhi orientation); the
// MinusPhiBar field is the complex conjugate of the s = -tau evaluation. The
// composed factor is antiholomorphic (resp. holomorphic), so its Laplacian
// vanishes and the defect of the cutoff product reduces to cutoff-derivative
// terms; with the weight e^{-s phi1} factored out every piece is
// exponential-free on the support.
struct ReflectedTerm {
  CutoffField chi;
  Amplitude amp;
  Poly phi;
  Poly dphi;
  double s = 0.0;  // signed tau

  cplx eval(cplx z) const {
    double cv = chi.value(z);
    if (cv == 0.0) return cplx(0.0);
    cplx zr = 1.0 / std::conj(z);
    cplx e = s * phi.eval(zr);
    require(e.real() < kMaxExponent,
            "reflected term: exponent exceeds double range");
    return cv * std::exp(e) * amp.eval(zr);
  }

  // e^{-s phi1(z)} (Delta + q)(chi e^{s F(1/zbar)} a(1/zbar)): the remaining
  // exponent s (phi1(1/zbar) - phi1(z)) is nonpositive on the support by the
  // cutoff sign invariant.
  cplx weighted_defect(cplx z, cplx qv) const {
    double cv = chi.value(z);
    cplx dchi = chi.dz(z);
    double lchi = chi.lap(z);
    if (cv == 0.0 && lchi == 0.0 && std::abs(dchi) == 0.0) return cplx(0.0);
    cplx zr = 1.0 / std::conj(z);
    cplx F = phi.eval(zr);
    double ex = s * (F.real() - phi.eval(z).real());
    cplx zb2 = std::conj(z) * std::conj(z);
    cplx g_zb = -dphi.eval(zr) / zb2;            // dzbar of F(1/zbar)
    cplx at = amp.eval(zr);                      // never zero
    cplx a_zb = -amp.dz(zr) / zb2;               // dzbar of a(1/zbar)
    cplx bracket = lchi + 4.0 * dchi * (s * g_zb + a_zb / at) + qv * cv;
    return std::exp(cplx(ex, s * F.imag())) * at * bracket;
  }
};

inline ReflectedTerm make_reflected(const CutoffField& chi, const Amplitude& a,
                                    const Poly& phi, double s) {
  ReflectedTerm r;
  r.chi = chi;
  r.amp = a;
  r.phi = phi;
  r.dphi = phi.derivative();
  r.s = s;
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Bulk correction u12
// ---------------------------------------------------------------------------

struct CGOConfig {
  CutoffWidths widths;
  double unity_overlap = 0.1;
  double unity_clearance = 0.1;
  bool flank_suppression = true;  // suppress the amplitude on the pad sectors
  double flank_depth = 16.0;
  int flank_modes = 36;
  double flank_radius = 1.2;
  // Suppression band in pad units; NaN selects it from the orientation (the
  // band must cover the angular ramp of the active cutoff).
  double flank_lo = std::numeric_limits<double>::quiet_NaN();
  double flank_hi = std::numeric_limits<double>::quiet_NaN();
  Poly amplitude_exponent;        // exponent P when flank_suppression is off
  WeightedSolveOptions wsolve;
  double trace_margin = 0.08;     // requested window margin for the trace fit
};

struct CorrectionU12 {
  GridFunction ud;          // carried field: weight^{-1} * u12, added to u as-is
  WeightedSolveReport rep;
  GridFunction defect;      // weighted residual P of the explicit terms
  double residual_weighted = 0.0;   // || P ||_{L2}
  double reflected_weighted = 0.0;  // cutoff-term contribution alone
  double u12_norm = 0.0;            // || u12 ||_{L2} in the unweighted metric
};

namespace detail {

// Largest admissible window margin: the trace arc plus margin must stay in
// one negative arc of the boundary profile of the (orientation-adjusted)
// phase.
inline double fit_window_margin(const Poly& phi_used, const AngularArc& arc,
                                double requested, int scan = 4096) {
  BoundaryProfile T(phi_used);
  auto arcs = negative_arcs_of([&](double t) { return T(t); }, scan);
  for (const AngularArc& a : arcs) {
    if (!arc_contains_span(a, arc.lo, arc.hi)) continue;
    double off = wrap_angle(arc.lo - a.lo);
    double slack = std::min(off, (a.hi - a.lo) - (off + arc.length()));
    if (slack <= 1e-4)
      throw ConstraintInfeasible(
          "trace completion: no window margin available around the "
          "homogeneous arc");
    return std::min(requested, 0.9 * slack);
  }
  throw ConstraintInfeasible(
      "trace completion: the homogeneous arc is not contained in a "
      "sign-definite boundary region of the phase profile");
}

}  // namespace detail

// Solve for the bulk correction: (Delta + q) ud = -(Delta + q)(explicit
// terms), with ud's boundary trace matching the explicit terms' trace on the
// homogeneous arc, through the degenerate-weight solver. The driving defect
// is assembled in weighted form (growing factors cancelled analytically), so
// its pieces stay exponential-free; the unweighted right-hand side handed to
// the solver reinstates the weight pointwise.
inline CorrectionU12 build_u12(const GridFunction& q, const CorrectionU11& u11,
                               const Amplitude& amp, const CutoffField& chi,
                               const Poly& phi, double tau,
                               const BoundaryPartition& part,
                               Orientation orientation,
                               const CGOConfig& cfg = {}) {
  const bool anti = orientation == Orientation::MinusPhiBar;
  const DiskGrid& g = *q.grid;
  const int n = g.n_r * g.n_theta;
  const double s = anti ? -tau : tau;

  Poly phi_used = anti ? cplx(-1.0) * phi : phi;
  Poly dphi = phi.derivative();

  // P1: weighted defect of the phase factor times (amplitude - u11),
  // assembled through the same product-rule algebra that built u11_1, so the
  // phase conjugation is exact and the only spectral derivatives taken are of
  // slow fields (the inner-solve residual, the algebraic branch, M). A naive
  // dbar(dz(u11)) would differentiate sampled e^{-2 i tau psi} oscillations
  // and alias once 2 tau |Im F| outruns the grid.
  //   holomorphic:  P1 = -e^{i tau psi} [ r0 + e^{-2 i tau psi}(dbar r1 +
  //                 tau conj(F') r1) + 4 dbar dz u11_2 + q u11 ]
  // with r0 = dbar M - a q (transform residual) and r1 = dz W4 - e1M-package
  // (conjugated-solve residual, W4 the inner transform of 4 u11_1); the
  // antiholomorphic orientation mirrors every operator.
  GridFunction up = oscillation_factor(q.grid, phi, tau, +1.0);
  GridFunction W4 = up * (4.0 * u11.u11_1);
  GridFunction r1 =
      (anti ? dbar_apply(W4) : dz_apply(W4)) - up * u11.e1m;
  GridFunction dr1 = anti ? dz_apply(r1) : dbar_apply(r1);
  GridFunction r0 =
      (anti ? dz_apply(u11.source_m) : dbar_apply(u11.source_m)) -
      u11.source_aq;
  GridFunction d2u2 = anti ? dz_apply(dbar_apply(u11.u11_2))
                           : dbar_apply(dz_apply(u11.u11_2));
  detail::ReflectedTerm refl = detail::make_reflected(chi, amp, phi, s);
  GridFunction defect(q.grid), p2(q.grid);
  for (int i = 0; i < n; ++i) {
    std::size_t k = std::size_t(i);
    cplx z = g.node(i);
    cplx dp = dphi.eval(z);
    cplx dn = std::conj(up.v[k]);  // e^{-2 i tau psi}, sampled exactly
    cplx lin = anti ? -tau * dp * r1.v[k] : tau * std::conj(dp) * r1.v[k];
    cplx inner = r0.v[k] + dn * (dr1.v[k] + lin) + 4.0 * d2u2.v[k] +
                 q.v[k] * u11.u11.v[k];
    cplx osc = std::polar(1.0, tau * phi.eval(z).imag());
    cplx p1 = -osc * inner;
    cplx wd = refl.weighted_defect(z, q.v[k]);
    if (anti) wd = std::conj(wd);
    p2.v[k] = -wd;
    defect.v[k] = p1 + p2.v[k];
  }

  CorrectionU12 out;
  out.residual_weighted = norm_l2(defect);
  out.reflected_weighted = norm_l2(p2);

  // Unweighted right-hand side and trace data for the solver.
  const double M = phase_boundary_max(phi_used);
  if (tau * M > kMaxExponent - 60.0)
    throw OverflowRisk(
        "build_u12: tau times the phase maximum exceeds the representable "
        "weight range");
  GridFunction f(q.grid);
  for (int i = 0; i < n; ++i) {
    std::size_t k = std::size_t(i);
    double p1v = phi_used.eval(g.node(i)).real();
    f.v[k] = -defect.v[k] * std::exp(tau * p1v);
  }
  auto B = std::make_shared<ModalField>(u11.u11);
  const Poly phic = phi;
  auto gdata = [B, phic, tau, anti](double th) -> cplx {
    cplx F = phic.eval(std::polar(1.0, th));
    cplx e = anti ? -std::conj(F) : F;
    return std::exp(tau * e) * B->boundary_value(th);
  };

  AngularArc arc;
  if (!anti) {
    arc.lo = part.center - part.half_width;
    arc.hi = part.center + part.half_width;
  } else {
    arc.lo = part.center + part.half_width + part.pad;
    arc.hi = part.center + 2.0 * kPi - part.half_width - part.pad;
  }
  WeightedSolveOptions opts = cfg.wsolve;
  opts.window_margin = detail::fit_window_margin(phi_used, arc, cfg.trace_margin);
  opts.trace_channels = {-1, 0, 1};

  out.rep = weighted_solve(q, f, gdata, arc, phi_used, tau, opts);
  out.ud = out.rep.u;
  out.defect = std::move(defect);
  const double L = phase_boundary_min(phi_used);
  out.u12_norm = std::exp(-tau * L) * out.rep.weighted_u;
  return out;
}

// ---------------------------------------------------------------------------
// Full assembly
// ---------------------------------------------------------------------------

struct CGOSolution {
  Orientation orientation = Orientation::PlusPhi;
  double tau = 0.0;
  Poly phi;
  Amplitude amplitude;
  CutoffField cutoff;
  UnityPair unity;
  CorrectionU11 u11;
  CorrectionU12 u12;
  GridFunction u;                 // assembled field on the grid
  double residual_weighted = 0.0; // L2 defect of the explicit terms, weighted
  double reflected_defect = 0.0;  // cutoff-term share of that defect
  double trace_sup = 0.0;         // sup |u| over the homogeneous arc at r = 1
  double c0 = 0.0;                // non-stationarity margin of the cutoff
};

inline CGOSolution assemble_cgo(const GridFunction& q, const Poly& phi,
                                const BoundaryPartition& part, double tau,
                                Orientation orientation,
                                const CGOConfig& cfg = {}) {
  require(tau > 0.0, "assemble_cgo: tau must be positive");
  const bool anti = orientation == Orientation::MinusPhiBar;
  const DiskGrid& g = *q.grid;
  const int n = g.n_r * g.n_theta;

  const double M = phase_boundary_max(phi), L = phase_boundary_min(phi);
  if (tau * (M - L) > 560.0)
    throw OverflowRisk(
        "assemble_cgo: tau times the phase range is too large for "
        "double-precision carriers");

  CGOSolution out;
  out.orientation = orientation;
  out.tau = tau;
  out.phi = phi;

  CriticalPointSet crit = find_critical_points(phi);
  out.cutoff = detail::make_cutoff_side(
      phi, part, cfg.widths,
      anti ? detail::CutoffSide::Accessible : detail::CutoffSide::Gap,
      &out.c0);
  out.unity = build_unity(q.grid, crit, cfg.unity_overlap, cfg.unity_clearance);
  if (cfg.flank_suppression) {
    // Cover the active cutoff's angular ramp (pad fractions [plateau,
    // plateau + ramp] from its own arc edge) with an absolute-angle guard of
    // 0.15 rad on both sides, and give the bump a ramp wide enough that the
    // highest fitted mode still resolves it (~0.18 rad) but no wider than
    // the covered wedge region demands.
    double lo = cfg.flank_lo, hi = cfg.flank_hi;
    double ap = cfg.widths.plateau_frac(anti);
    double rampout = ap + cfg.widths.ramp_frac(anti);
    double guard = 0.15 / part.pad;
    if (std::isnan(lo)) lo = (anti ? (1.0 - rampout) : ap) - guard;
    if (std::isnan(hi)) hi = (anti ? (1.0 - ap) : rampout) + guard;
    double framp = std::max(0.18 / part.pad,
                            0.8 * cfg.widths.ramp_frac(anti));
    out.amplitude = flank_amplitude(part, cfg.flank_depth, cfg.flank_modes,
                                    cfg.flank_radius, lo, hi, framp);
  } else {
    out.amplitude = make_amplitude(cfg.amplitude_exponent);
  }
  out.u11 = build_u11(q, out.amplitude, phi, crit, out.unity, tau, anti);
  out.u12 = build_u12(q, out.u11, out.amplitude, out.cutoff, phi, tau, part,
                      orientation, cfg);

  detail::ReflectedTerm refl =
      detail::make_reflected(out.cutoff, out.amplitude, phi, anti ? -tau : tau);
  out.u = GridFunction(q.grid);
  for (int i = 0; i < n; ++i) {
    std::size_t k = std::size_t(i);
    cplx z = g.node(i);
    cplx F = phi.eval(z);
    cplx mainexp = std::exp(tau * (anti ? -std::conj(F) : F));
    cplx a = out.amplitude.eval(z);
    if (anti) a = std::conj(a);
    cplx rf = refl.eval(z);
    if (anti) rf = std::conj(rf);
    out.u.v[k] = mainexp * (a - out.u11.u11.v[k]) - rf + out.u12.ud.v[k];
  }
  require(all_finite(out.u), "assemble_cgo: assembled field is not finite");

  out.residual_weighted = out.u12.residual_weighted;
  out.reflected_defect = out.u12.reflected_weighted;
  // On the homogeneous arc the cutoff is 1 and 1/zbar = z, so the main and
  // reflected traces cancel exactly and the assembled trace equals the
  // solver's fitted-trace mismatch.
  out.trace_sup = out.u12.rep.trace_mismatch;
  return out;
}

// ---------------------------------------------------------------------------
// Cross-term decay
// ---------------------------------------------------------------------------

struct DecayReport {
  RVec tau;
  RVec value;
  double slope = 0.0;  // log-log fit over the positive entries
};

// J(tau) = integral of density * chi * e^{tau (F(1/zbar) - conj(F(z)))} over
// the collar support. The exponent's real part is nonpositive there (cutoff
// invariant) and its angular oscillation rate grows linearly in tau, so the
// rule refines its resolution with tau.
inline DecayReport cross_term_integral(const std::function<cplx(cplx)>& density,
                                       const CutoffField& chi, const Poly& phi,
                                       const RVec& taus) {
  DecayReport out;
  out.tau = taus;
  out.value.assign(taus.size(), 0.0);
  if (chi.empty()) return out;

  const double r0 = chi.support_radius();
  const detail::AngularWindow& win = chi.window();
  Poly dphi = phi.derivative();

  // Oscillation-rate bounds over the closed support (both arguments).
  double rate_ang = 0.0, rate_rad = 0.0;
  for (int jt = 0; jt <= 64; ++jt) {
    double th = win.lo + win.width * double(jt) / 64.0;
    for (int jr = 0; jr <= 16; ++jr) {
      double rho = r0 + (1.0 - r0) * double(jr) / 16.0;
      cplx z = std::polar(rho, th);
      cplx zr = 1.0 / std::conj(z);
      rate_ang = std::max(rate_ang, std::abs((zr * dphi.eval(zr)).real()) +
                                        std::abs((z * dphi.eval(z)).real()));
      rate_rad = std::max(rate_rad, std::abs(dphi.eval(zr)) / rho +
                                        std::abs(dphi.eval(z)));
    }
  }

  for (std::size_t kt = 0; kt < taus.size(); ++kt) {
    double tau = taus[kt];
    int na = std::max(512, int(1.3 * tau * rate_ang * win.width) + 128);
    int nr = std::max(64, int(1.3 * tau * rate_rad * (1.0 - r0)) + 64);
    RVec xr, wr, xa, wa;
    detail::gauss_on_interval(nr, r0, 1.0, xr, wr);
    detail::gauss_on_interval(na, win.lo, win.lo + win.width, xa, wa);
    cplx J(0.0);
    for (int ia = 0; ia < na; ++ia) {
      double th = xa[std::size_t(ia)];
      double hw = win.value(th);
      if (hw == 0.0) continue;
      for (int ir = 0; ir < nr; ++ir) {
        double rho = xr[std::size_t(ir)];
        cplx z = std::polar(rho, th);
        double cv = chi.value(z);
        if (cv == 0.0) continue;
        cplx zr = 1.0 / std::conj(z);
        cplx e = tau * (phi.eval(zr) - std::conj(phi.eval(z)));
        if (e.real() > 0.0) e = cplx(0.0, e.imag());  // rounding at r = 1
        J += wr[std::size_t(ir)] * wa[std::size_t(ia)] * rho * density(z) *
             cv * std::exp(e);
      }
    }
    out.value[kt] = std::abs(J);
  }

  RVec lx, ly;
  for (std::size_t k = 0; k < taus.size(); ++k)
    if (out.value[k] > 0.0) {
      lx.push_back(taus[k]);
      ly.push_back(out.value[k]);
    }
  if (lx.size() >= 2) out.slope = log_slope(lx, ly);
  return out;
}

}  // namespace calderon
