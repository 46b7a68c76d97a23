#pragma once
// Holomorphic phase machinery on the unit disk: critical-point extraction,
// boundary sign profiles and their arc decompositions, probe polynomials that
// steer a single critical point, Hermite 2-jet interpolation, and a designer
// for phases whose outward normal derivative realizes a two-plateau profile.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "calderon/core.hpp"
#include "calderon/errors.hpp"
#include "calderon/polynomial.hpp"

namespace calderon {

// ---------------------------------------------------------------------------
// Pointwise phase data
// ---------------------------------------------------------------------------

struct PhasePoint {
  cplx value{};  // F(z)
  cplx d1{};     // F'(z)
  cplx d2{};     // F''(z)
  double weight() const { return value.real(); }       // Re F
  double oscillation() const { return value.imag(); }  // Im F
};

inline PhasePoint eval_phase(const Poly& phi, cplx z) {
  CVec d = phi.eval_derivs(z, 2);
  return PhasePoint{d[0], d[1], d[2]};
}

// Hessian of Im F for holomorphic F, expressed through F''.
inline Eigen::Matrix2d hessian_im(cplx d2) {
  Eigen::Matrix2d h;
  h << d2.imag(), d2.real(), d2.real(), -d2.imag();
  return h;
}

// |det Hess(Im F)| = |F''|^2 for holomorphic F.
inline double abs_det_hessian_im(cplx d2) { return std::norm(d2); }

// Outward normal derivative of Re F on the unit circle: Re(z F'(z)), z=e^{it}.
class BoundaryProfile {
 public:
  explicit BoundaryProfile(const Poly& phi)
      : dphi_(phi.derivative()), ddphi_(dphi_.derivative()) {}
  double operator()(double theta) const {
    cplx z = std::polar(1.0, theta);
    return (z * dphi_.eval(z)).real();
  }
  // d/dtheta of the profile: Re(i z (F' + z F'')) on the unit circle.
  double d1(double theta) const {
    cplx z = std::polar(1.0, theta);
    return (kI * z * (dphi_.eval(z) + z * ddphi_.eval(z))).real();
  }

 private:
  Poly dphi_;
  Poly ddphi_;
};

inline double boundary_profile(const Poly& phi, double theta) {
  return BoundaryProfile(phi)(theta);
}

// ---------------------------------------------------------------------------
// Critical points
// ---------------------------------------------------------------------------

struct CriticalPoint {
  cplx z;   // location in the open unit disk
  cplx d2;  // F'' there (nonzero for an admissible phase)
};

struct CriticalPointSet {
  std::vector<CriticalPoint> pts;

  std::size_t size() const { return pts.size(); }
  bool empty() const { return pts.empty(); }
  const CriticalPoint& operator[](std::size_t k) const { return pts[k]; }

  std::vector<cplx> locations() const {
    std::vector<cplx> zs;
    zs.reserve(pts.size());
    for (const auto& p : pts) zs.push_back(p.z);
    return zs;
  }
};

struct CriticalPointOptions {
  double boundary_margin = 0.05;  // reject roots within this band of |z| = 1
  double degeneracy_tol = 1e-8;   // min |F''| relative to coefficient scale
  double separation_tol = 1e-6;   // min pairwise distance between points
};

inline CriticalPointSet find_critical_points(const Poly& phi,
                                             const CriticalPointOptions& opt = {}) {
  Poly d = phi.derivative();
  if (d.max_coeff() == 0.0) throw DegeneratePhase("phase has identically zero gradient");
  CVec roots = poly_roots(d);

  std::vector<cplx> inside;
  for (cplx r : roots) {
    double a = std::abs(r);
    if (a < 1.0 - opt.boundary_margin) {
      inside.push_back(r);
    } else if (a <= 1.0 + opt.boundary_margin) {
      throw BoundaryCriticalPoint("critical point within margin of the unit circle at " +
                                  fmt_g17(r.real()) + " + " + fmt_g17(r.imag()) + "i");
    }
  }

  for (std::size_t i = 0; i < inside.size(); ++i)
    for (std::size_t j = i + 1; j < inside.size(); ++j)
      if (std::abs(inside[i] - inside[j]) < opt.separation_tol)
        throw CoincidentCriticalPoints("critical points closer than separation tolerance near " +
                                       fmt_g17(inside[i].real()) + " + " +
                                       fmt_g17(inside[i].imag()) + "i");

  double scale = std::max(1.0, d.max_coeff());
  CriticalPointSet set;
  for (cplx z : inside) {
    cplx d2 = phi.eval_derivs(z, 2)[2];
    if (std::abs(d2) < opt.degeneracy_tol * scale)
      throw DegenerateCriticalPoint("vanishing second derivative at critical point " +
                                    fmt_g17(z.real()) + " + " + fmt_g17(z.imag()) + "i");
    set.pts.push_back(CriticalPoint{z, d2});
  }
  return set;
}

// Perturb a phase whose gradient has clustered roots so that all critical
// points become simple. Each cluster of m nearby roots is replaced by m
// collinear points spaced eps2 apart along the real direction through the
// cluster centroid. The constant term of the phase is preserved.
inline Poly split_degenerate_critical_points(const Poly& phi, double eps2,
                                             double cluster_tol = 1e-6) {
  Poly d = phi.derivative();
  if (d.max_coeff() == 0.0) throw DegeneratePhase("phase has identically zero gradient");
  CVec roots = poly_roots(d);
  if (roots.empty()) return phi;

  const std::size_t n = roots.size();
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(roots[i] - roots[j]) < cluster_tol) parent[find(i)] = find(j);

  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::ptrdiff_t> slot(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = find(i);
    if (slot[r] < 0) {
      slot[r] = static_cast<std::ptrdiff_t>(clusters.size());
      clusters.emplace_back();
    }
    clusters[static_cast<std::size_t>(slot[r])].push_back(i);
  }

  CVec adjusted = roots;
  for (const auto& cluster : clusters) {
    std::size_t m = cluster.size();
    if (m < 2) continue;
    cplx centroid = 0.0;
    for (std::size_t i : cluster) centroid += roots[i];
    centroid /= static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k)
      adjusted[cluster[k]] =
          centroid + (static_cast<double>(k) - 0.5 * static_cast<double>(m - 1)) * eps2;
  }

  Poly dt = d;
  dt.trim(1e-14 * d.max_coeff());
  Poly dnew = poly_from_roots(adjusted, dt.c.back());
  return dnew.antiderivative(phi.c.empty() ? cplx(0.0) : phi.c[0]);
}

// ---------------------------------------------------------------------------
// Boundary partition and sign classification
// ---------------------------------------------------------------------------

// Splits the unit circle into a data gap {|t - center| < half_width}, its
// padded enlargement {|t - center| < half_width + pad}, and the accessible
// arc (the complement of the padded gap).
struct BoundaryPartition {
  double center = 0.0;
  double half_width = 0.0;
  double pad = 0.0;

  BoundaryPartition(double center_in, double half_width_in, double pad_in) {
    if (!(half_width_in > 0.0) || !(pad_in >= 0.0) ||
        !(half_width_in + pad_in <= kPi + 1e-12))
      throw ConfigError("boundary partition requires 0 < half_width and 0 <= pad with "
                        "half_width + pad <= pi");
    center = std::remainder(center_in, 2.0 * kPi);
    if (center < 0.0) center += 2.0 * kPi;
    half_width = half_width_in;
    pad = pad_in;
  }

  double padded_half_width() const { return half_width + pad; }
  bool in_gap(double theta) const { return ang_dist(theta, center) < half_width; }
  bool in_padded_gap(double theta) const {
    return ang_dist(theta, center) < half_width + pad;
  }
  bool in_accessible(double theta) const { return !in_padded_gap(theta); }
};

// Counterclockwise arc from lo to hi (angles unwrapped, hi in (lo, lo + 2 pi]).
struct AngularArc {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

namespace detail {

// Maximum of a smooth periodic function over the closed arc [a, b], by dense
// sampling plus one parabolic refinement around an interior maximizer.
template <class F>
double arc_max(F&& g, double a, double b, int m = 8192) {
  if (!(b > a)) return g(a);
  double h = (b - a) / m;
  double best = -std::numeric_limits<double>::infinity();
  int best_j = 0;
  for (int j = 0; j <= m; ++j) {
    double v = g(a + h * j);
    if (v > best) {
      best = v;
      best_j = j;
    }
  }
  if (best_j > 0 && best_j < m) {
    double fm = g(a + h * (best_j - 1));
    double f0 = best;
    double fp = g(a + h * (best_j + 1));
    double denom = fm - 2.0 * f0 + fp;
    if (std::abs(denom) > 1e-300) {
      double delta = 0.5 * h * (fm - fp) / denom;
      if (std::abs(delta) <= h) best = std::max(best, g(a + h * best_j + delta));
    }
  }
  return best;
}

template <class F>
double arc_min(F&& g, double a, double b, int m = 8192) {
  return -arc_max([&](double t) { return -g(t); }, a, b, m);
}

// Maximal arcs of {g < 0} on the circle, endpoints refined by bisection.
template <class F>
std::vector<AngularArc> negative_arcs_of(F&& g, int n) {
  std::vector<double> val(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) val[static_cast<std::size_t>(j)] = g(2.0 * kPi * j / n);

  auto bisect = [&](double lo, double hi) {
    // sign(g(lo)) != sign(g(hi)) in the weak sense used below
    bool lo_neg = g(lo) < 0.0;
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (lo + hi);
      if ((g(mid) < 0.0) == lo_neg)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  };

  std::vector<double> entering, exiting;
  bool any_neg = false, any_pos = false;
  for (int j = 0; j < n; ++j) {
    bool a = val[static_cast<std::size_t>(j)] < 0.0;
    bool b = val[static_cast<std::size_t>((j + 1) % n)] < 0.0;
    any_neg |= a;
    any_pos |= !a;
    double lo = 2.0 * kPi * j / n;
    double hi = 2.0 * kPi * (j + 1) / n;
    if (!a && b) entering.push_back(bisect(lo, hi));
    if (a && !b) exiting.push_back(bisect(lo, hi));
  }

  std::vector<AngularArc> arcs;
  if (entering.empty()) {
    if (any_neg && !any_pos) arcs.push_back(AngularArc{0.0, 2.0 * kPi});
    return arcs;
  }
  std::sort(entering.begin(), entering.end());
  std::sort(exiting.begin(), exiting.end());
  for (double e : entering) {
    auto it = std::upper_bound(exiting.begin(), exiting.end(), e);
    double x = (it == exiting.end()) ? exiting.front() + 2.0 * kPi : *it;
    arcs.push_back(AngularArc{e, x});
  }
  return arcs;
}

}  // namespace detail

struct BoundaryClassification {
  double sup_gap = 0.0;         // sup of the profile over the closed gap test arc
  double inf_accessible = 0.0;  // inf of the profile over the closed accessible arc
  bool gap_negative = false;        // sup_gap <= -level
  bool accessible_positive = false; // inf_accessible >= +level
  std::vector<AngularArc> negative_arcs;  // {t : profile(t) < -level}
  std::vector<AngularArc> positive_arcs;  // {t : profile(t) > +level}
};

// Sign classification of the boundary profile Re(z F') against two test arcs:
// the gap arc {|t - center| <= gap_end} and the accessible arc
// {|t - center| >= accessible_start}.
inline BoundaryClassification classify_boundary(const Poly& phi, double center,
                                                double gap_end, double accessible_start,
                                                double level = 0.0, int n_samples = 4096) {
  if (!(gap_end > 0.0) || !(accessible_start > 0.0) || gap_end > kPi + 1e-12 ||
      accessible_start > kPi + 1e-12)
    throw ConfigError("boundary classification arcs must have half-widths in (0, pi]");
  BoundaryProfile T(phi);
  BoundaryClassification out;
  out.sup_gap = detail::arc_max(T, center - gap_end, center + gap_end, n_samples);
  out.inf_accessible = detail::arc_min(T, center + accessible_start,
                                       center + 2.0 * kPi - accessible_start, n_samples);
  out.gap_negative = out.sup_gap <= -level;
  out.accessible_positive = out.inf_accessible >= level;
  out.negative_arcs =
      detail::negative_arcs_of([&](double t) { return T(t) + level; }, n_samples);
  out.positive_arcs =
      detail::negative_arcs_of([&](double t) { return level - T(t); }, n_samples);
  return out;
}

inline BoundaryClassification classify_boundary(const Poly& phi,
                                                const BoundaryPartition& part,
                                                double level = 0.0, int n_samples = 4096) {
  return classify_boundary(phi, part.center, part.padded_half_width(),
                           part.padded_half_width(), level, n_samples);
}

// ---------------------------------------------------------------------------
// Probe polynomials
// ---------------------------------------------------------------------------

// Polynomial vanishing to second order at every critical point except the
// selected one, where instead
//   p(z_j) = 0,  p'(z_j) = d,  p''(z_j) = d1.
inline Poly build_probe_polynomial(const CriticalPointSet& cps, std::size_t j, cplx d,
                                   cplx d1) {
  require(j < cps.size(), "probe index out of range");
  cplx zj = cps[j].z;
  Poly q(CVec{1.0});
  for (std::size_t k = 0; k < cps.size(); ++k) {
    if (k == j) continue;
    cplx dz = zj - cps[k].z;
    if (std::abs(dz) < 1e-12)
      throw CriticalPointCollision("probe target coincides with another critical point");
    Poly lin(CVec{-cps[k].z / dz, 1.0 / dz});
    q = q * lin * lin * lin;
  }
  // Quadratic factor chosen so the prescribed 2-jet at z_j holds exactly even
  // though q'(z_j) need not vanish.
  cplx qp = q.eval_derivs(zj, 1)[1];
  cplx alpha = d1 - 2.0 * d * qp;
  Poly shift(CVec{-zj, 1.0});
  Poly s = (0.5 * alpha) * (shift * shift) + d * shift;
  return s * q;
}

// First-order motion of the selected critical point of F + eps * p when
// p'(z_j) = d and all other critical points carry a vanishing 1-jet of p.
inline cplx probe_velocity(const CriticalPointSet& cps, std::size_t j, cplx d) {
  require(j < cps.size(), "probe index out of range");
  return -d / cps[j].d2;
}

// ---------------------------------------------------------------------------
// Hermite 2-jet interpolation
// ---------------------------------------------------------------------------

namespace detail {

inline Poly lagrange_interpolant(const std::vector<cplx>& nodes, const CVec& vals) {
  Poly acc(CVec{});
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    Poly lk(CVec{1.0});
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      if (j == k) continue;
      cplx dz = nodes[k] - nodes[j];
      lk = lk * Poly(CVec{-nodes[j] / dz, 1.0 / dz});
    }
    acc = acc + vals[k] * lk;
  }
  return acc;
}

}  // namespace detail

// The three stages of the jet interpolant: m1 matches values, m2 the first
// derivatives on top of m1, m3 the second derivatives on top of m1 + m2.
struct HermiteJetPieces {
  Poly m1, m2, m3;
  Poly sum() const { return m1 + m2 + m3; }
};

inline HermiteJetPieces hermite_jet_pieces(const std::vector<cplx>& nodes,
                                           const CVec& v0, const CVec& v1,
                                           const CVec& v2) {
  const std::size_t n = nodes.size();
  require(n >= 1 && v0.size() == n && v1.size() == n && v2.size() == n,
          "jet interpolation needs matching node and value counts");
  double scale = 1.0;
  for (cplx z : nodes) scale = std::max(scale, std::abs(z));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(nodes[i] - nodes[j]) < 1e-12 * scale)
        throw InterpolationSingular("jet interpolation nodes are not distinct");

  HermiteJetPieces out;
  out.m1 = detail::lagrange_interpolant(nodes, v0);
  Poly r = poly_from_roots(CVec(nodes.begin(), nodes.end()));

  CVec s_vals(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx rp = r.eval_derivs(nodes[k], 1)[1];
    s_vals[k] = (v1[k] - out.m1.eval_derivs(nodes[k], 1)[1]) / rp;
  }
  out.m2 = r * detail::lagrange_interpolant(nodes, s_vals);

  Poly m12 = out.m1 + out.m2;
  CVec t_vals(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx rp = r.eval_derivs(nodes[k], 1)[1];
    t_vals[k] = (v2[k] - m12.eval_derivs(nodes[k], 2)[2]) / (2.0 * rp * rp);
  }
  out.m3 = (r * r) * detail::lagrange_interpolant(nodes, t_vals);
  return out;
}

// Polynomial of degree <= 3n-1 with prescribed value, first, and second
// derivative at each of n distinct nodes.
inline Poly hermite_jet_interpolant(const std::vector<cplx>& nodes, const CVec& v0,
                                    const CVec& v1, const CVec& v2) {
  return hermite_jet_pieces(nodes, v0, v1, v2).sum();
}

// ---------------------------------------------------------------------------
// Two-plateau phase design
// ---------------------------------------------------------------------------

// Designs a polynomial phase, vanishing to second order at the origin, whose
// boundary profile Re(z F') is approximately -gap_depth_target on the gap
// plateau {|t - center| <= gap_plateau_end} and +accessible_level on
// {|t - center| >= accessible_plateau_start}. A phase with a double zero at
// the origin can only carry boundary modes m >= 2, and a "low at the gap,
// high at the antipode" profile has an order-one mode-1 component, so the
// two-plateau shape is realized by weighted least squares over modes
// 2..n_modes fitted on the plateau arcs only: the transition band is left
// free to absorb the unrepresentable part.
struct TwoPlateauConfig {
  BoundaryPartition partition;
  double gap_plateau_end = 0.75;
  double accessible_plateau_start = 2.35;
  double accessible_level = 1.0;
  double gap_depth_target = 1.2;
  // Pinned mode-2 cosine coefficient of the profile in the centered frame.
  // Left free, the fit tends to starve mode 2, collapsing the origin Hessian
  // and spawning a second critical point right next to the origin.
  double mode2_pin = -0.8;
  bool pin_mode2 = true;
  int n_modes = 12;   // highest boundary mode retained
  int n_quad = 8192;  // quadrature points for the profile fit
  double mode_penalty = 0.0;  // optional ridge ~ penalty * m^4 on mode m
  double interior_radius = 0.35;   // auxiliary critical points confined here
  double clearance_radius = 1.05;  // ... or pushed beyond here
  double sign_margin = 0.05;       // required plateau sign margins
  double min_hessian = 0.15;       // minimal |F''| at every critical point
  CriticalPointOptions cp_options{};
};

struct AdmissiblePhase {
  Poly phi;
  double gap_depth = 0.0;      // realized plateau depth at the gap center
  double fit_residual = 0.0;   // rms plateau misfit of the realized profile
  CriticalPointSet critical_points;
  BoundaryClassification classification;
};

inline AdmissiblePhase build_admissible_phase(const TwoPlateauConfig& cfg) {
  const double g = cfg.gap_plateau_end;
  const double s = cfg.accessible_plateau_start;
  if (!(cfg.partition.half_width <= g) || !(g < s) ||
      !(s <= cfg.partition.padded_half_width()))
    throw ConfigError("plateau arcs must satisfy half_width <= gap_plateau_end < "
                      "accessible_plateau_start <= padded half-width");
  require(cfg.n_modes >= 2 && cfg.n_quad >= 16 * cfg.n_modes,
          "two-plateau design needs n_modes >= 2 and adequate quadrature");

  // Ideal profile on the plateau arcs, in the frame centered on the gap.
  auto on_plateau = [&](double tp) {
    double a = ang_dist(tp, 0.0);
    return a <= g || a >= s;
  };
  auto ideal = [&](double tp) {
    return ang_dist(tp, 0.0) <= g ? -cfg.gap_depth_target : cfg.accessible_level;
  };

  // Weighted least squares for profile(t') = sum_m p_m cos(m t') + q_m sin(m t'),
  // m = 2..n_modes, fitted where the plateau indicator is on.
  const int nq = cfg.n_quad;
  const int nm = cfg.n_modes - 1;        // modes 2..n_modes
  const int dim = 2 * nm;                // cos block then sin block
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd momt = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd basis(dim);
  double ideal_sq = 0.0, weight_mass = 0.0;
  for (int j = 0; j < nq; ++j) {
    double tp = 2.0 * kPi * j / nq;
    if (!on_plateau(tp)) continue;
    for (int k = 0; k < nm; ++k) {
      basis[k] = std::cos((k + 2) * tp);
      basis[nm + k] = std::sin((k + 2) * tp);
    }
    double y = ideal(tp);
    gram.noalias() += basis * basis.transpose();
    momt.noalias() += y * basis;
    ideal_sq += y * y;
    weight_mass += 1.0;
  }
  for (int k = 0; k < nm; ++k) {
    double pen = cfg.mode_penalty * weight_mass * sq(sq(static_cast<double>(k + 2)));
    gram(k, k) += pen;
    gram(nm + k, nm + k) += pen;
  }
  gram.diagonal().array() += 1e-12 * gram.trace() / dim;

  Eigen::VectorXd sol(dim);
  if (cfg.pin_mode2) {
    // Fix the mode-2 pair (cos at index 0, sin at index nm) and solve the
    // reduced normal equations for the remaining coefficients.
    Eigen::VectorXd pinned = Eigen::VectorXd::Zero(dim);
    pinned[0] = cfg.mode2_pin;
    std::vector<int> free_idx;
    for (int i = 0; i < dim; ++i)
      if (i != 0 && i != nm) free_idx.push_back(i);
    const int nf = static_cast<int>(free_idx.size());
    Eigen::MatrixXd gf(nf, nf);
    Eigen::VectorXd mf(nf);
    for (int a = 0; a < nf; ++a) {
      mf[a] = momt[free_idx[static_cast<std::size_t>(a)]] -
              gram.row(free_idx[static_cast<std::size_t>(a)]).dot(pinned);
      for (int b = 0; b < nf; ++b)
        gf(a, b) = gram(free_idx[static_cast<std::size_t>(a)],
                        free_idx[static_cast<std::size_t>(b)]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gf);
    if (ldlt.info() != Eigen::Success)
      throw IllConditionedFit("two-plateau profile fit failed to factor");
    Eigen::VectorXd xf = ldlt.solve(mf);
    sol = pinned;
    for (int a = 0; a < nf; ++a) sol[free_idx[static_cast<std::size_t>(a)]] = xf[a];
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success)
      throw IllConditionedFit("two-plateau profile fit failed to factor");
    sol = ldlt.solve(momt);
  }

  // Boundary mode m of the profile comes from the z^m coefficient a_m via
  // profile contributions m * [Re a_m cos(m t') - Im a_m sin(m t')], rotated
  // back from the centered frame.
  const cplx rot = std::polar(1.0, -cfg.partition.center);
  CVec coeffs(static_cast<std::size_t>(cfg.n_modes) + 1, 0.0);
  for (int k = 0; k < nm; ++k) {
    int m = k + 2;
    cplx am(sol[k] / m, -sol[nm + k] / m);
    coeffs[static_cast<std::size_t>(m)] = am * std::pow(rot, m);
  }
  Poly phi(std::move(coeffs));

  AdmissiblePhase out;
  out.phi = phi;
  BoundaryProfile profile(phi);
  out.gap_depth = -profile(cfg.partition.center);
  double rss = ideal_sq - 2.0 * sol.dot(momt) + sol.dot(gram.selfadjointView<Eigen::Lower>() * sol);
  out.fit_residual = std::sqrt(std::max(0.0, rss) / std::max(1.0, weight_mass));

  // Critical points away from the origin are the roots of F'(z)/z; they must
  // stay clear of the annulus between interior_radius and clearance_radius.
  Poly dphi = phi.derivative();
  require(dphi.c.size() >= 2 && std::abs(dphi.c[0]) == 0.0,
          "designed phase must vanish to second order at the origin");
  Poly w(CVec(dphi.c.begin() + 1, dphi.c.end()));
  if (w.max_coeff() == 0.0)
    throw InadmissiblePhase("designed phase is degenerate: zero quadratic part");
  for (cplx r : poly_roots(w)) {
    double a = std::abs(r);
    if (a > cfg.interior_radius && a < cfg.clearance_radius)
      throw InadmissiblePhase("auxiliary critical point at radius " + fmt_g17(a) +
                              " violates the clearance annulus");
  }

  out.critical_points = find_critical_points(phi, cfg.cp_options);
  for (const auto& p : out.critical_points.pts)
    if (std::abs(p.d2) < cfg.min_hessian)
      throw InadmissiblePhase("critical point with |F''| = " + fmt_g17(std::abs(p.d2)) +
                              " below the stationary-phase floor");

  // Validate realized plateau signs on the plateau arcs.
  out.classification =
      classify_boundary(phi, cfg.partition.center, g, s, cfg.sign_margin, cfg.n_quad);
  if (!out.classification.gap_negative || !out.classification.accessible_positive)
    throw InadmissiblePhase("realized profile misses the required plateau sign margins: "
                            "sup_gap = " + fmt_g17(out.classification.sup_gap) +
                            ", inf_accessible = " +
                            fmt_g17(out.classification.inf_accessible));
  return out;
}

// Pinned wide-gap scenario: gap of half-width 0.35 at angle pi/2, accessible
// arc of half-width ~0.6 at angle 3 pi/2.
inline TwoPlateauConfig canonical_two_plateau_config() {
  TwoPlateauConfig cfg{BoundaryPartition(0.5 * kPi, 0.35, kPi - 0.6 - 0.35)};
  cfg.gap_plateau_end = 0.75;
  cfg.accessible_plateau_start = 2.35;
  cfg.accessible_level = 1.0;
  cfg.gap_depth_target = 1.2;
  cfg.n_modes = 14;
  cfg.n_quad = 8192;
  cfg.interior_radius = 0.35;
  cfg.clearance_radius = 1.05;
  cfg.sign_margin = 0.05;
  return cfg;
}

}  // namespace calderon
