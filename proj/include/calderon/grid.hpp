#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "calderon/core.hpp"

namespace calderon {

// Gauss-Legendre nodes/weights on (-1,1), ascending. Newton on the Legendre
// recurrence; converges to machine precision in < 10 iterations.
inline void gauss_legendre(int n, RVec& x, RVec& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int k = 0; k < (n + 1) / 2; ++k) {
    double t = std::cos(kPi * (double(k) + 0.75) / (double(n) + 0.5));
    double p0 = 0, p1 = 0;
    for (int it = 0; it < 60; ++it) {
      p0 = 1.0;
      p1 = t;
      for (int j = 2; j <= n; ++j) {
        double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / double(j);
        p0 = p1;
        p1 = p2;
      }
      double dp = double(n) * (t * p1 - p0) / (t * t - 1.0);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    p0 = 1.0;
    p1 = t;
    for (int j = 2; j <= n; ++j) {
      double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / double(j);
      p0 = p1;
      p1 = p2;
    }
    double dp = double(n) * (t * p1 - p0) / (t * t - 1.0);
    // k-th largest root; store ascending.
    x[n - 1 - k] = t;
    x[k] = -t;
    double wk = 2.0 / ((1.0 - t * t) * dp * dp);
    w[k] = wk;
    w[n - 1 - k] = wk;
  }
}

// Polar tensor grid on the unit disk: Gauss-Legendre radii on (0,1) times a
// uniform angular grid. Node index = i_r * n_theta + i_theta. Radial
// derivatives use the barycentric differentiation matrix; the angular
// direction is handled by FFT. Per-mode radial solvers are cached lazily per
// grid instance, so one grid serves every operator and every tau.
class DiskGrid {
public:
  int n_r = 0;
  int n_theta = 0;
  double collar_width = 0.55;  // O_eps = { 1 - |z| <= collar_width }

  RVec r;         // radii, ascending, in (0,1)
  RVec theta;     // 2 pi t / n_theta
  RVec w_ring;    // area weight of any node on ring i_r (sums to pi)
  RVec bary;      // barycentric weights of the radial nodes

  Eigen::MatrixXd Dr;           // d/dr on radial nodal values
  Eigen::RowVectorXd bd_eval;   // interpolation row at r = 1
  Eigen::RowVectorXd bd_deriv;  // d/dr row at r = 1

  DiskGrid(int nr, int nt, double collar) : n_r(nr), n_theta(nt), collar_width(collar) {
    if (nr < 8 || nt < 16 || nt % 2 != 0)
      throw InvalidResolution("grid needs n_r >= 8 and even n_theta >= 16");
    if (!(collar > 0.0 && collar < 1.0))
      throw InvalidResolution("collar width must lie in (0,1)");
    RVec x, gw;
    gauss_legendre(nr, x, gw);
    r.resize(nr);
    w_ring.resize(nr);
    theta.resize(nt);
    for (int i = 0; i < nr; ++i) {
      r[i] = 0.5 * (x[i] + 1.0);
      w_ring[i] = 0.5 * gw[i] * r[i] * (2.0 * kPi / double(nt));
    }
    for (int t = 0; t < nt; ++t) theta[t] = 2.0 * kPi * double(t) / double(nt);

    bary.resize(nr);
    for (int j = 0; j < nr; ++j)
      bary[j] = (j % 2 ? -1.0 : 1.0) * std::sqrt((1.0 - x[j] * x[j]) * gw[j]);

    Dr.resize(nr, nr);
    for (int i = 0; i < nr; ++i) {
      double rowsum = 0.0;
      for (int j = 0; j < nr; ++j) {
        if (i == j) continue;
        double d = (bary[j] / bary[i]) / (x[i] - x[j]);
        Dr(i, j) = 2.0 * d;  // d/dr = 2 d/dx under r = (x+1)/2
        rowsum += d;
      }
      Dr(i, i) = -2.0 * rowsum;
    }

    // Rows at x = 1 (r = 1), a non-node: interpolation and derivative of the
    // nodal interpolant.
    bd_eval.resize(nr);
    bd_deriv.resize(nr);
    double den = 0.0, den2 = 0.0;
    for (int j = 0; j < nr; ++j) {
      den += bary[j] / (1.0 - x[j]);
      den2 += bary[j] / sq(1.0 - x[j]);
    }
    for (int j = 0; j < nr; ++j) {
      double lj = (bary[j] / (1.0 - x[j])) / den;
      bd_eval(j) = lj;
      // p'(1) = sum_j f_j [ -b_j/(1-x_j)^2 / den + l_j * den2 / den ]
      bd_deriv(j) = 2.0 * (-(bary[j] / sq(1.0 - x[j])) / den + lj * den2 / den);
    }
  }

  std::size_t size() const { return std::size_t(n_r) * n_theta; }
  std::size_t idx(int ir, int it) const { return std::size_t(ir) * n_theta + it; }
  cplx node(int ir, int it) const { return std::polar(r[ir], theta[it]); }
  cplx node(int i) const { return node(i / n_theta, i % n_theta); }
  double area_weight(int ir) const { return w_ring[ir]; }

  int freq_of_bin(int t) const { return t < n_theta / 2 ? t : t - n_theta; }
  int bin_of_freq(int n) const { return n >= 0 ? n : n + n_theta; }

  // ---- angular FFT ----------------------------------------------------

  // modes(i_r, bin) with values v = sum_n modes(.,bin(n)) e^{i n theta}
  Eigen::MatrixXcd to_modes(const CVec& v) const {
    require(v.size() == size(), "to_modes: size mismatch");
    Eigen::MatrixXcd m(n_r, n_theta);
    std::lock_guard<std::mutex> lk(fft_mu_);
    CVec in(n_theta), out(n_theta);
    for (int ir = 0; ir < n_r; ++ir) {
      for (int t = 0; t < n_theta; ++t) in[t] = v[idx(ir, t)];
      fft_.fwd(out, in);
      for (int t = 0; t < n_theta; ++t) m(ir, t) = out[t] / double(n_theta);
    }
    return m;
  }

  CVec from_modes(const Eigen::MatrixXcd& m) const {
    require(m.rows() == n_r && m.cols() == n_theta, "from_modes: shape");
    CVec v(size());
    std::lock_guard<std::mutex> lk(fft_mu_);
    CVec in(n_theta), out(n_theta);
    for (int ir = 0; ir < n_r; ++ir) {
      for (int t = 0; t < n_theta; ++t) in[t] = m(ir, t);
      fft_.inv(out, in);  // Eigen scales inv by 1/N; compensate
      for (int t = 0; t < n_theta; ++t) v[idx(ir, t)] = out[t] * double(n_theta);
    }
    return v;
  }

  // ---- radial mode solvers --------------------------------------------

  // Solve w' - (nu/r) w = rhs on the radial nodes. The rows are scaled this
  // way (not r w' - nu w) so the least-squares compromise minimizes the
  // residual in the same metric the dbar operator reports: any inconsistency
  // is then spread where 1/r cannot amplify it. For nu >= 0 the monomial
  // r^nu is in the collocation kernel, so the exact-transform boundary
  // condition w(1) = 0 is appended and the system solved least-squares.
  Eigen::VectorXcd transport_solve(int nu, const Eigen::VectorXcd& rhs) const {
    const TransportFactor& F = transport_factor(nu);
    if (F.lu) {
      return F.lu->solve(rhs.real().eval()).eval().cast<cplx>() +
             cplx(0, 1) * F.lu->solve(rhs.imag().eval()).eval().cast<cplx>();
    }
    Eigen::VectorXd b(n_r + 1);
    Eigen::VectorXcd out(n_r);
    b.head(n_r) = rhs.real();
    b(n_r) = 0.0;
    Eigen::VectorXd re = F.qr->solve(b);
    b.head(n_r) = rhs.imag();
    Eigen::VectorXd im = F.qr->solve(b);
    out = re.cast<cplx>() + cplx(0, 1) * im.cast<cplx>();
    return out;
  }

  // Solve u'' + u'/r - (n^2/r^2) u = rhs with u(1) = bc, least squares with
  // a scaled boundary row (the operator kills r^{|n|}); same residual-metric
  // scaling as transport_solve.
  Eigen::VectorXcd laplace_mode_solve(int n, const Eigen::VectorXcd& rhs, cplx bc) const {
    const auto& F = laplace_factor(std::abs(n));
    Eigen::VectorXd b(n_r + 1);
    double gamma = sq(double(n_r));
    b.head(n_r) = rhs.real();
    b(n_r) = gamma * bc.real();
    Eigen::VectorXd re = F.solve(b);
    b.head(n_r) = rhs.imag();
    b(n_r) = gamma * bc.imag();
    Eigen::VectorXd im = F.solve(b);
    return re.cast<cplx>() + cplx(0, 1) * im.cast<cplx>();
  }

private:
  struct TransportFactor {
    std::unique_ptr<Eigen::PartialPivLU<Eigen::MatrixXd>> lu;   // nu < 0
    std::unique_ptr<Eigen::HouseholderQR<Eigen::MatrixXd>> qr;  // nu >= 0
  };

  const TransportFactor& transport_factor(int nu) const {
    std::lock_guard<std::mutex> lk(cache_mu_);
    auto it = transport_.find(nu);
    if (it != transport_.end()) return it->second;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_r, n_r);
    for (int i = 0; i < n_r; ++i)
      for (int j = 0; j < n_r; ++j)
        A(i, j) = Dr(i, j) - (i == j ? double(nu) / r[i] : 0.0);
    TransportFactor F;
    if (nu < 0) {
      F.lu = std::make_unique<Eigen::PartialPivLU<Eigen::MatrixXd>>(A);
    } else {
      Eigen::MatrixXd S(n_r + 1, n_r);
      S.topRows(n_r) = A;
      S.row(n_r) = sq(double(n_r)) * bd_eval;
      F.qr = std::make_unique<Eigen::HouseholderQR<Eigen::MatrixXd>>(S);
    }
    return transport_.emplace(nu, std::move(F)).first->second;
  }

  const Eigen::HouseholderQR<Eigen::MatrixXd>& laplace_factor(int absn) const {
    std::lock_guard<std::mutex> lk(cache_mu_);
    auto it = laplace_.find(absn);
    if (it != laplace_.end()) return *it->second;
    Eigen::MatrixXd A = Dr;
    Eigen::MatrixXd A2 = Dr * Dr;
    Eigen::MatrixXd S(n_r + 1, n_r);
    for (int i = 0; i < n_r; ++i)
      for (int j = 0; j < n_r; ++j)
        S(i, j) = A2(i, j) + A(i, j) / r[i] -
                  (i == j ? sq(double(absn) / r[i]) : 0.0);
    S.row(n_r) = sq(double(n_r)) * bd_eval;
    auto qr = std::make_unique<Eigen::HouseholderQR<Eigen::MatrixXd>>(S);
    return *laplace_.emplace(absn, std::move(qr)).first->second;
  }

  mutable std::mutex fft_mu_;
  mutable std::mutex cache_mu_;
  mutable Eigen::FFT<double> fft_;
  mutable std::map<int, TransportFactor> transport_;
  mutable std::map<int, std::unique_ptr<Eigen::HouseholderQR<Eigen::MatrixXd>>> laplace_;
};

using GridPtr = std::shared_ptr<const DiskGrid>;

inline GridPtr build_disk_grid(int n_r, int n_theta, double collar_width = 0.55) {
  return std::make_shared<DiskGrid>(n_r, n_theta, collar_width);
}

// Complex-valued field sampled at the grid nodes.
struct GridFunction {
  GridPtr grid;
  CVec v;

  GridFunction() = default;
  explicit GridFunction(GridPtr g) : grid(std::move(g)), v(grid->size(), cplx(0.0)) {}
  GridFunction(GridPtr g, CVec vals) : grid(std::move(g)), v(std::move(vals)) {
    require(v.size() == grid->size(), "GridFunction: size mismatch");
  }

  template <class F>
  static GridFunction sample(GridPtr g, F&& f) {
    GridFunction out(g);
    for (int ir = 0; ir < g->n_r; ++ir)
      for (int it = 0; it < g->n_theta; ++it)
        out.v[g->idx(ir, it)] = f(g->node(ir, it));
    return out;
  }

  cplx& at(int ir, int it) { return v[grid->idx(ir, it)]; }
  cplx at(int ir, int it) const { return v[grid->idx(ir, it)]; }
};

inline void check_same_grid(const GridFunction& a, const GridFunction& b) {
  require(a.grid.get() == b.grid.get(), "grid mismatch between fields");
}

inline GridFunction operator+(const GridFunction& a, const GridFunction& b) {
  check_same_grid(a, b);
  GridFunction out(a.grid);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] + b.v[i];
  return out;
}

inline GridFunction operator-(const GridFunction& a, const GridFunction& b) {
  check_same_grid(a, b);
  GridFunction out(a.grid);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] - b.v[i];
  return out;
}

inline GridFunction operator*(const GridFunction& a, const GridFunction& b) {
  check_same_grid(a, b);
  GridFunction out(a.grid);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

inline GridFunction operator*(cplx s, const GridFunction& a) {
  GridFunction out(a.grid);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = s * a.v[i];
  return out;
}

inline GridFunction conj(const GridFunction& a) {
  GridFunction out(a.grid);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = std::conj(a.v[i]);
  return out;
}

// integral over the disk (sequential reduction, deterministic)
inline cplx integrate(const GridFunction& f) {
  cplx acc = 0.0;
  const DiskGrid& g = *f.grid;
  for (int ir = 0; ir < g.n_r; ++ir) {
    cplx ring = 0.0;
    for (int it = 0; it < g.n_theta; ++it) ring += f.v[g.idx(ir, it)];
    acc += g.w_ring[ir] * ring;
  }
  return acc;
}

inline double norm_l2(const GridFunction& f) {
  double acc = 0.0;
  const DiskGrid& g = *f.grid;
  for (int ir = 0; ir < g.n_r; ++ir) {
    double ring = 0.0;
    for (int it = 0; it < g.n_theta; ++it) ring += std::norm(f.v[g.idx(ir, it)]);
    acc += g.w_ring[ir] * ring;
  }
  return std::sqrt(acc);
}

inline double norm_sup(const GridFunction& f) {
  double m = 0.0;
  for (const auto& x : f.v) m = std::max(m, std::abs(x));
  return m;
}

inline bool all_finite(const GridFunction& f) {
  for (const auto& x : f.v)
    if (!finite(x)) return false;
  return true;
}

// Modal (FFT'd) view of a field, for off-grid evaluation and boundary traces.
class ModalField {
public:
  explicit ModalField(const GridFunction& f)
      : grid_(f.grid), modes_(f.grid->to_modes(f.v)) {}

  const Eigen::MatrixXcd& modes() const { return modes_; }

  // Barycentric radial interpolation of each angular mode, then Fourier sum.
  cplx eval(cplx z) const {
    const DiskGrid& g = *grid_;
    double rr = std::abs(z);
    double th = std::arg(z);
    Eigen::VectorXd row = radial_row(rr);
    cplx acc = 0.0;
    for (int t = 0; t < g.n_theta; ++t) {
      int n = g.freq_of_bin(t);
      cplx mval = 0.0;
      for (int ir = 0; ir < g.n_r; ++ir) mval += row(ir) * modes_(ir, t);
      acc += mval * std::polar(1.0, n * th);
    }
    return acc;
  }

  // trace on |z| = 1 as Fourier coefficients (bin-indexed)
  CVec boundary_modes() const {
    const DiskGrid& g = *grid_;
    CVec out(g.n_theta);
    for (int t = 0; t < g.n_theta; ++t) {
      cplx acc = 0.0;
      for (int ir = 0; ir < g.n_r; ++ir) acc += g.bd_eval(ir) * modes_(ir, t);
      out[t] = acc;
    }
    return out;
  }

  cplx boundary_value(double th) const {
    const DiskGrid& g = *grid_;
    CVec bm = boundary_modes();
    cplx acc = 0.0;
    for (int t = 0; t < g.n_theta; ++t)
      acc += bm[t] * std::polar(1.0, g.freq_of_bin(t) * th);
    return acc;
  }

  // d/dr of the field at (1, th)
  cplx boundary_radial_derivative(double th) const {
    const DiskGrid& g = *grid_;
    cplx acc = 0.0;
    for (int t = 0; t < g.n_theta; ++t) {
      cplx mval = 0.0;
      for (int ir = 0; ir < g.n_r; ++ir) mval += g.bd_deriv(ir) * modes_(ir, t);
      acc += mval * std::polar(1.0, g.freq_of_bin(t) * th);
    }
    return acc;
  }

private:
  Eigen::VectorXd radial_row(double rr) const {
    const DiskGrid& g = *grid_;
    Eigen::VectorXd row(g.n_r);
    // exact node hit: delta row
    for (int ir = 0; ir < g.n_r; ++ir) {
      if (rr == g.r[ir]) {
        row.setZero();
        row(ir) = 1.0;
        return row;
      }
    }
    double den = 0.0;
    for (int ir = 0; ir < g.n_r; ++ir) {
      double x = 2.0 * g.r[ir] - 1.0;
      double xx = 2.0 * rr - 1.0;
      row(ir) = g.bary[ir] / (xx - x);
      den += row(ir);
    }
    row /= den;
    return row;
  }

  GridPtr grid_;
  Eigen::MatrixXcd modes_;
};

// ---- spectral derivative operators -------------------------------------

// dbar = (e^{i theta}/2)(d_r + (i/r) d_theta): mode m of the input feeds
// mode m+1 of the output.
inline GridFunction dbar_apply(const GridFunction& f) {
  const DiskGrid& g = *f.grid;
  Eigen::MatrixXcd M = g.to_modes(f.v);
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(g.n_r, g.n_theta);
  Eigen::VectorXcd col(g.n_r), dcol(g.n_r);
  for (int t = 0; t < g.n_theta; ++t) {
    int m = g.freq_of_bin(t);
    if (m == -g.n_theta / 2) continue;    // drop Nyquist
    int tb = g.bin_of_freq(m + 1);
    if (m + 1 == g.n_theta / 2) continue; // output would alias
    col = M.col(t);
    dcol = g.Dr * col;
    for (int ir = 0; ir < g.n_r; ++ir)
      out(ir, tb) = 0.5 * (dcol(ir) - double(m) / g.r[ir] * col(ir));
  }
  return GridFunction(f.grid, g.from_modes(out));
}

inline GridFunction dz_apply(const GridFunction& f) {
  return conj(dbar_apply(conj(f)));
}

inline GridFunction laplacian_apply(const GridFunction& f) {
  const DiskGrid& g = *f.grid;
  Eigen::MatrixXcd M = g.to_modes(f.v);
  Eigen::MatrixXcd out(g.n_r, g.n_theta);
  Eigen::MatrixXcd D1 = g.Dr * M;
  Eigen::MatrixXcd D2 = g.Dr * D1;
  for (int t = 0; t < g.n_theta; ++t) {
    int n = g.freq_of_bin(t);
    for (int ir = 0; ir < g.n_r; ++ir)
      out(ir, t) = D2(ir, t) + D1(ir, t) / g.r[ir] -
                   sq(double(n)) / sq(g.r[ir]) * M(ir, t);
  }
  return GridFunction(f.grid, g.from_modes(out));
}

// Spectral resample onto a finer polar grid (radial barycentric interpolation
// per mode, angular zero-padding). Fine grid must not be coarser.
inline GridFunction resample(const GridFunction& f, const GridPtr& fine) {
  const DiskGrid& g = *f.grid;
  const DiskGrid& h = *fine;
  require(h.n_r >= g.n_r && h.n_theta >= g.n_theta, "resample: target coarser");
  Eigen::MatrixXcd M = g.to_modes(f.v);
  // radial interpolation matrix (h.n_r x g.n_r)
  Eigen::MatrixXd R(h.n_r, g.n_r);
  for (int i = 0; i < h.n_r; ++i) {
    double xx = 2.0 * h.r[i] - 1.0;
    int hit = -1;
    for (int j = 0; j < g.n_r; ++j)
      if (std::abs(xx - (2.0 * g.r[j] - 1.0)) < 1e-14) hit = j;
    if (hit >= 0) {
      R.row(i).setZero();
      R(i, hit) = 1.0;
      continue;
    }
    double den = 0.0;
    for (int j = 0; j < g.n_r; ++j) {
      double x = 2.0 * g.r[j] - 1.0;
      R(i, j) = g.bary[j] / (xx - x);
      den += R(i, j);
    }
    R.row(i) /= den;
  }
  Eigen::MatrixXcd Mf = Eigen::MatrixXcd::Zero(h.n_r, h.n_theta);
  Eigen::MatrixXcd Mr = R * M;  // fine radii, coarse bins
  for (int t = 0; t < g.n_theta; ++t) {
    int n = g.freq_of_bin(t);
    if (n == -g.n_theta / 2) continue;  // drop source Nyquist
    Mf.col(h.bin_of_freq(n)) = Mr.col(t);
  }
  return GridFunction(fine, h.from_modes(Mf));
}

}  // namespace calderon
