#pragma once
// Elliptic machinery on the unit disk: Schroedinger potentials from
// conductivities, Dirichlet solves for (Laplacian + q), the boundary
// measurement (Dirichlet-to-Neumann) matrix in Fourier modes, and a
// deterministic binary cache for assembled measurement matrices.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "calderon/core.hpp"
#include "calderon/errors.hpp"
#include "calderon/grid.hpp"

namespace calderon {

// q = (Laplacian sqrt(gamma)) / sqrt(gamma) for a positive conductivity.
inline GridFunction conductivity_to_potential(const GridFunction& gamma) {
  GridFunction root(gamma.grid, CVec(gamma.v.size()));
  for (std::size_t i = 0; i < gamma.v.size(); ++i) {
    cplx g = gamma.v[i];
    if (!(g.real() > 0.0) || std::abs(g.imag()) > 1e-12 * std::abs(g))
      throw NonpositiveConductivity("conductivity must be strictly positive and real");
    root.v[i] = std::sqrt(g.real());
  }
  GridFunction lap = laplacian_apply(root);
  GridFunction q(gamma.grid, CVec(gamma.v.size()));
  for (std::size_t i = 0; i < q.v.size(); ++i) q.v[i] = lap.v[i] / root.v[i];
  return q;
}

// Boundary trace and outward radial derivative of a grid function, as
// bin-ordered Fourier coefficients (same bin convention as DiskGrid).
inline CVec boundary_value_modes(const GridFunction& f) {
  const DiskGrid& g = *f.grid;
  Eigen::MatrixXcd m = g.to_modes(f.v);
  CVec out(static_cast<std::size_t>(g.n_theta));
  for (int t = 0; t < g.n_theta; ++t) {
    cplx acc = 0.0;
    for (int ir = 0; ir < g.n_r; ++ir) acc += g.bd_eval(ir) * m(ir, t);
    out[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

inline CVec boundary_derivative_modes(const GridFunction& f) {
  const DiskGrid& g = *f.grid;
  Eigen::MatrixXcd m = g.to_modes(f.v);
  CVec out(static_cast<std::size_t>(g.n_theta));
  for (int t = 0; t < g.n_theta; ++t) {
    cplx acc = 0.0;
    for (int ir = 0; ir < g.n_r; ++ir) acc += g.bd_deriv(ir) * m(ir, t);
    out[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

struct InteriorSolveOptions {
  double tol = 1e-13;     // relative fixed-point increment
  int max_iter = 300;
  double blowup = 1e8;    // divergence guard relative to the first increment
};

// Solves (Laplacian + q) u = 0 with Dirichlet boundary data given as
// bin-ordered Fourier coefficients. The harmonic extension is computed by
// per-mode radial solves; the potential term is folded in by fixed-point
// iteration w <- -InvLaplacian0 (q (u_h + w)), which converges when q is
// below the first Dirichlet eigenvalue scale and raises NearResonance
// otherwise.
inline GridFunction solve_schrodinger_dirichlet(const GridFunction& q,
                                                const CVec& boundary_modes,
                                                const InteriorSolveOptions& opt = {}) {
  const GridPtr& grid = q.grid;
  const DiskGrid& g = *grid;
  require(boundary_modes.size() == static_cast<std::size_t>(g.n_theta),
          "boundary data must carry one coefficient per angular bin");

  auto dirichlet_inverse = [&](const GridFunction& rhs, const CVec* bc) {
    Eigen::MatrixXcd m = g.to_modes(rhs.v);
    Eigen::MatrixXcd out(g.n_r, g.n_theta);
    for (int t = 0; t < g.n_theta; ++t) {
      int n = g.freq_of_bin(t);
      if (n == -g.n_theta / 2) {
        out.col(t).setZero();
        continue;
      }
      cplx b = bc ? (*bc)[static_cast<std::size_t>(t)] : cplx(0.0);
      out.col(t) = g.laplace_mode_solve(n, m.col(t), b);
    }
    return GridFunction(grid, g.from_modes(out));
  };

  GridFunction zero(grid, CVec(g.size(), 0.0));
  GridFunction uh = dirichlet_inverse(zero, &boundary_modes);
  double scale = std::max(norm_l2(uh), 1.0);

  GridFunction w = zero;
  double first_inc = -1.0;
  for (int it = 0; it < opt.max_iter; ++it) {
    GridFunction rhs(grid, CVec(g.size()));
    for (std::size_t i = 0; i < rhs.v.size(); ++i)
      rhs.v[i] = -q.v[i] * (uh.v[i] + w.v[i]);
    GridFunction wn = dirichlet_inverse(rhs, nullptr);
    double inc = norm_l2(wn - w);
    if (!std::isfinite(inc))
      throw NearResonance("interior solve diverged (non-finite iterate)");
    if (first_inc < 0.0) first_inc = std::max(inc, 1e-300);
    if (inc > opt.blowup * first_inc)
      throw NearResonance("interior solve diverged; potential too strong for "
                          "fixed-point inversion");
    w = wn;
    if (inc <= opt.tol * scale) return uh + w;
  }
  throw NearResonance("interior solve did not converge within the iteration budget");
}

// Boundary measurement matrix in Fourier modes: column n holds the modes of
// the outward normal derivative of the solution with Dirichlet data e^{int}.
// Rows and columns are indexed m, n in [-n_modes, n_modes] via index(m).
struct DnMap {
  int n_modes = 0;
  Eigen::MatrixXcd lambda;

  int index(int m) const {
    require(m >= -n_modes && m <= n_modes, "mode index out of range");
    return m + n_modes;
  }
  cplx entry(int m, int n) const { return lambda(index(m), index(n)); }
};

inline DnMap assemble_dn_map(const GridFunction& q, int n_modes,
                             const InteriorSolveOptions& opt = {}) {
  const DiskGrid& g = *q.grid;
  require(n_modes >= 0 && 2 * n_modes + 2 <= g.n_theta,
          "measurement matrix needs 2*n_modes + 2 <= n_theta");
  DnMap dn;
  dn.n_modes = n_modes;
  dn.lambda.resize(2 * n_modes + 1, 2 * n_modes + 1);
  for (int n = -n_modes; n <= n_modes; ++n) {
    CVec bc(static_cast<std::size_t>(g.n_theta), 0.0);
    bc[static_cast<std::size_t>(g.bin_of_freq(n))] = 1.0;
    GridFunction u = solve_schrodinger_dirichlet(q, bc, opt);
    CVec der = boundary_derivative_modes(u);
    for (int m = -n_modes; m <= n_modes; ++m)
      dn.lambda(dn.index(m), dn.index(n)) = der[static_cast<std::size_t>(g.bin_of_freq(m))];
  }
  return dn;
}

// Apply the measurement matrix to Dirichlet data given by modes in
// [-n_modes, n_modes] (index order of DnMap).
inline CVec apply_dn(const DnMap& dn, const CVec& dirichlet_modes) {
  const int d = 2 * dn.n_modes + 1;
  require(dirichlet_modes.size() == static_cast<std::size_t>(d),
          "apply_dn: mode vector size mismatch");
  CVec out(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i)] += dn.lambda(i, j) * dirichlet_modes[static_cast<std::size_t>(j)];
  return out;
}

// For a real potential the measurement matrix satisfies the real-pairing
// symmetry entry(-m, n) = entry(-n, m); returns the worst violation.
inline double dn_symmetry_defect(const DnMap& dn) {
  double worst = 0.0;
  for (int m = -dn.n_modes; m <= dn.n_modes; ++m)
    for (int n = -dn.n_modes; n <= dn.n_modes; ++n)
      worst = std::max(worst, std::abs(dn.entry(-m, n) - dn.entry(-n, m)));
  return worst;
}

// ---------------------------------------------------------------------------
// Deterministic binary cache
// ---------------------------------------------------------------------------

inline std::uint64_t dn_cache_key(const GridFunction& q, int n_modes) {
  const DiskGrid& g = *q.grid;
  const char tag[] = "dn-map-v1";
  std::uint64_t h = fnv1a64(tag, sizeof(tag));
  RVec spec{static_cast<double>(g.n_r), static_cast<double>(g.n_theta), g.collar_width,
            static_cast<double>(n_modes)};
  h = fnv1a64_doubles(spec.data(), spec.size(), h);
  static_assert(sizeof(cplx) == 2 * sizeof(double));
  h = fnv1a64_doubles(reinterpret_cast<const double*>(q.v.data()), 2 * q.v.size(), h);
  return h;
}

inline DnMap assemble_dn_map_cached(const GridFunction& q, int n_modes,
                                    const std::string& cache_dir,
                                    const InteriorSolveOptions& opt = {}) {
  if (cache_dir.empty()) return assemble_dn_map(q, n_modes, opt);
  namespace fs = std::filesystem;
  fs::create_directories(cache_dir);
  char name[64];
  std::snprintf(name, sizeof(name), "dn_%016llx.bin",
                static_cast<unsigned long long>(dn_cache_key(q, n_modes)));
  fs::path file = fs::path(cache_dir) / name;

  const int d = 2 * n_modes + 1;
  if (fs::exists(file)) {
    std::FILE* fp = std::fopen(file.string().c_str(), "rb");
    if (fp) {
      std::int64_t stored = 0;
      DnMap dn;
      dn.n_modes = n_modes;
      dn.lambda.resize(d, d);
      bool ok = std::fread(&stored, sizeof(stored), 1, fp) == 1 && stored == d &&
                std::fread(dn.lambda.data(), sizeof(cplx),
                           static_cast<std::size_t>(d) * d,
                           fp) == static_cast<std::size_t>(d) * d;
      std::fclose(fp);
      if (ok) return dn;
    }
  }

  DnMap dn = assemble_dn_map(q, n_modes, opt);
  std::FILE* fp = std::fopen(file.string().c_str(), "wb");
  if (!fp) throw IoError("cannot write measurement cache file " + file.string());
  std::int64_t dim = d;
  bool ok = std::fwrite(&dim, sizeof(dim), 1, fp) == 1 &&
            std::fwrite(dn.lambda.data(), sizeof(cplx), static_cast<std::size_t>(d) * d,
                        fp) == static_cast<std::size_t>(d) * d;
  std::fclose(fp);
  if (!ok) throw IoError("short write to measurement cache file " + file.string());
  return dn;
}

}  // namespace calderon
