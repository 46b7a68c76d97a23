#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

#include "calderon/core.hpp"

namespace calderon {

// Polynomial in one complex variable, coefficients low degree first.
struct Poly {
  CVec c;

  Poly() = default;
  explicit Poly(CVec coeffs) : c(std::move(coeffs)) {}

  int degree() const {
    for (int k = int(c.size()) - 1; k >= 0; --k)
      if (c[k] != cplx(0.0)) return k;
    return -1;
  }

  cplx eval(cplx z) const {
    cplx acc = 0.0;
    for (int k = int(c.size()) - 1; k >= 0; --k) acc = acc * z + c[k];
    return acc;
  }

  // Value and first nder derivatives at z; out[d] = p^{(d)}(z).
  CVec eval_derivs(cplx z, int nder) const {
    CVec out(nder + 1, cplx(0.0));
    for (int k = int(c.size()) - 1; k >= 0; --k) {
      for (int d = nder; d >= 1; --d) out[d] = out[d] * z + double(d) * out[d - 1];
      out[0] = out[0] * z + c[k];
    }
    return out;
  }

  Poly derivative() const {
    if (c.size() <= 1) return Poly(CVec{});
    CVec d(c.size() - 1);
    for (std::size_t k = 1; k < c.size(); ++k) d[k - 1] = double(k) * c[k];
    return Poly(std::move(d));
  }

  Poly antiderivative(cplx constant = 0.0) const {
    CVec a(c.size() + 1);
    a[0] = constant;
    for (std::size_t k = 0; k < c.size(); ++k) a[k + 1] = c[k] / double(k + 1);
    return Poly(std::move(a));
  }

  void trim(double tol = 0.0) {
    while (!c.empty() && std::abs(c.back()) <= tol) c.pop_back();
  }

  double max_coeff() const {
    double m = 0.0;
    for (const auto& x : c) m = std::max(m, std::abs(x));
    return m;
  }
};

inline Poly operator+(const Poly& a, const Poly& b) {
  CVec c(std::max(a.c.size(), b.c.size()), cplx(0.0));
  for (std::size_t k = 0; k < a.c.size(); ++k) c[k] += a.c[k];
  for (std::size_t k = 0; k < b.c.size(); ++k) c[k] += b.c[k];
  return Poly(std::move(c));
}

inline Poly operator-(const Poly& a, const Poly& b) {
  CVec c(std::max(a.c.size(), b.c.size()), cplx(0.0));
  for (std::size_t k = 0; k < a.c.size(); ++k) c[k] += a.c[k];
  for (std::size_t k = 0; k < b.c.size(); ++k) c[k] -= b.c[k];
  return Poly(std::move(c));
}

inline Poly operator*(const Poly& a, const Poly& b) {
  if (a.c.empty() || b.c.empty()) return Poly(CVec{});
  CVec c(a.c.size() + b.c.size() - 1, cplx(0.0));
  for (std::size_t i = 0; i < a.c.size(); ++i)
    for (std::size_t j = 0; j < b.c.size(); ++j) c[i + j] += a.c[i] * b.c[j];
  return Poly(std::move(c));
}

inline Poly operator*(cplx s, const Poly& a) {
  CVec c(a.c);
  for (auto& x : c) x *= s;
  return Poly(std::move(c));
}

inline Poly poly_from_roots(const CVec& roots, cplx lead = 1.0) {
  Poly p(CVec{lead});
  for (cplx r : roots) p = p * Poly(CVec{-r, 1.0});
  return p;
}

// All complex roots via the companion matrix, polished by two Newton steps.
// Leading coefficients below a relative threshold are dropped first.
inline CVec poly_roots(const Poly& p_in) {
  Poly p = p_in;
  p.trim(1e-14 * p.max_coeff());
  int n = p.degree();
  if (n <= 0) return {};
  Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 1; i < n; ++i) C(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) C(i, n - 1) = -p.c[i] / p.c[n];
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(C, false);
  if (es.info() != Eigen::Success)
    throw PipelineError("companion eigensolve failed");
  CVec roots(n);
  for (int i = 0; i < n; ++i) {
    cplx z = es.eigenvalues()(i);
    for (int it = 0; it < 2; ++it) {
      CVec vd = p.eval_derivs(z, 1);
      if (std::abs(vd[1]) < 1e-300) break;
      cplx step = vd[0] / vd[1];
      if (!finite(step) || std::abs(step) > 1.0) break;
      z -= step;
    }
    roots[i] = z;
  }
  std::sort(roots.begin(), roots.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return roots;
}

// Polynomial in z and conj(z), coefficients c[j][k] z^j zbar^k. Supports the
// exact Wirtinger calculus needed to manufacture test solutions with known
// Laplacians and gradients.
struct ZZbarPoly {
  // c[j][k], j = z-power, k = zbar-power.
  std::vector<CVec> c;

  int rows() const { return int(c.size()); }
  int cols() const { return c.empty() ? 0 : int(c[0].size()); }

  static ZZbarPoly zero(int nz, int nzb) {
    ZZbarPoly p;
    p.c.assign(nz, CVec(nzb, cplx(0.0)));
    return p;
  }

  cplx at(int j, int k) const {
    if (j < 0 || k < 0 || j >= rows() || k >= cols()) return 0.0;
    return c[j][k];
  }

  cplx eval(cplx z) const {
    cplx zb = std::conj(z);
    cplx acc = 0.0;
    for (int j = rows() - 1; j >= 0; --j) {
      cplx row = 0.0;
      for (int k = cols() - 1; k >= 0; --k) row = row * zb + c[j][k];
      acc = acc * z + row;
    }
    return acc;
  }

  ZZbarPoly dz() const {
    if (rows() <= 1) return zero(1, std::max(1, cols()));
    ZZbarPoly out = zero(rows() - 1, cols());
    for (int j = 1; j < rows(); ++j)
      for (int k = 0; k < cols(); ++k) out.c[j - 1][k] = double(j) * c[j][k];
    return out;
  }

  ZZbarPoly dzbar() const {
    if (cols() <= 1) return zero(std::max(1, rows()), 1);
    ZZbarPoly out = zero(rows(), cols() - 1);
    for (int j = 0; j < rows(); ++j)
      for (int k = 1; k < cols(); ++k) out.c[j][k - 1] = double(k) * c[j][k];
    return out;
  }

  ZZbarPoly laplacian() const {
    ZZbarPoly out = dz().dzbar();
    for (auto& row : out.c)
      for (auto& x : row) x *= 4.0;
    return out;
  }
};

inline ZZbarPoly operator*(const ZZbarPoly& a, const ZZbarPoly& b) {
  ZZbarPoly out = ZZbarPoly::zero(a.rows() + b.rows() - 1, a.cols() + b.cols() - 1);
  for (int j = 0; j < a.rows(); ++j)
    for (int k = 0; k < a.cols(); ++k) {
      if (a.c[j][k] == cplx(0.0)) continue;
      for (int p = 0; p < b.rows(); ++p)
        for (int q = 0; q < b.cols(); ++q)
          out.c[j + p][k + q] += a.c[j][k] * b.c[p][q];
    }
  return out;
}

inline ZZbarPoly operator+(const ZZbarPoly& a, const ZZbarPoly& b) {
  ZZbarPoly out = ZZbarPoly::zero(std::max(a.rows(), b.rows()),
                                  std::max(a.cols(), b.cols()));
  for (int j = 0; j < out.rows(); ++j)
    for (int k = 0; k < out.cols(); ++k) out.c[j][k] = a.at(j, k) + b.at(j, k);
  return out;
}

// 1 - z zbar, the zero-trace factor on the unit circle.
inline ZZbarPoly one_minus_rsq() {
  ZZbarPoly p = ZZbarPoly::zero(2, 2);
  p.c[0][0] = 1.0;
  p.c[1][1] = -1.0;
  return p;
}

}  // namespace calderon
