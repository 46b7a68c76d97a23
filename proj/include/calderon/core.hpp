#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "calderon/errors.hpp"

namespace calderon {

using cplx = std::complex<double>;
using RVec = std::vector<double>;
using CVec = std::vector<cplx>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kI{0.0, 1.0};

// exp() overflows past ~709; pairings are pre-scaled so that real exponents
// stay below this with headroom.
inline constexpr double kMaxExponent = 650.0;

inline double sq(double x) { return x * x; }

// C^2 smoothstep on [0,1]: 0 -> 1 with vanishing first and second derivatives
// at both ends. Used for every cutoff/window in the library.
inline double smoothstep5(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

inline double smoothstep5_deriv(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return 30.0 * t * t * (1.0 + t * (-2.0 + t));
}

inline double smoothstep5_d2(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return 60.0 * t * (1.0 + t * (-3.0 + 2.0 * t));
}

// C^4 smoothstep (degree 9), for cutoff profiles that feed spectral solvers.
inline double smoothstep9(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  double t4 = t * t * t * t;
  return t4 * t * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + 70.0 * t))));
}

inline double smoothstep9_d1(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  double t3 = t * t * t;
  return t3 * t * (630.0 + t * (-2520.0 + t * (3780.0 + t * (-2520.0 + 630.0 * t))));
}

inline double smoothstep9_d2(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  double t2 = t * t;
  return t2 * t * (2520.0 + t * (-12600.0 + t * (22680.0 + t * (-17640.0 + 5040.0 * t))));
}

// C-infinity compact bump in one variable: 1 at 0, 0 for |x| >= R, all
// derivatives vanish at the edge. Smooth on the disk as a function of |z|
// because it depends on x^2 only.
inline double mollifier_bump(double x, double R) {
  double t = (x / R) * (x / R);
  if (t >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - t));
}

// Compactly supported Gaussian-type bump: exactly 0 for |x| >= R, analytic
// inside up to a slope mismatch of order e^{-K} at the edge (invisible in
// double precision for K ~ 36). Spectral solvers converge exponentially on
// it, unlike on true mollifiers whose edge is only Gevrey.
inline double compact_gaussian(double x, double R, double K = 36.0) {
  double t = (x / R) * (x / R);
  if (t >= 1.0) return 0.0;
  double floor_v = std::exp(-K);
  return (std::exp(-K * t) - floor_v) / (1.0 - floor_v);
}

// Quartic-flat variant: value 1, and first three derivatives 0 at x = 0.
inline double compact_quartic_bump(double x, double R, double K = 36.0) {
  double t = (x / R) * (x / R);
  if (t >= 1.0) return 0.0;
  double floor_v = std::exp(-K);
  return (std::exp(-K * t * t) - floor_v) / (1.0 - floor_v);
}

// Plateau window in one variable: 1 on [a+w, b-w], 0 outside [a, b],
// quintic-smooth ramps of width w on both sides.
inline double plateau(double x, double a, double b, double w) {
  if (x <= a || x >= b) return 0.0;
  double up = smoothstep5((x - a) / w);
  double down = smoothstep5((b - x) / w);
  return std::min(up, down);
}

// Periodic angular distance to a center angle, in [0, pi].
inline double ang_dist(double theta, double center) {
  double d = std::remainder(theta - center, 2.0 * kPi);
  return std::abs(d);
}

// 64-bit FNV-1a over raw bytes; cache keys hash doubles through this.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 1469598103934665603ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64_doubles(const double* x, std::size_t n,
                                     std::uint64_t h = 1469598103934665603ull) {
  return fnv1a64(x, n * sizeof(double), h);
}

// Shortest round-trippable decimal form; all CSV output goes through this so
// two runs of the same binary produce identical bytes.
inline std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Least-squares slope of y against x (used on log-log decay data).
inline double fit_slope(const RVec& x, const RVec& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw PipelineError("fit_slope needs >= 2 samples");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(x.size());
  my /= double(x.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += sq(x[i] - mx);
  }
  if (den == 0.0) throw PipelineError("fit_slope: degenerate abscissae");
  return num / den;
}

inline double log_slope(const RVec& x, const RVec& y) {
  RVec lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0)
      throw PipelineError("log_slope: nonpositive sample");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  return fit_slope(lx, ly);
}

// Deterministic parallel map: slot i is written only by the worker that owns
// it, and slots are preassigned by contiguous blocks, so the result does not
// depend on scheduling. threads <= 1 runs inline.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::size_t nw = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nw);
  std::size_t chunk = (n + nw - 1) / nw;
  for (std::size_t w = 0; w < nw; ++w) {
    std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline bool finite(const cplx& z) {
  return std::isfinite(z.real()) && std::isfinite(z.imag());
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw PipelineError(what);
}

}  // namespace calderon
