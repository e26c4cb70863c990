// Shared numeric utilities: finite differences, quadrature, small fits.
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nullray {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

// Numeric failure in an operation (CLI exit code 3).
struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration / bad input (CLI exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw NumericsError(std::string("non-finite input: ") + what);
}

// ---------------------------------------------------------------------------
// Finite differences (4th order central stencils).

// d/dx_i f(x), 4th order: (-f(+2h) + 8 f(+h) - 8 f(-h) + f(-2h)) / (12 h)
template <typename F>
auto fd_partial(const F& f, const Vec& x, int i, double h) -> decltype(f(x)) {
  Vec xp = x, xpp = x, xm = x, xmm = x;
  xp[i] += h;
  xpp[i] += 2 * h;
  xm[i] -= h;
  xmm[i] -= 2 * h;
  return (-f(xpp) + 8.0 * f(xp) - 8.0 * f(xm) + f(xmm)) / (12.0 * h);
}

// d^2/dx_i^2 f(x), 4th order.
template <typename F>
auto fd_second(const F& f, const Vec& x, int i, double h) -> decltype(f(x)) {
  Vec x1 = x, x2 = x, x3 = x, x4 = x;
  x1[i] += h;
  x2[i] += 2 * h;
  x3[i] -= h;
  x4[i] -= 2 * h;
  return (-f(x2) + 16.0 * f(x1) - 30.0 * f(x) + 16.0 * f(x3) - f(x4)) / (12.0 * h * h);
}

// Mixed d^2/dx_i dx_j, i != j, 2nd order cross stencil.
template <typename F>
auto fd_mixed(const F& f, const Vec& x, int i, int j, double h) -> decltype(f(x)) {
  Vec a = x, b = x, c = x, d = x;
  a[i] += h; a[j] += h;
  b[i] += h; b[j] -= h;
  c[i] -= h; c[j] += h;
  d[i] -= h; d[j] -= h;
  return (f(a) - f(b) - f(c) + f(d)) / (4.0 * h * h);
}

template <typename F>
Vec fd_gradient(const F& f, const Vec& x, double h) {
  Vec g(x.size());
  for (int i = 0; i < x.size(); ++i) g[i] = fd_partial(f, x, i, h);
  return g;
}

// ---------------------------------------------------------------------------
// Quadrature.

// Gauss-Kronrod 7-15 pair on [a,b]; returns {integral, error estimate}.
template <typename F>
std::pair<cplx, double> gk15(const F& f, double a, double b) {
  // Kronrod nodes/weights (15) and embedded Gauss weights (7), abscissae in [-1,1].
  static const double xk[15] = {
      -0.991455371120813, -0.949107912342759, -0.864864423359769, -0.741531185599394,
      -0.586087235467691, -0.405845151377397, -0.207784955007898, 0.0,
      0.207784955007898,  0.405845151377397,  0.586087235467691,  0.741531185599394,
      0.864864423359769,  0.949107912342759,  0.991455371120813};
  static const double wk[15] = {
      0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
      0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728,
      0.204432940075298, 0.190350578064785, 0.169004726639267, 0.140653259715525,
      0.104790010322250, 0.063092092629979, 0.022935322010529};
  static const double wg[7] = {
      0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469,
      0.381830050505119, 0.279705391489277, 0.129484966168870};
  const double c = 0.5 * (a + b), hl = 0.5 * (b - a);
  cplx ik = 0.0, ig = 0.0;
  for (int i = 0; i < 15; ++i) {
    cplx v = f(c + hl * xk[i]);
    ik += wk[i] * v;
    if (i % 2 == 1) ig += wg[i / 2] * v;
  }
  ik *= hl;
  ig *= hl;
  return {ik, std::abs(ik - ig)};
}

// Adaptive GK15 with interval bisection.
template <typename F>
std::pair<cplx, double> integrate_adaptive(const F& f, double a, double b, double tol,
                                           int max_depth = 24) {
  struct Seg { double a, b; int depth; };
  std::vector<Seg> stack{{a, b, 0}};
  cplx total = 0.0;
  double err_total = 0.0;
  while (!stack.empty()) {
    Seg s = stack.back();
    stack.pop_back();
    auto [v, e] = gk15(f, s.a, s.b);
    double local_tol = tol * (s.b - s.a) / (b - a);
    if (e <= std::max(local_tol, 1e-16) || s.depth >= max_depth) {
      total += v;
      err_total += e;
    } else {
      double m = 0.5 * (s.a + s.b);
      stack.push_back({s.a, m, s.depth + 1});
      stack.push_back({m, s.b, s.depth + 1});
    }
  }
  return {total, err_total};
}

// Cumulative integral of samples on a uniform grid (composite Simpson on pairs,
// trapezoid fallback on the last odd interval). Returns running values F[i] = int_0^{s_i}.
std::vector<cplx> cumulative_integral(const std::vector<double>& s, const std::vector<cplx>& v);

// ---------------------------------------------------------------------------
// Small least-squares helpers.

// Fit y ~ sum_k c_k basis_k(x) by column-pivoted QR; returns coefficients.
CVec lsq_fit(const CMat& design, const CVec& rhs);

// Straight-line fit log|y| = a + b log(x); returns slope b. Skips non-positive |y|.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Deterministic text formatting for artifact files.
std::string fmt_g17(double v);
std::string fmt_cplx(const cplx& v);  // "re im" pair

// FNV-1a hash of a byte string, hex-encoded; used for scenario fingerprints.
std::string fnv1a_hex(const std::string& bytes);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace nullray
