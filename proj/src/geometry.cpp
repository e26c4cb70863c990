#include "nullray/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace nullray {

// ---------------------------------------------------------------------------
// core.hpp out-of-line pieces

std::vector<cplx> cumulative_integral(const std::vector<double>& s, const std::vector<cplx>& v) {
  const size_t n = s.size();
  std::vector<cplx> out(n, 0.0);
  if (n < 2) return out;
  // Composite Simpson over consecutive interval pairs; the grid must be uniform
  // to the tolerance of the resampler that produced it.
  for (size_t i = 1; i < n; ++i) {
    double h = s[i] - s[i - 1];
    if (i + 1 < n && (i % 2 == 1)) {
      // defer: handled by the pair step below
    }
    out[i] = out[i - 1] + 0.5 * h * (v[i - 1] + v[i]);
  }
  // Richardson-style correction: redo with Simpson where pairs are available.
  if (n >= 3) {
    std::vector<cplx> simp(n, 0.0);
    simp[0] = 0.0;
    for (size_t i = 2; i < n; i += 2) {
      double h = 0.5 * (s[i] - s[i - 2]);
      simp[i] = simp[i - 2] + h / 3.0 * (v[i - 2] + 4.0 * v[i - 1] + v[i]);
      // midpoint value by local Simpson half-step (3/8-free variant)
      simp[i - 1] = simp[i - 2] + h / 12.0 * (5.0 * v[i - 2] + 8.0 * v[i - 1] - v[i]);
    }
    if (n % 2 == 0) {
      // trailing interval: trapezoid against the last Simpson anchor
      simp[n - 1] = simp[n - 2] + 0.5 * (s[n - 1] - s[n - 2]) * (v[n - 2] + v[n - 1]);
    }
    return simp;
  }
  return out;
}

CVec lsq_fit(const CMat& design, const CVec& rhs) {
  return design.colPivHouseholderQr().solve(rhs);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (size_t i = 0; i < x.size(); ++i) {
    if (y[i] > 0.0 && x[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 2) return 0.0;
  double mx = 0, my = 0;
  for (size_t i = 0; i < lx.size(); ++i) { mx += lx[i]; my += ly[i]; }
  mx /= lx.size();
  my /= ly.size();
  double num = 0, den = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return den > 0 ? num / den : 0.0;
}

std::string fmt_g17(double v) {
  char buf[40];
  snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_cplx(const cplx& v) { return fmt_g17(v.real()) + " " + fmt_g17(v.imag()); }

std::string fnv1a_hex(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Chart

bool Chart::contains(const Vec& x, double slack) const {
  if (x.size() != dim) return false;
  for (int i = 0; i < dim; ++i)
    if (x[i] < box[i][0] - slack || x[i] > box[i][1] + slack) return false;
  return true;
}

double Chart::diameter() const {
  double d2 = 0;
  for (auto& b : box) d2 += (b[1] - b[0]) * (b[1] - b[0]);
  return std::sqrt(d2);
}

Chart Chart::make(int dim, std::vector<std::array<double, 2>> box, ScalarClosure rho,
                  VecClosure drho, int time_axis, double h_fd) {
  if (dim < 2) throw ConfigError("chart dimension must be at least 2");
  Chart c;
  c.dim = dim;
  c.box = std::move(box);
  c.rho = std::move(rho);
  c.time_axis = time_axis;
  if (drho) {
    c.drho = std::move(drho);
  } else {
    auto r = c.rho;
    c.drho = [r, h_fd](const Vec& x) { return fd_gradient(r, x, h_fd); };
  }
  return c;
}

// ---------------------------------------------------------------------------
// MetricField

MetricField::MetricField(int dim, MatClosure g_lower, double h_fd)
    : dim_(dim), h_fd_(h_fd), g_lower_(std::move(g_lower)) {}

void MetricField::set_d_lower(std::function<std::vector<Mat>(const Vec&)> d_lower) {
  d_lower_analytic_ = std::move(d_lower);
}

Mat MetricField::lower(const Vec& x) const {
  Mat g = g_lower_(x);
  return 0.5 * (g + g.transpose());  // enforce exact symmetry
}

double MetricField::det_lower(const Vec& x) const {
  double d = lower(x).determinant();
  if (std::abs(d) < 1e-14) throw NumericsError("degenerate metric: |det g| < 1e-14");
  return d;
}

Mat MetricField::upper(const Vec& x) const {
  Mat g = lower(x);
  double d = g.determinant();
  if (std::abs(d) < 1e-14) throw NumericsError("degenerate metric: |det g| < 1e-14");
  return g.inverse();
}

double MetricField::sqrt_abs_det(const Vec& x) const { return std::sqrt(std::abs(det_lower(x))); }

std::vector<Mat> MetricField::d_lower(const Vec& x) const {
  if (d_lower_analytic_) return d_lower_analytic_(x);
  std::vector<Mat> out(dim_);
  auto f = [this](const Vec& y) { return lower(y); };
  for (int i = 0; i < dim_; ++i) out[i] = fd_partial(f, x, i, h_fd_);
  return out;
}

std::vector<Mat> MetricField::d_upper(const Vec& x) const {
  // d g^{-1} = -g^{-1} (d g) g^{-1}
  Mat gu = upper(x);
  auto dl = d_lower(x);
  std::vector<Mat> out(dim_);
  for (int i = 0; i < dim_; ++i) out[i] = -gu * dl[i] * gu;
  return out;
}

std::vector<std::vector<Mat>> MetricField::dd_upper(const Vec& x) const {
  // FD of d_upper (which may itself be analytic-backed); symmetrized in (i,j).
  std::vector<std::vector<Mat>> out(dim_, std::vector<Mat>(dim_));
  auto f = [this](const Vec& y) { return d_upper(y); };
  const double h = h_fd_;
  std::vector<std::vector<Mat>> raw(dim_);
  for (int i = 0; i < dim_; ++i) {
    Vec xp = x, xm = x, xpp = x, xmm = x;
    xp[i] += h; xm[i] -= h; xpp[i] += 2 * h; xmm[i] -= 2 * h;
    auto fp = f(xp), fm = f(xm), fpp = f(xpp), fmm = f(xmm);
    raw[i].resize(dim_);
    for (int j = 0; j < dim_; ++j)
      raw[i][j] = (-fpp[j] + 8.0 * fp[j] - 8.0 * fm[j] + fmm[j]) / (12.0 * h);
  }
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) out[i][j] = 0.5 * (raw[i][j] + raw[j][i]);
  return out;
}

Vec MetricField::dlog_sqrt_abs_det(const Vec& x) const {
  // d_i log sqrt|det g| = 1/2 tr(g^{-1} d_i g)
  Mat gu = upper(x);
  auto dl = d_lower(x);
  Vec out(dim_);
  for (int i = 0; i < dim_; ++i) out[i] = 0.5 * (gu * dl[i]).trace();
  return out;
}

void MetricField::check_signature(const Vec& x, double tol) const {
  Mat g = lower(x);
  Mat gu = upper(x);
  Mat id = g * gu - Mat::Identity(dim_, dim_);
  if (id.cwiseAbs().maxCoeff() > tol)
    throw NumericsError("metric inverse identity violated beyond tolerance");
  Eigen::SelfAdjointEigenSolver<Mat> es(g);
  int neg = 0, pos = 0;
  for (int i = 0; i < dim_; ++i) {
    if (es.eigenvalues()[i] < 0) ++neg;
    else ++pos;
  }
  if (neg != 1 || pos != dim_ - 1)
    throw NumericsError("metric signature is not (-, +, ..., +)");
}

// ---------------------------------------------------------------------------
// CoefficientTriple

CoefficientTriple CoefficientTriple::make(MetricField g, CVecClosure A, CScalarClosure q) {
  CoefficientTriple t;
  const int d = g.dim();
  t.g = std::move(g);
  t.A = A ? std::move(A) : CVecClosure([d](const Vec&) { return CVec::Zero(d); });
  t.q = q ? std::move(q) : CScalarClosure([](const Vec&) { return cplx(0.0, 0.0); });
  return t;
}

CVec CoefficientTriple::A_at(const Vec& x) const { return A(x); }
cplx CoefficientTriple::q_at(const Vec& x) const { return q(x); }

CMat CoefficientTriple::dA(const Vec& x) const {
  const int d = g.dim();
  CMat out(d, d);
  for (int i = 0; i < d; ++i) out.row(i) = fd_partial(A, x, i, h_fd).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise operations

const char* to_string(CausalClass c) {
  switch (c) {
    case CausalClass::Timelike: return "timelike";
    case CausalClass::Lightlike: return "lightlike";
    case CausalClass::Spacelike: return "spacelike";
  }
  return "?";
}

CausalClass classify(const MetricField& g, const Vec& x, const Vec& xi, double tol) {
  require_finite(x, "classify x");
  require_finite(xi, "classify xi");
  double q = xi.dot(g.upper(x) * xi);
  double scale = tol * xi.squaredNorm();
  if (q < -scale) return CausalClass::Timelike;
  if (q > scale) return CausalClass::Spacelike;
  return CausalClass::Lightlike;
}

Vec raise_index(const MetricField& g, const Vec& x, const Vec& xi) { return g.upper(x) * xi; }
Vec lower_index(const MetricField& g, const Vec& x, const Vec& v) { return g.lower(x) * v; }

std::vector<Mat> christoffel(const MetricField& g, const Vec& x) {
  const int d = g.dim();
  Mat gu = g.upper(x);
  auto dl = g.d_lower(x);
  std::vector<Mat> gamma(d, Mat::Zero(d, d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) {
        double s = 0;
        for (int l = 0; l < d; ++l)
          s += gu(i, l) * (dl[j](l, k) + dl[k](l, j) - dl[l](j, k));
        gamma[i](j, k) = 0.5 * s;
      }
  return gamma;
}

namespace {
template <typename Closure, typename Scalar>
Scalar box_g_impl(const MetricField& g, const Closure& u, const Vec& x, double h) {
  const int d = g.dim();
  if (std::abs(g.det_lower(x)) < 1e-14) throw NumericsError("box_g: |det g| below 1e-14");
  Mat gu = g.upper(x);
  auto dgu = g.d_upper(x);
  Vec dls = g.dlog_sqrt_abs_det(x);
  // grad u and Hessian of u by FD
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> du(d);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> hu(d, d);
  for (int i = 0; i < d; ++i) du[i] = fd_partial(u, x, i, h);
  for (int i = 0; i < d; ++i) {
    hu(i, i) = fd_second(u, x, i, h);
    for (int j = i + 1; j < d; ++j) hu(i, j) = hu(j, i) = fd_mixed(u, x, i, j, h);
  }
  Scalar out{};
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k)
      out += gu(j, k) * hu(j, k) + (dgu[j](j, k) + dls[j] * gu(j, k)) * du[k];
  return out;
}
}  // namespace

double box_g(const MetricField& g, const ScalarClosure& u, const Vec& x, double h) {
  return box_g_impl<ScalarClosure, double>(g, u, x, h);
}
cplx box_g(const MetricField& g, const CScalarClosure& u, const Vec& x, double h) {
  return box_g_impl<CScalarClosure, cplx>(g, u, x, h);
}

CoefficientTriple pullback_triple(const CoefficientTriple& t, const Diffeo& phi,
                                  const Chart& chart, const std::vector<Vec>& boundary_samples,
                                  double tol) {
  for (const auto& s : boundary_samples) {
    if ((phi.map(s) - s).norm() > tol)
      throw NumericsError("pullback: diffeomorphism does not fix the boundary pointwise");
    if (std::abs(phi.jacobian(s).determinant()) < 1e-12)
      throw NumericsError("pullback: singular Jacobian at a boundary sample");
  }
  (void)chart;
  CoefficientTriple out;
  auto gl = [t, phi](const Vec& x) -> Mat {
    Mat J = phi.jacobian(x);
    return J.transpose() * t.g.lower(phi.map(x)) * J;
  };
  out.g = MetricField(t.g.dim(), gl, t.g.h_fd());
  auto A = t.A;
  out.A = [A, phi](const Vec& x) -> CVec {
    Mat J = phi.jacobian(x);
    return J.transpose().cast<cplx>() * A(phi.map(x));
  };
  auto q = t.q;
  out.q = [q, phi](const Vec& x) { return q(phi.map(x)); };
  out.h_fd = t.h_fd;
  return out;
}

CoefficientTriple conformal_transform(const CoefficientTriple& t, const ScalarClosure& phi,
                                      const ScalarClosure& psi, double h) {
  const int d = t.g.dim();
  const double c = 0.5 * (d - 2.0);
  CoefficientTriple out;
  MetricField gbase = t.g;
  auto gl = [gbase, phi](const Vec& x) -> Mat { return std::exp(-2.0 * phi(x)) * gbase.lower(x); };
  out.g = MetricField(d, gl, t.g.h_fd());
  auto A = t.A;
  out.A = [A, psi, h](const Vec& x) -> CVec {
    return A(x) - fd_gradient(psi, x, h).cast<cplx>();
  };
  auto q = t.q;
  out.q = [gbase, q, phi, c, h](const Vec& x) -> cplx {
    double bphi = box_g(gbase, phi, x, h);
    Vec dphi = fd_gradient(phi, x, h);
    double grad2 = dphi.dot(gbase.upper(x) * dphi);
    double q_phi = c * bphi - c * c * grad2;
    return std::exp(2.0 * phi(x)) * (q(x) - q_phi);
  };
  out.h_fd = t.h_fd;
  return out;
}

cplx apply_P(const CoefficientTriple& t, const CScalarClosure& u, const Vec& x, double h) {
  // P u = box_g u - 2i A^k d_k u - i (div A) u - |A|^2_g u + q u
  const int d = t.g.dim();
  Mat gu = t.g.upper(x);
  auto dgu = t.g.d_upper(x);
  Vec dls = t.g.dlog_sqrt_abs_det(x);
  CVec Ax = t.A_at(x);
  CMat dAx = t.dA(x);
  cplx divA = 0.0;
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k)
      divA += gu(j, k) * dAx(j, k) + (dgu[j](j, k) + dls[j] * gu(j, k)) * Ax[k];
  cplx A2 = Ax.transpose() * gu.cast<cplx>() * Ax;
  CVec du(d);
  for (int i = 0; i < d; ++i) du[i] = fd_partial(u, x, i, h);
  cplx Agrad = 0.0;
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) Agrad += gu(j, k) * Ax[j] * du[k];
  cplx box = box_g(t.g, u, x, h);
  return box - cplx(0, 2) * Agrad - cplx(0, 1) * divA * u(x) - A2 * u(x) + t.q_at(x) * u(x);
}

}  // namespace nullray
