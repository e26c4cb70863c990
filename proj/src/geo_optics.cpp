#include "nullray/geo_optics.hpp"

#include <cmath>
#include <sstream>

namespace nullray {

// ---------------------------------------------------------------------------
// Phase transport

Mat initial_phase_hessian(const MetricField& g, const BoundaryPatch& patch, const Vec& u,
                          const Vec& p) {
  const int d = g.dim();
  const int np = patch.nparams;
  Vec x = patch.emb(u);
  Mat E = patch.demb(u);
  auto d2e = patch.d2emb(u);
  Vec v = g.upper(x) * p;
  auto dG = g.d_upper(x);

  Mat B(d, d);
  B.block(0, 0, d, np) = E;
  B.col(np) = v;
  if (std::abs(B.determinant()) < 1e-12)
    throw NumericsError("initial_phase_hessian: grazing ray (frame degenerate)");

  auto half_dg_pp = [&](const Vec& w) {
    double s = 0;
    for (int m = 0; m < d; ++m) s += w[m] * p.dot(dG[m] * p);
    return 0.5 * s;
  };

  Mat S(d, d);
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < np; ++j) {
      double s = 0;
      for (int c = 0; c < d; ++c) s += p[c] * d2e[c](i, j);
      S(i, j) = -s;
    }
  for (int j = 0; j < np; ++j) {
    double val = -half_dg_pp(E.col(j));
    S(np, j) = val;
    S(j, np) = val;
  }
  S(np, np) = -half_dg_pp(v);
  // S(v, E_j) entries above are W(v, .) values; the tangential block holds
  // W(E_i, E_j). Mixed consistency: W(v, E_j) includes tangential parts, so S
  // as assembled is exactly B^T W B only if rows/cols are matched; enforce by
  // solving the linear system for W instead of assuming the block layout.
  // B^T W B = S  =>  W = B^{-T} S B^{-1}, with S symmetric by construction.
  Mat Binv = B.inverse();
  Mat W = Binv.transpose() * S * Binv;
  return 0.5 * (W + W.transpose());
}

double boxphi_value(const MetricField& g, const Vec& x, const Vec& p, const Mat& W) {
  const int d = g.dim();
  Mat G = g.upper(x);
  auto dG = g.d_upper(x);
  Vec dls = g.dlog_sqrt_abs_det(x);
  double out = (G.array() * W.array()).sum();
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) out += (dG[j](j, k) + dls[j] * G(j, k)) * p[k];
  return out;
}

PhaseTransport phase_hessian_evolution(const MetricField& g, const RaySolution& ray,
                                       const Mat& W0, double s_end, int n_samp,
                                       double blowup_norm) {
  PhaseTransport ph;
  ph.s.resize(n_samp);
  ph.W.resize(n_samp);
  ph.boxphi.resize(n_samp);
  const int d = g.dim();
  const double ds = s_end / (n_samp - 1);

  auto rhs = [&](double s, const Mat& W) -> Mat {
    RayState st = ray.eval(s);
    Mat G = g.upper(st.x);
    auto dG = g.d_upper(st.x);
    auto ddG = g.dd_upper(st.x);
    Mat Hxx(d, d), Hpx(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        Hxx(i, j) = 0.5 * st.p.dot(ddG[i][j] * st.p);
        Hpx(i, j) = (dG[j] * st.p)(i);  // d^2 H / d p_i d x_j
      }
    Mat out = -(Hxx + Hpx * W + W * Hpx.transpose() + W * G * W);
    return out;
  };

  Mat W = W0;
  for (int k = 0; k < n_samp; ++k) {
    double s = k * ds;
    ph.s[k] = s;
    ph.W[k] = W;
    RayState st = ray.eval(s);
    ph.boxphi[k] = boxphi_value(g, st.x, st.p, W);
    if (!W.allFinite() || W.cwiseAbs().maxCoeff() > blowup_norm) {
      ph.valid = false;
      ph.blowup_index = k;
      for (int j = k; j < n_samp; ++j) {
        ph.s[j] = j * ds;
        ph.W[j] = W;
        ph.boxphi[j] = ph.boxphi[k > 0 ? k - 1 : 0];
      }
      break;
    }
    if (k + 1 < n_samp) {
      // one RK4 step per grid interval (the grid is fine)
      Mat k1 = rhs(s, W);
      Mat k2 = rhs(s + 0.5 * ds, W + 0.5 * ds * k1);
      Mat k3 = rhs(s + 0.5 * ds, W + 0.5 * ds * k2);
      Mat k4 = rhs(s + ds, W + ds * k3);
      W = W + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      W = 0.5 * (W + W.transpose());
    }
  }

  // grid derivative of boxphi (4th order central, one-sided ends)
  ph.dboxphi_ds.resize(n_samp);
  auto& b = ph.boxphi;
  for (int k = 0; k < n_samp; ++k) {
    if (k >= 2 && k + 2 < n_samp)
      ph.dboxphi_ds[k] = (-b[k + 2] + 8 * b[k + 1] - 8 * b[k - 1] + b[k - 2]) / (12 * ds);
    else if (k + 4 < n_samp)
      ph.dboxphi_ds[k] =
          (-25 * b[k] + 48 * b[k + 1] - 36 * b[k + 2] + 16 * b[k + 3] - 3 * b[k + 4]) / (12 * ds);
    else if (k >= 4)
      ph.dboxphi_ds[k] =
          (25 * b[k] - 48 * b[k - 1] + 36 * b[k - 2] - 16 * b[k - 3] + 3 * b[k - 4]) / (12 * ds);
    else
      ph.dboxphi_ds[k] = 0;
  }
  return ph;
}

SpreadingTransport spreading_transport(const MetricField& g, const BoundaryPatch& patch,
                                       const BoundaryCovector& entry, const Vec& p_run,
                                       const RaySolution& ray, double s_end, int n_samp) {
  if (ray.variational.empty())
    throw NumericsError("spreading_transport needs variational ray data");
  const int d = g.dim();
  const int np = patch.nparams;
  // entry-map derivatives d(x0, p0)/du_i at fixed covector components, by FD
  const double h = 1e-6;
  const bool future = entry.orientation == Orientation::Future;
  auto run_mom = [&](const Vec& u) {
    BoundaryCovector b = entry;
    b.u = u;
    PointCovector lift =
        lightlike_lift(g, patch, b, future ? LiftSide::Interior : LiftSide::Exterior);
    return std::pair<Vec, Vec>(lift.x, future ? lift.xi : Vec(-lift.xi));
  };
  (void)p_run;
  std::vector<Vec> dz(np);
  for (int i = 0; i < np; ++i) {
    Vec up = entry.u, um = entry.u;
    up[i] += h;
    um[i] -= h;
    auto [xp, pp] = run_mom(up);
    auto [xm, pm] = run_mom(um);
    Vec col(2 * d);
    col.segment(0, d) = (xp - xm) / (2 * h);
    col.segment(d, d) = (pp - pm) / (2 * h);
    dz[i] = col;
  }
  SpreadingTransport sp;
  sp.s.resize(n_samp);
  sp.J.resize(n_samp);
  double J0 = 0;
  int prev_sign = 0;
  for (int k = 0; k < n_samp; ++k) {
    double s = s_end * k / (n_samp - 1.0);
    sp.s[k] = s;
    RayState st = ray.eval(s);
    // variational matrix interpolated from the nearest stored sample pair
    // (linear in s between accepted steps)
    size_t lo = 0, hi = ray.samples.size() - 1;
    while (hi - lo > 1) {
      size_t mid = (lo + hi) / 2;
      if (ray.samples[mid].s <= s) lo = mid;
      else hi = mid;
    }
    double t = (s - ray.samples[lo].s) /
               std::max(1e-300, ray.samples[hi].s - ray.samples[lo].s);
    t = std::clamp(t, 0.0, 1.0);
    Mat M = (1 - t) * ray.variational[lo] + t * ray.variational[hi];
    Mat cols(d, np + 1);
    cols.col(0) = g.upper(st.x) * st.p;
    for (int i = 0; i < np; ++i)
      cols.col(1 + i) = M.block(0, 0, d, d) * dz[i].segment(0, d) +
                        M.block(0, d, d, d) * dz[i].segment(d, d);
    double J = cols.determinant();
    if (k == 0) {
      J0 = J;
      if (std::abs(J0) < 1e-12)
        throw NumericsError("spreading_transport: degenerate entry fan");
    }
    sp.J[k] = J / J0;
    int sgn = sp.J[k] > 0 ? 1 : (sp.J[k] < 0 ? -1 : 0);
    if (k > 0 && sgn != 0 && prev_sign != 0 && sgn != prev_sign) ++sp.folds;
    if (sgn != 0) prev_sign = sgn;
  }
  sp.spread_exit = 1.0 / std::sqrt(std::abs(sp.J.back()));
  sp.maslov_factor = std::exp(cplx(0, -0.5 * M_PI * sp.folds));
  return sp;
}

cplx exit_a0_factor(const MetricField& g, const CVecClosure& A, const RaySolution& ray,
                    const SpreadingTransport& sp, double s_end) {
  auto integrand = [&](double s) -> cplx {
    RayState st = ray.eval(s);
    Vec v = g.upper(st.x) * st.p;
    return A(st.x).dot(v.cast<cplx>());
  };
  auto [intA, err] = integrate_adaptive(integrand, 0.0, s_end, 1e-12);
  (void)err;
  return sp.spread_exit * sp.maslov_factor * std::exp(cplx(0, 1) * intA);
}

AmplitudeTransport transport_a0(const MetricField& g, const CVecClosure& A, const RaySolution& ray,
                                const PhaseTransport& ph) {
  AmplitudeTransport amp;
  const int n = int(ph.s.size());
  amp.s = ph.s;
  amp.valid = ph.valid;
  std::vector<cplx> box_c(n), ai(n);
  for (int k = 0; k < n; ++k) {
    RayState st = ray.eval(ph.s[k]);
    Vec v = g.upper(st.x) * st.p;
    box_c[k] = ph.boxphi[k];
    ai[k] = cplx(0, 1) * A(st.x).dot(v.cast<cplx>());
  }
  auto cum_box = cumulative_integral(ph.s, box_c);
  auto cum_ai = cumulative_integral(ph.s, ai);
  amp.a0.resize(n);
  amp.da0_ds.resize(n);
  amp.half_int_box.resize(n);
  amp.int_iA.resize(n);
  for (int k = 0; k < n; ++k) {
    amp.half_int_box[k] = 0.5 * cum_box[k].real();
    amp.int_iA[k] = cum_ai[k];
    amp.a0[k] = std::exp(-amp.half_int_box[k] + amp.int_iA[k]);
    amp.da0_ds[k] = amp.a0[k] * (-0.5 * box_c[k] + ai[k]);
  }
  amp.exit_a0 = amp.a0.back();
  return amp;
}

// ---------------------------------------------------------------------------
// GOBundle

GOBundle::GOBundle(const MetricField& g, const CVecClosure& A, const Chart& chart,
                   const BoundaryPatch& patch, const BoundaryCovector& entry,
                   const BundleOpts& opts) {
  g_ = &g;
  h_ = opts.h_sten;
  rich_ = opts.richardson;
  LensOpts lopts;
  lopts.ray = opts.ray;
  central_ = lens_relation(g, chart, patch, entry, lopts);
  if (central_.status != LensStatus::Exited) return;
  const double s_end = central_.s_exit;

  // offsets: center, then the 3x3 ring (3-point for a 1-parameter patch) at
  // spacing h, repeated at h/2 when Richardson extrapolation is on
  const int np = patch.nparams;
  std::vector<Vec> offs;
  offs.push_back(Vec::Zero(np));
  ring_size_ = (np > 1) ? 8 : 2;
  auto add_ring = [&](double h) {
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j) {
        if (i == 0 && j == 0) continue;
        if (np == 1 && j != 0) continue;
        Vec o = Vec::Zero(np);
        o[0] = i * h;
        if (np > 1) o[1] = j * h;
        offs.push_back(o);
      }
  };
  add_ring(h_);
  if (rich_) add_ring(0.5 * h_);

  const int n = opts.n_samp;
  sgrid_.resize(n);
  for (int k = 0; k < n; ++k) sgrid_[k] = s_end * k / (n - 1.0);

  // a chart without a lateral boundary stop: stencil rays run a little past it
  Chart free_chart = chart;
  free_chart.rho = [](const Vec&) { return 1.0; };
  free_chart.drho = [dim = chart.dim](const Vec&) { return Vec::Zero(dim); };

  cols_.reserve(offs.size());
  for (size_t c = 0; c < offs.size(); ++c) {
    Column col;
    col.offset = offs[c];
    BoundaryCovector b = entry;
    b.u = entry.u + offs[c];
    const bool future = b.orientation == Orientation::Future;
    PointCovector lift =
        lightlike_lift(g, patch, b, future ? LiftSide::Interior : LiftSide::Exterior);
    Vec p_run = future ? lift.xi : Vec(-lift.xi);
    IntegrateOpts io = opts.ray;
    io.max_s = s_end * 1.05 + 4.0 * h_;
    io.variational = false;
    if (c == 0) {
      col.ray = central_.ray;  // reuse the lens run for the central column
      if (col.ray.s_end() < s_end * (1 - 1e-12)) return;
    } else {
      col.ray = integrate_bicharacteristic(g, free_chart, lift.x, p_run, io);
      if (col.ray.s_end() < s_end) return;  // stencil ray fell short
    }
    Mat W0 = initial_phase_hessian(g, patch, b.u, p_run);
    col.phase = phase_hessian_evolution(g, col.ray, W0, s_end, n);
    if (!col.phase.valid) {
      valid_ = false;
      cols_.push_back(std::move(col));
      return;
    }
    col.amp = transport_a0(g, A, col.ray, col.phase);
    cols_.push_back(std::move(col));
  }
  valid_ = true;
}

const PhaseTransport& GOBundle::central_phase() const { return cols_[0].phase; }
const AmplitudeTransport& GOBundle::central_amp() const { return cols_[0].amp; }

namespace {
// second-derivative 9-point helpers on a 3x3 value grid v[i][j], i,j in {-1,0,1}
template <typename T>
struct Grid3 {
  T v[3][3];
  T& at(int i, int j) { return v[i + 1][j + 1]; }
  const T& at(int i, int j) const { return v[i + 1][j + 1]; }
};
}  // namespace

const GOBundle::Column& GOBundle::col_of(int i, int j, int set) const {
  if (i == 0 && j == 0) return cols_[0];
  const int np = int(cols_[0].offset.size());
  const int base = 1 + set * ring_size_;
  int idx = 0;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b) {
      if (a == 0 && b == 0) continue;
      if (np == 1 && b != 0) continue;
      if (a == i && b == j) return cols_[base + idx];
      ++idx;
    }
  throw NumericsError("bundle index");
}

cplx GOBundle::corrector_at(int node, int set, const CoefficientTriple& t) const {
  const MetricField& g = *g_;
  const int d = g.dim();
  const int np = int(cols_[0].offset.size());
  const double h = set == 0 ? h_ : 0.5 * h_;

  // collect 3x3 grids of position, momentum, a0, da0/ds at this node
  Grid3<Vec> X, P;
  Grid3<cplx> U, Us;
  const double s = sgrid_[node];
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j) {
      if (np == 1 && j != 0) continue;
      const Column& c = col_of(i, np > 1 ? j : 0, set);
      RayState st = c.ray.eval(s);
      X.at(i, j) = st.x;
      P.at(i, j) = st.p;
      U.at(i, j) = c.amp.a0[node];
      Us.at(i, j) = c.amp.da0_ds[node];
    }

  // ray-family coordinates zeta = (s, u1[, u2]); central ray quantities
  const Column& cc = cols_[0];
  RayState st0 = cc.ray.eval(s);
  Mat G = g.upper(st0.x);
  auto dG = g.d_upper(st0.x);
  Vec dls = g.dlog_sqrt_abs_det(st0.x);
  Vec xdot = G * st0.p;
  Vec pdot(d);
  for (int k = 0; k < d; ++k) pdot[k] = -0.5 * st0.p.dot(dG[k] * st0.p);
  Vec xddot(d);
  {
    Mat dGdir = Mat::Zero(d, d);
    for (int m = 0; m < d; ++m) dGdir += xdot[m] * dG[m];
    xddot = dGdir * st0.p + G * pdot;
  }

  // psi = d log a0 / ds and its s-derivative from the stored transports
  cplx psi0 = Us.at(0, 0) / U.at(0, 0);
  cplx dpsi0;
  {
    const auto& ph = cc.phase;
    RayState st = st0;
    Vec v = xdot;
    // psi = -1/2 boxphi + i <A, xdot>; d/ds by grid FD of boxphi plus exact A part
    CVec Ax = t.A(st.x);
    CMat dAx = t.dA(st.x);
    cplx dAdot = 0.0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) dAdot += dAx(a, b) * v[a] * cplx(v[b], 0);
    // d/ds <A, xdot> = (d_a A_b) v^a v^b + <A, xddot>
    dAdot += Ax.dot(xddot.cast<cplx>());
    dpsi0 = -0.5 * ph.dboxphi_ds[node] + cplx(0, 1) * dAdot;
  }

  const int nz = 1 + np;  // zeta dimensions
  Mat J(d, nz);
  J.col(0) = xdot;
  std::vector<Mat> d2x(d, Mat::Zero(nz, nz));
  Eigen::VectorXcd dU(nz);
  CMat d2U = CMat::Zero(nz, nz);

  dU[0] = Us.at(0, 0);
  d2U(0, 0) = U.at(0, 0) * (psi0 * psi0) + U.at(0, 0) * dpsi0;
  for (int c = 0; c < d; ++c) d2x[c](0, 0) = xddot[c];

  for (int a = 0; a < np; ++a) {
    auto pick = [&](int off) {
      return a == 0 ? std::array<int, 2>{off, 0} : std::array<int, 2>{0, off};
    };
    auto xp = X.at(pick(1)[0], pick(1)[1]);
    auto xm = X.at(pick(-1)[0], pick(-1)[1]);
    J.col(1 + a) = (xp - xm) / (2 * h);
    dU[1 + a] = (U.at(pick(1)[0], pick(1)[1]) - U.at(pick(-1)[0], pick(-1)[1])) / (2 * h);
    d2U(0, 1 + a) = d2U(1 + a, 0) =
        (Us.at(pick(1)[0], pick(1)[1]) - Us.at(pick(-1)[0], pick(-1)[1])) / (2 * h);
    d2U(1 + a, 1 + a) = (U.at(pick(1)[0], pick(1)[1]) - 2.0 * U.at(0, 0) +
                         U.at(pick(-1)[0], pick(-1)[1])) /
                        (h * h);
    for (int c = 0; c < d; ++c)
      d2x[c](1 + a, 1 + a) = (xp[c] - 2 * X.at(0, 0)[c] + xm[c]) / (h * h);
    // mixed s-u second derivatives of x via xdot = g^{-1}(x) p across the stencil
    Vec xd_p = g.upper(X.at(pick(1)[0], pick(1)[1])) * P.at(pick(1)[0], pick(1)[1]);
    Vec xd_m = g.upper(X.at(pick(-1)[0], pick(-1)[1])) * P.at(pick(-1)[0], pick(-1)[1]);
    Vec mix = (xd_p - xd_m) / (2 * h);
    for (int c = 0; c < d; ++c) d2x[c](0, 1 + a) = d2x[c](1 + a, 0) = mix[c];
  }
  if (np > 1) {
    d2U(1, 2) = d2U(2, 1) =
        (U.at(1, 1) - U.at(1, -1) - U.at(-1, 1) + U.at(-1, -1)) / (4 * h * h);
    for (int c = 0; c < d; ++c)
      d2x[c](1, 2) = d2x[c](2, 1) =
          (X.at(1, 1)[c] - X.at(1, -1)[c] - X.at(-1, 1)[c] + X.at(-1, -1)[c]) / (4 * h * h);
  }

  if (nz != d) throw NumericsError("bundle: parameter count mismatch");
  Mat Jinv = J.inverse();
  CVec grad = Jinv.transpose().cast<cplx>() * dU;
  CMat H = d2U;
  for (int c = 0; c < d; ++c) H -= grad[c] * d2x[c].cast<cplx>();
  CMat Hess = Jinv.transpose().cast<cplx>() * H * Jinv.cast<cplx>();

  // P_{g,A,0} a0 = box_g a0 - 2 i A^k d_k a0 - i (div A) a0 - |A|^2 a0
  CVec Ax = t.A(st0.x);
  CMat dAx = t.dA(st0.x);
  cplx divA = 0.0, A2 = 0.0, Agrad = 0.0, box = 0.0;
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) {
      box += G(j, k) * Hess(j, k) + (dG[j](j, k) + dls[j] * G(j, k)) * grad[k];
      divA += G(j, k) * dAx(j, k) + (dG[j](j, k) + dls[j] * G(j, k)) * Ax[k];
      A2 += G(j, k) * Ax[j] * Ax[k];
      Agrad += G(j, k) * Ax[j] * grad[k];
    }
  cplx a0c = U.at(0, 0);
  cplx Pa0 = box - cplx(0, 2) * Agrad - cplx(0, 1) * divA * a0c - A2 * a0c;
  return Pa0 / a0c;
}

std::vector<cplx> GOBundle::corrector_base(const CoefficientTriple& t) const {
  if (!valid_) throw NumericsError("bundle invalid (conjugate flag or short stencil ray)");
  const int n = int(sgrid_.size());
  std::vector<cplx> out(n);
  for (int k = 0; k < n; ++k) {
    cplx c0 = corrector_at(k, 0, t);
    if (rich_) {
      cplx c1 = corrector_at(k, 1, t);
      out[k] = (4.0 * c1 - c0) / 3.0;
    } else {
      out[k] = c0;
    }
  }
  return out;
}

AmplitudeTransport GOBundle::transport_a1_with(const std::vector<cplx>& corrector_plus_q) const {
  const auto& amp0 = cols_[0].amp;
  const int n = int(sgrid_.size());
  auto cum = cumulative_integral(sgrid_, corrector_plus_q);
  AmplitudeTransport a1;
  a1.s = sgrid_;
  a1.a0.resize(n);
  for (int k = 0; k < n; ++k) a1.a0[k] = cplx(0, 0.5) * amp0.a0[k] * cum[k];
  a1.exit_a0 = a1.a0.back();
  a1.valid = true;
  return a1;
}

AmplitudeTransport GOBundle::transport_a1(const CoefficientTriple& t) const {
  auto corr = corrector_base(t);
  const int n = int(sgrid_.size());
  for (int k = 0; k < n; ++k) {
    RayState st = cols_[0].ray.eval(sgrid_[k]);
    corr[k] += t.q(st.x);
  }
  return transport_a1_with(corr);
}

Mat GOBundle::momentum_gradient_fd(int node) const {
  const MetricField& g = *g_;
  const int d = g.dim();
  const int np = int(cols_[0].offset.size());
  const double s = sgrid_[node];
  const double h = h_;
  RayState st0 = cols_[0].ray.eval(s);
  Mat G = g.upper(st0.x);
  auto dG = g.d_upper(st0.x);
  Vec pdot(d);
  for (int k = 0; k < d; ++k) pdot[k] = -0.5 * st0.p.dot(dG[k] * st0.p);
  Mat dP(d, d), dX(d, d);
  dP.col(0) = pdot;
  dX.col(0) = G * st0.p;
  for (int a = 0; a < np; ++a) {
    const Column& cp = (a == 0) ? col_of(1, 0, 0) : col_of(0, 1, 0);
    const Column& cm = (a == 0) ? col_of(-1, 0, 0) : col_of(0, -1, 0);
    RayState sp = cp.ray.eval(s), sm = cm.ray.eval(s);
    dP.col(1 + a) = (sp.p - sm.p) / (2 * h);
    dX.col(1 + a) = (sp.x - sm.x) / (2 * h);
  }
  return dP * dX.inverse();
}

// ---------------------------------------------------------------------------
// SGJetEngine

SGJetEngine::SGJetEngine(SGTriple t, double h_jet, double h_tan)
    : t_(std::move(t)), h_jet_(h_jet), h_tan_(h_tan) {}

SGBoundaryJets SGJetEngine::jets(const Vec& xp) const {
  if (t_.analytic_jets) return t_.analytic_jets(xp);
  const int d = t_.dim;
  const int np = d - 1;
  const double h = h_jet_;
  // sample tangential inverse block, det, and A components at 6 normal offsets
  std::vector<Mat> gu(6);
  std::vector<double> dets(6);
  std::vector<CVec> Asg(6);
  for (int k = 0; k < 6; ++k) {
    Vec ur(d);
    ur.head(np) = xp;
    ur[np] = k * h;
    Mat gfull = t_.g_sg(ur);
    Mat gtan = gfull.block(0, 0, np, np);
    gu[k] = gtan.inverse();
    dets[k] = gfull.determinant();
    Asg[k] = t_.A_sg(ur);
  }
  auto d1 = [&](auto f) {
    return (-137.0 / 60 * f(0) + 5.0 * f(1) - 5.0 * f(2) + 10.0 / 3 * f(3) - 5.0 / 4 * f(4) +
            1.0 / 5 * f(5)) /
           h;
  };
  auto d2 = [&](auto f) {
    return (15.0 / 4 * f(0) - 77.0 / 6 * f(1) + 107.0 / 6 * f(2) - 13.0 * f(3) +
            61.0 / 12 * f(4) - 5.0 / 6 * f(5)) /
           (h * h);
  };
  SGBoundaryJets j;
  j.gu0 = gu[0];
  j.gl0 = gu[0].inverse();
  j.gu1 = d1([&](int k) { return gu[k]; });
  j.gu2 = d2([&](int k) { return gu[k]; });
  j.det0 = dets[0];
  j.det1 = d1([&](int k) { return dets[k]; });
  j.det2 = d2([&](int k) { return dets[k]; });
  j.Atan = Asg[0].head(np);
  j.An = Asg[0][np];
  j.dAtan_n = d1([&](int k) { return CVec(Asg[k].head(np)); });
  j.dAn_n = d1([&](int k) { return Asg[k][np]; });
  Vec ur0(d);
  ur0.head(np) = xp;
  ur0[np] = 0.0;
  j.q0 = t_.q_sg(ur0);
  return j;
}

// ---------------------------------------------------------------------------
// Local DN symbol

namespace {

struct BoundaryPhaseData {
  double xin;
  Vec wmix;       // d_a xi_n
  double wnn;     // d_n^2 phi
  double dterm;   // (d_n det / 2 det) xi_n + wnn
  double Q;       // tangential divergence term
  double boxphi;  // dterm + Q
  cplx s0a;
  cplx D1;  // d_n a0
  Vec xi_up;
};

BoundaryPhaseData boundary_phase_data(const SGJetEngine& eng, const Vec& xp, const Vec& xip) {
  const int np = int(xip.size());
  auto J = eng.jets(xp);
  BoundaryPhaseData b;
  double rad = -xip.dot(J.gu0 * xip);
  if (rad <= 0) throw NotTimelikeError(rad);
  b.xin = std::sqrt(rad);
  b.xi_up = J.gu0 * xip;

  const double ht = eng.h_tan();
  // d_a xi_n = -(d_a g^{bc}) xi_b xi_c / (2 xi_n), tangential FD of the jets
  b.wmix.resize(np);
  std::vector<Mat> dgu_tan(np);
  std::vector<double> ddet_tan(np);
  for (int a = 0; a < np; ++a) {
    Vec xpp = xp, xpm = xp;
    xpp[a] += ht;
    xpm[a] -= ht;
    auto Jp = eng.jets(xpp);
    auto Jm = eng.jets(xpm);
    dgu_tan[a] = (Jp.gu0 - Jm.gu0) / (2 * ht);
    ddet_tan[a] = (Jp.det0 - Jm.det0) / (2 * ht);
    b.wmix[a] = -xip.dot(dgu_tan[a] * xip) / (2 * b.xin);
  }
  double mixed = 0;
  for (int a = 0; a < np; ++a) mixed += (J.gu0 * b.wmix)(a)*xip[a];
  b.wnn = -(xip.dot(J.gu1 * xip) + 2 * mixed) / (2 * b.xin);
  b.dterm = (J.det1 / (2 * J.det0)) * b.xin + b.wnn;
  // Q = (1/sqrt(-det)) d_a ( sqrt(-det) g^{ab} ) xi_b
  double Q = 0;
  double sq0 = std::sqrt(-J.det0);
  for (int a = 0; a < np; ++a) {
    double dsq = -ddet_tan[a] / (2 * sq0);
    for (int bidx = 0; bidx < np; ++bidx)
      Q += (dsq * J.gu0(a, bidx) + sq0 * dgu_tan[a](a, bidx)) * xip[bidx] / sq0;
  }
  b.Q = Q;
  b.boxphi = b.dterm + b.Q;
  cplx Aup_xi = (J.gu0.cast<cplx>() * J.Atan).dot(xip.cast<cplx>());
  b.s0a = (cplx(0, 2) * Aup_xi - b.boxphi) / (2 * b.xin);
  b.D1 = b.s0a + cplx(0, 1) * J.An;
  return b;
}

// short interior ray for d/ds box_g(phi) at the boundary
double dboxphi_ds0(const SGJetEngine& eng, const Vec& xp, const Vec& xip, double xin) {
  const int d = eng.dim();
  const int np = d - 1;
  MetricField gsg(d, eng.triple().g_sg, 1e-4);
  std::vector<std::array<double, 2>> box(d, {-1e30, 1e30});
  box[np] = {0.0, 1e30};
  Chart chart = Chart::make(d, box, [np](const Vec& x) { return x[np] + 1.0; });
  BoundaryPatch patch = BoundaryPatch::flat(d, np, std::vector<std::array<double, 2>>(
                                                       np, {-1e30, 1e30}));
  Vec p(d);
  p.head(np) = xip;
  p[np] = xin;
  double s_short = 0.08 / std::max(xin, 0.2);
  IntegrateOpts io;
  io.max_s = s_short * 1.2;
  io.variational = false;
  io.step_init = s_short / 16;
  Chart free_chart = chart;
  free_chart.rho = [](const Vec&) { return 1.0; };
  RaySolution ray = integrate_bicharacteristic(gsg, free_chart, patch.emb(xp), p, io);
  Mat W0 = initial_phase_hessian(gsg, patch, xp, p);
  PhaseTransport ph = phase_hessian_evolution(gsg, ray, W0, s_short, 25);
  return ph.dboxphi_ds[0];
}

}  // namespace

LocalSymbol local_dn_symbol(const SGJetEngine& eng, const Vec& xp, const Vec& xip, int order) {
  const int np = int(xip.size());
  auto J = eng.jets(xp);
  auto B = boundary_phase_data(eng, xp, xip);
  LocalSymbol out;
  out.xin = B.xin;
  out.principal = cplx(0, -1) * B.xin;
  out.s0a = B.s0a;
  if (order < 1) return out;

  const double ht = eng.h_tan();
  // tangential derivatives of D1 and of boxphi at fixed covector components
  CVec dD1(np);
  Vec dbox_tan(np);
  for (int a = 0; a < np; ++a) {
    Vec xpp = xp, xpm = xp;
    xpp[a] += ht;
    xpm[a] -= ht;
    auto Bp = boundary_phase_data(eng, xpp, xip);
    auto Bm = boundary_phase_data(eng, xpm, xip);
    dD1[a] = (Bp.D1 - Bm.D1) / (2 * ht);
    dbox_tan[a] = (Bp.boxphi - Bm.boxphi) / (2 * ht);
  }
  double dbox_ds = dboxphi_ds0(eng, xp, xip, B.xin);
  double dbox_n = dbox_ds;
  for (int a = 0; a < np; ++a) dbox_n -= B.xi_up[a] * dbox_tan[a];
  dbox_n /= B.xin;

  // d_n of the transport identity, solved for d_n^2 a0
  CVec Vn(np);
  for (int a = 0; a < np; ++a) {
    Vn[a] = (J.gu1 * xip)(a);
    Vn[a] += (J.gu0 * B.wmix)(a);
  }
  cplx term_A = 0;
  for (int a = 0; a < np; ++a) term_A += Vn[a] * J.Atan[a] + cplx(B.xi_up[a], 0) * J.dAtan_n[a];
  term_A += B.wnn * J.An + B.xin * J.dAn_n;
  cplx Adot = J.Atan.dot(B.xi_up.cast<cplx>()) + J.An * B.xin;  // <A, gamma_dot>
  cplx tang = 0;
  for (int a = 0; a < np; ++a) tang += B.xi_up[a] * dD1[a];
  cplx d2a0 = -(2.0 * B.wnn * B.D1 + 2.0 * tang - cplx(0, 2) * term_A -
                cplx(0, 2) * Adot * B.D1 + dbox_n + B.boxphi * B.D1) /
              (2 * B.xin);

  // P a0 at the boundary
  double sq0 = std::sqrt(-J.det0);
  cplx divA = J.dAn_n + (J.det1 / (2 * J.det0)) * J.An;
  for (int a = 0; a < np; ++a) {
    Vec xpp = xp, xpm = xp;
    xpp[a] += ht;
    xpm[a] -= ht;
    auto Jp = eng.jets(xpp);
    auto Jm = eng.jets(xpm);
    // (1/sqrt(-det)) d_a ( sqrt(-det) g^{ab} A_b )
    CVec fp = std::sqrt(-Jp.det0) * (Jp.gu0.cast<cplx>() * Jp.Atan);
    CVec fm = std::sqrt(-Jm.det0) * (Jm.gu0.cast<cplx>() * Jm.Atan);
    divA += (fp[a] - fm[a]) / (2 * ht) / sq0;
  }
  cplx A2 = J.Atan.dot((J.gu0.cast<cplx>() * J.Atan)) + J.An * J.An;
  cplx Pa0 = d2a0 + (J.det1 / (2 * J.det0)) * B.D1 - cplx(0, 2) * J.An * B.D1 -
             cplx(0, 1) * divA - A2 + J.q0;
  out.s1a = cplx(0, 1) * Pa0 / (2 * B.xin);
  return out;
}

// ---------------------------------------------------------------------------
// Semiglobal rows

SymbolRow semiglobal_symbol_data(const CoefficientTriple& t, const Chart& chart,
                                 const BoundaryPatch& patch, const BoundaryCovector& entry,
                                 const SymbolTableOpts& opts) {
  SymbolRow row;
  row.entry = entry;
  row.entry_phase = entry.u.dot(entry.xip);
  if (opts.with_a1) {
    GOBundle bundle(t.g, t.A, chart, patch, entry, opts.bundle);
    row.status = bundle.central().status;
    if (row.status != LensStatus::Exited) return row;
    if (!bundle.valid()) {
      row.conjugate_flag = true;
      return row;
    }
    const LensRecord& lr = bundle.central();
    row.xi_n_entry = lr.entry_xin;
    row.xi_n_exit = lr.exit_xin;
    row.lambda0 = -4.0 * row.xi_n_exit * row.xi_n_entry;
    row.s_exit = lr.s_exit;
    row.exit_u = lr.exit->u;
    row.exit_eta = lr.exit->xip;
    row.exit_a0 = bundle.central_amp().exit_a0;
    row.exit_a1 = bundle.transport_a1(t).exit_a0;
  } else {
    LensRecord lr = lens_relation(t.g, chart, patch, entry, opts.lens);
    row.status = lr.status;
    if (row.status != LensStatus::Exited) return row;
    row.xi_n_entry = lr.entry_xin;
    row.xi_n_exit = lr.exit_xin;
    row.lambda0 = -4.0 * row.xi_n_exit * row.xi_n_entry;
    row.s_exit = lr.s_exit;
    row.exit_u = lr.exit->u;
    row.exit_eta = lr.exit->xip;
    const bool future = entry.orientation == Orientation::Future;
    PointCovector lift =
        lightlike_lift(t.g, patch, entry, future ? LiftSide::Interior : LiftSide::Exterior);
    Vec p_run = future ? lift.xi : Vec(-lift.xi);
    Mat W0 = initial_phase_hessian(t.g, patch, entry.u, p_run);
    PhaseTransport ph = phase_hessian_evolution(t.g, lr.ray, W0, lr.s_exit, 400);
    if (!ph.valid) {
      row.conjugate_flag = true;
      return row;
    }
    row.exit_a0 = transport_a0(t.g, t.A, lr.ray, ph).exit_a0;
    row.exit_a1 = cplx(0, 0);
  }
  if (opts.with_local_sub && opts.engine) {
    LocalSymbol loc = local_dn_symbol(*opts.engine, entry.u, entry.xip, 0);
    row.local_sub = -loc.s0a;
  }
  return row;
}

SymbolTable symbol_table(const CoefficientTriple& t, const Chart& chart,
                         const BoundaryPatch& patch,
                         const std::vector<BoundaryCovector>& entries,
                         const SymbolTableOpts& opts) {
  SymbolTable tab;
  tab.rows.reserve(entries.size());
  for (const auto& e : entries)
    tab.rows.push_back(semiglobal_symbol_data(t, chart, patch, e, opts));
  return tab;
}

std::string symbol_table_csv(const SymbolTable& t, const std::string& header) {
  std::ostringstream os;
  os << header;
  if (t.rows.empty()) return os.str();
  const int np = int(t.rows.front().entry.u.size());
  for (int i = 0; i < np; ++i) os << "entry_u" << i << ",";
  for (int i = 0; i < np; ++i) os << "entry_xi" << i << ",";
  os << "xi_n_entry,xi_n_exit,lambda0,local_sub_re,local_sub_im,"
     << "exit_a0_re,exit_a0_im,exit_a1_re,exit_a1_im,s_exit,status,conjugate\n";
  for (const auto& r : t.rows) {
    for (int i = 0; i < np; ++i) os << fmt_g17(r.entry.u[i]) << ",";
    for (int i = 0; i < np; ++i) os << fmt_g17(r.entry.xip[i]) << ",";
    os << fmt_g17(r.xi_n_entry) << "," << fmt_g17(r.xi_n_exit) << "," << fmt_g17(r.lambda0)
       << "," << fmt_g17(r.local_sub.real()) << "," << fmt_g17(r.local_sub.imag()) << ","
       << fmt_g17(r.exit_a0.real()) << "," << fmt_g17(r.exit_a0.imag()) << ","
       << fmt_g17(r.exit_a1.real()) << "," << fmt_g17(r.exit_a1.imag()) << ","
       << fmt_g17(r.s_exit) << "," << to_string(r.status) << "," << (r.conjugate_flag ? 1 : 0)
       << "\n";
  }
  return os.str();
}

ReflectData reflect_initial_data(const MetricField& g, const BoundaryPatch& patch, const Vec& y_u,
                                 const Vec& p_exit, cplx a0_exit, cplx a1_exit) {
  Vec n = patch.unit_inward_normal(g, y_u);
  Vec x = patch.emb(y_u);
  Vec nflat = g.lower(x) * n;
  double c = p_exit.dot(n);
  if (std::abs(c) < 1e-10) throw NumericsError("reflect: tangential exit");
  ReflectData out;
  out.p_ref = p_exit - 2.0 * c * nflat;
  out.a0_ref = -a0_exit;
  out.a1_ref = -a1_exit;
  return out;
}

}  // namespace nullray
