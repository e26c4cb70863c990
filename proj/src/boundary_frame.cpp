#include "nullray/boundary_frame.hpp"

#include <cmath>

namespace nullray {

// ---------------------------------------------------------------------------
// BoundaryPatch

Vec BoundaryPatch::unit_inward_normal(const MetricField& g, const Vec& u) const {
  Mat E = demb(u);
  Vec x = emb(u);
  Mat gl = g.lower(x);
  Mat Gi = (E.transpose() * gl * E).inverse();
  Vec n0 = inward(u);
  Vec n = n0 - E * (Gi * (E.transpose() * gl * n0));
  double nn = n.dot(gl * n);
  if (nn <= 0) throw NumericsError("boundary normal is not spacelike (patch not timelike?)");
  return n / std::sqrt(nn);
}

Mat BoundaryPatch::induced_metric(const MetricField& g, const Vec& u) const {
  Mat E = demb(u);
  return E.transpose() * g.lower(emb(u)) * E;
}

BoundaryPatch BoundaryPatch::flat(int dim, int normal_axis,
                                  std::vector<std::array<double, 2>> param_box, double offset,
                                  double inward_sign) {
  BoundaryPatch p;
  p.dim = dim;
  p.nparams = dim - 1;
  p.param_box = std::move(param_box);
  p.emb = [dim, normal_axis, offset](const Vec& u) {
    Vec x = Vec::Zero(dim);
    x[normal_axis] = offset;
    int k = 0;
    for (int i = 0; i < dim; ++i)
      if (i != normal_axis) x[i] = u[k++];
    return x;
  };
  p.demb = [dim, normal_axis](const Vec&) {
    Mat E = Mat::Zero(dim, dim - 1);
    int k = 0;
    for (int i = 0; i < dim; ++i)
      if (i != normal_axis) E(i, k++) = 1.0;
    return E;
  };
  p.d2emb = [dim](const Vec&) { return std::vector<Mat>(dim, Mat::Zero(dim - 1, dim - 1)); };
  p.inward = [dim, normal_axis, inward_sign](const Vec&) {
    Vec n = Vec::Zero(dim);
    n[normal_axis] = inward_sign;
    return n;
  };
  p.params_of = [dim, normal_axis](const Vec& x) {
    Vec u(dim - 1);
    int k = 0;
    for (int i = 0; i < dim; ++i)
      if (i != normal_axis) u[k++] = x[i];
    return u;
  };
  return p;
}

BoundaryPatch BoundaryPatch::cylinder_disk(std::array<double, 2> t_range) {
  BoundaryPatch p;
  p.dim = 3;
  p.nparams = 2;
  p.param_box = {t_range, {-3.2, 3.2}};
  p.emb = [](const Vec& u) {
    Vec x(3);
    x << u[0], std::cos(u[1]), std::sin(u[1]);
    return x;
  };
  p.demb = [](const Vec& u) {
    Mat E(3, 2);
    E << 1, 0, 0, -std::sin(u[1]), 0, std::cos(u[1]);
    return E;
  };
  p.d2emb = [](const Vec& u) {
    std::vector<Mat> H(3, Mat::Zero(2, 2));
    H[1](1, 1) = -std::cos(u[1]);
    H[2](1, 1) = -std::sin(u[1]);
    return H;
  };
  p.inward = [](const Vec& u) {
    Vec n(3);
    n << 0, -std::cos(u[1]), -std::sin(u[1]);
    return n;
  };
  p.params_of = [](const Vec& x) {
    Vec u(2);
    u << x[0], std::atan2(x[2], x[1]);
    return u;
  };
  return p;
}

// ---------------------------------------------------------------------------
// Projections and lifts

double xi_normal(const MetricField& g, const BoundaryPatch& patch, const Vec& u, const Vec& xip,
                 double tol) {
  Mat Gi = patch.induced_metric(g, u).inverse();
  double rad = -xip.dot(Gi * xip);
  if (rad <= tol * xip.squaredNorm()) throw NotTimelikeError(rad);
  return std::sqrt(rad);
}

BoundaryCovector tangential_project(const MetricField& g, const Chart& chart,
                                    const BoundaryPatch& patch, const PointCovector& pc,
                                    double boundary_tol) {
  (void)g;  // the metric-orthogonal projection restricts to the tangent frame
  require_finite(pc.x, "project x");
  require_finite(pc.xi, "project xi");
  if (std::abs(chart.rho(pc.x)) > boundary_tol)
    throw NumericsError("tangential_project: point is not on the boundary");
  BoundaryCovector b;
  b.u = patch.params_of(pc.x);
  Mat E = patch.demb(b.u);
  b.xip = E.transpose() * pc.xi;
  // orientation from the value of xi' on Z = d/dx^{time_axis} (tangent to the patch)
  Vec zc = Vec::Zero(chart.dim);
  zc[chart.time_axis] = 1.0;
  Vec z = (E.transpose() * E).ldlt().solve(E.transpose() * zc);
  double v = b.xip.dot(z);
  b.orientation = v < 0 ? Orientation::Future : Orientation::Past;
  return b;
}

PointCovector lightlike_lift(const MetricField& g, const BoundaryPatch& patch,
                             const BoundaryCovector& b, LiftSide side) {
  Vec x = patch.emb(b.u);
  Mat E = patch.demb(b.u);
  Mat gl = g.lower(x);
  Mat Gi = (E.transpose() * gl * E).inverse();
  double xin = xi_normal(g, patch, b.u, b.xip);
  Vec n = patch.unit_inward_normal(g, b.u);
  Vec xi_tan = gl * (E * (Gi * b.xip));
  Vec nflat = gl * n;
  double sgn = (side == LiftSide::Interior) ? 1.0 : -1.0;
  PointCovector out;
  out.x = x;
  out.xi = xi_tan + sgn * xin * nflat;
  return out;
}

// ---------------------------------------------------------------------------
// General geodesic integration (any causal character, no shell projection)

RaySolution integrate_geodesic(const MetricField& g, const Vec& x0, const Vec& v0, double s_end,
                               double rk_tol) {
  const int d = g.dim();
  Vec p0 = g.lower(x0) * v0;
  Chart dummy = Chart::make(
      d, std::vector<std::array<double, 2>>(d, {-1e30, 1e30}),
      [](const Vec&) { return 1.0; }, [d](const Vec&) { return Vec::Zero(d); });
  IntegrateOpts opts;
  opts.rk_tol = rk_tol;
  opts.renormalize_shell = false;
  opts.max_s = s_end;
  opts.step_init = std::max(1e-6, s_end / 64.0);
  // bypass the lightlike precondition by calling the shared machinery directly:
  // reuse integrate_bicharacteristic only for null rays; here run a local loop.
  // Simplest: wrap the covector through the same integrator with shell checks off.
  // integrate_bicharacteristic rejects non-null input, so duplicate the driver:
  RaySolution sol;
  // Reuse by temporary null check bypass: implement directly.
  struct LocalRhs {
    const MetricField& g;
    int d;
    Vec operator()(const Vec& y) const {
      Vec x = y.segment(0, d);
      Vec p = y.segment(d, d);
      Mat G = g.upper(x);
      auto dG = g.d_upper(x);
      Vec out(y.size());
      out.segment(0, d) = G * p;
      for (int k = 0; k < d; ++k) out[d + k] = -0.5 * p.dot(dG[k] * p);
      // variational
      Mat DF(2 * d, 2 * d);
      auto ddG = g.dd_upper(x);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          DF(i, j) = (dG[j] * p)(i);
          DF(i, d + j) = G(i, j);
          DF(d + i, j) = -0.5 * p.dot(ddG[j][i] * p);
          DF(d + i, d + j) = -(dG[i] * p)(j);
        }
      Eigen::Map<const Mat> M(y.data() + 2 * d, 2 * d, 2 * d);
      Mat Md = DF * M;
      out.segment(2 * d, 4 * d * d) = Eigen::Map<const Vec>(Md.data(), 4 * d * d);
      return out;
    }
  } rhs{g, d};

  Vec y(2 * d + 4 * d * d);
  y.segment(0, d) = x0;
  y.segment(d, d) = p0;
  Mat I = Mat::Identity(2 * d, 2 * d);
  y.segment(2 * d, 4 * d * d) = Eigen::Map<const Vec>(I.data(), 4 * d * d);

  auto push = [&](double sv, const Vec& yv) {
    RayState st;
    st.s = sv;
    st.x = yv.segment(0, d);
    st.p = yv.segment(d, d);
    Vec f = rhs(yv);
    sol.samples.push_back(st);
    sol.xdot.push_back(f.segment(0, d));
    sol.pdot.push_back(f.segment(d, d));
    sol.variational.push_back(Eigen::Map<const Mat>(yv.data() + 2 * d, 2 * d, 2 * d));
  };
  push(0.0, y);
  double s = 0, h = std::max(1e-8, s_end / 64.0);
  int guard = 0;
  while (s < s_end && ++guard < 100000) {
    h = std::min(h, s_end - s);
    // embedded RK45 step (same tableau as the null integrator)
    auto stepper = [&](const Vec& yy) { return rhs(yy); };
    Vec k1 = stepper(y);
    // classic half-step error control via step doubling for brevity
    auto rk4 = [&](const Vec& yy, double hh) {
      Vec a = stepper(yy);
      Vec b = stepper(yy + 0.5 * hh * a);
      Vec c = stepper(yy + 0.5 * hh * b);
      Vec e = stepper(yy + hh * c);
      return Vec(yy + hh / 6.0 * (a + 2 * b + 2 * c + e));
    };
    Vec big = rk4(y, h);
    Vec half = rk4(rk4(y, 0.5 * h), 0.5 * h);
    double err = (big - half).segment(0, 2 * d).cwiseAbs().maxCoeff() / 15.0;
    double tol = rk_tol * (1.0 + y.segment(0, 2 * d).cwiseAbs().maxCoeff());
    if (err > tol && h > 1e-13 * s_end) {
      h *= std::clamp(0.9 * std::pow(tol / (err + 1e-300), 0.25), 0.2, 1.0);
      continue;
    }
    y = half + (half - big) / 15.0;  // local extrapolation
    s += h;
    push(s, y);
    h *= std::clamp(0.9 * std::pow(tol / (err + 1e-300), 0.25), 0.2, 4.0);
  }
  sol.status = RayStatus::RanOut;
  return sol;
}

// ---------------------------------------------------------------------------
// SemigeodesicChart

SemigeodesicChart::SemigeodesicChart(MetricField g, BoundaryPatch patch, double eps, double rk_tol)
    : g_(std::move(g)), patch_(std::move(patch)), eps_(eps), rk_tol_(rk_tol) {
  if (eps_ <= 0) throw ConfigError("semigeodesic chart needs eps > 0");
}

SemigeodesicChart::Shot SemigeodesicChart::shoot(const Vec& u, double r) const {
  Vec x0 = patch_.emb(u);
  Vec n = patch_.unit_inward_normal(g_, u);
  if (std::abs(r) < 1e-300) {
    Shot s;
    s.x = x0;
    s.p = g_.lower(x0) * n;
    s.var = Mat::Identity(2 * g_.dim(), 2 * g_.dim());
    return s;
  }
  RaySolution sol = integrate_geodesic(g_, x0, n, r, rk_tol_);
  Shot s;
  RayState st = sol.samples.back();
  s.x = st.x;
  s.p = st.p;
  s.var = sol.variational.back();
  return s;
}

Vec SemigeodesicChart::to_chart(const Vec& ur) const {
  Vec u = ur.head(patch_.nparams);
  return shoot(u, ur[patch_.nparams]).x;
}

Mat SemigeodesicChart::jacobian(const Vec& ur) const {
  const int d = g_.dim();
  const int np = patch_.nparams;
  Vec u = ur.head(np);
  double r = ur[np];
  Shot s = shoot(u, r);
  Mat J(d, d);
  // d Psi / d r = velocity g^{-1} p
  J.col(np) = g_.upper(s.x) * s.p;
  // d Psi / d u_i via the variational matrix chained with d(x0, p0)/du_i (FD)
  Mat dxdx0 = s.var.block(0, 0, d, d);
  Mat dxdp0 = s.var.block(0, d, d, d);
  const double h = 1e-6;
  for (int i = 0; i < np; ++i) {
    Vec up = u, um = u;
    up[i] += h;
    um[i] -= h;
    Vec x0p = patch_.emb(up), x0m = patch_.emb(um);
    Vec p0p = g_.lower(x0p) * patch_.unit_inward_normal(g_, up);
    Vec p0m = g_.lower(x0m) * patch_.unit_inward_normal(g_, um);
    Vec dx0 = (x0p - x0m) / (2 * h);
    Vec dp0 = (p0p - p0m) / (2 * h);
    J.col(i) = dxdx0 * dx0 + dxdp0 * dp0;
  }
  return J;
}

Mat SemigeodesicChart::metric_sg(const Vec& ur) const {
  Mat J = jacobian(ur);
  return J.transpose() * g_.lower(to_chart(ur)) * J;
}

Vec SemigeodesicChart::from_chart(const Vec& x, Vec guess_ur, double tol) const {
  for (int it = 0; it < 50; ++it) {
    Vec fx = to_chart(guess_ur) - x;
    if (fx.norm() <= tol) return guess_ur;
    Mat J = jacobian(guess_ur);
    Vec step = J.colPivHouseholderQr().solve(fx);
    guess_ur -= step;
  }
  throw NumericsError("semigeodesic inversion did not converge");
}

MetricField SemigeodesicChart::as_metric_field(double h_fd) const {
  const SemigeodesicChart* self = this;
  auto gl = [self](const Vec& ur) { return self->metric_sg(ur); };
  return MetricField(g_.dim(), gl, h_fd);
}

double SemigeodesicChart::block_deviation(int nu, int nr) const {
  const int np = patch_.nparams;
  double worst = 0;
  for (int a = 0; a <= nu; ++a) {
    Vec u(np);
    for (int i = 0; i < np; ++i) {
      double t = nu == 0 ? 0.5 : double(a) / nu;
      u[i] = patch_.param_box[i][0] + t * (patch_.param_box[i][1] - patch_.param_box[i][0]);
    }
    for (int b = 0; b <= nr; ++b) {
      Vec ur(np + 1);
      ur.head(np) = u;
      ur[np] = eps_ * b / std::max(1, nr);
      Mat m = metric_sg(ur);
      for (int j = 0; j < np + 1; ++j) {
        double target = (j == np) ? 1.0 : 0.0;
        worst = std::max(worst, std::abs(m(np, j) - target));
      }
    }
  }
  return worst;
}

RaySolution normalize_ray_parameter(const MetricField& g, int time_axis, const RaySolution& ray,
                                    double tol) {
  if (ray.samples.empty()) throw NumericsError("normalize: empty ray");
  double m = ray.samples.front().p[time_axis];  // g(gamma_dot, Z) = p_Z on bicharacteristics
  if (std::abs(m) < tol)
    throw NumericsError("normalize: Z is orthogonal to the initial velocity");
  double c = 1.0 / std::abs(m);
  RaySolution out = ray;
  const int d = g.dim();
  for (size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i].s = ray.samples[i].s / c;
    out.samples[i].p = c * ray.samples[i].p;
    out.xdot[i] = c * ray.xdot[i];
    out.pdot[i] = c * c * ray.pdot[i];
    if (!out.variational.empty()) {
      Mat v = ray.variational[i];
      v.block(0, d, d, d) /= c;
      v.block(d, 0, d, d) *= c;
      out.variational[i] = v;
    }
  }
  if (out.exit) {
    out.exit->s_exit = ray.exit->s_exit / c;
    out.exit->eta = c * ray.exit->eta;
  }
  return out;
}

}  // namespace nullray
