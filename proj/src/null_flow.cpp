#include "nullray/null_flow.hpp"

#include <cmath>
#include <sstream>

namespace nullray {

const char* to_string(RayStatus s) {
  switch (s) {
    case RayStatus::Exited: return "exited";
    case RayStatus::RanOut: return "ran_out";
    case RayStatus::TangencySuspected: return "tangency_suspected";
  }
  return "?";
}

double hamiltonian(const MetricField& g, const Vec& x, const Vec& p) {
  return 0.5 * p.dot(g.upper(x) * p);
}

namespace {

struct Rhs {
  const MetricField& g;
  bool with_variational;
  int d;

  // y layout: [x (d), p (d), M (2d*2d) column-major when variational]
  Vec operator()(const Vec& y) const {
    Vec x = y.segment(0, d);
    Vec p = y.segment(d, d);
    Mat G = g.upper(x);
    auto dG = g.d_upper(x);
    Vec out(y.size());
    out.segment(0, d) = G * p;
    for (int k = 0; k < d; ++k) out[d + k] = -0.5 * p.dot(dG[k] * p);
    if (with_variational) {
      // DF = [ dxdot/dx  dxdot/dp ; dpdot/dx  dpdot/dp ]
      Mat DF(2 * d, 2 * d);
      auto ddG = g.dd_upper(x);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          DF(i, j) = (dG[j] * p)(i);              // d xdot^i / d x^j
          DF(i, d + j) = G(i, j);                 // d xdot^i / d p_j
          DF(d + i, j) = -0.5 * p.dot(ddG[j][i] * p);  // d pdot_i / d x^j
          DF(d + i, d + j) = -(dG[i] * p)(j);     // d pdot_i / d p_j
        }
      Eigen::Map<const Mat> M(y.data() + 2 * d, 2 * d, 2 * d);
      Mat Md = DF * M;
      out.segment(2 * d, 4 * d * d) = Eigen::Map<const Vec>(Md.data(), 4 * d * d);
    }
    return out;
  }
};

// One Dormand-Prince 5(4) step; returns (y5, err_norm, y_mid_unused)
struct DP45 {
  template <typename F>
  static std::pair<Vec, double> step(const F& f, const Vec& y, double h, const Vec& k1) {
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    Vec k2 = f(y + h * a21 * k1);
    Vec k3 = f(y + h * (a31 * k1 + a32 * k2));
    Vec k4 = f(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    Vec k5 = f(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    Vec k6 = f(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Vec y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    Vec k7 = f(y5);
    Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    return {y5, err.cwiseAbs().maxCoeff()};
  }
};

// Exact null-shell projection: rescale the spatial momentum block so that
// H(x, p) = 0, choosing the quadratic root nearest 1.
bool project_to_shell(const MetricField& g, int time_axis, const Vec& x, Vec& p) {
  const int d = g.dim();
  Mat G = g.upper(x);
  double a0 = G(time_axis, time_axis) * p[time_axis] * p[time_axis];
  double cc = 0, k2 = 0;
  for (int j = 0; j < d; ++j) {
    if (j == time_axis) continue;
    cc += 2.0 * G(time_axis, j) * p[time_axis] * p[j];
    for (int k = 0; k < d; ++k) {
      if (k == time_axis) continue;
      k2 += G(j, k) * p[j] * p[k];
    }
  }
  if (std::abs(k2) < 1e-300) return false;
  double disc = cc * cc - 4.0 * k2 * a0;
  if (disc < 0) return false;
  double r1 = (-cc + std::sqrt(disc)) / (2.0 * k2);
  double r2 = (-cc - std::sqrt(disc)) / (2.0 * k2);
  double c = (std::abs(r1 - 1.0) < std::abs(r2 - 1.0)) ? r1 : r2;
  if (std::abs(c - 1.0) > 0.1) return false;
  for (int j = 0; j < d; ++j)
    if (j != time_axis) p[j] *= c;
  return true;
}

}  // namespace

RayState RaySolution::eval(double s) const {
  if (samples.empty()) throw NumericsError("empty ray");
  if (s <= samples.front().s) return samples.front();
  if (s >= samples.back().s) return samples.back();
  size_t lo = 0, hi = samples.size() - 1;
  while (hi - lo > 1) {
    size_t mid = (lo + hi) / 2;
    if (samples[mid].s <= s) lo = mid;
    else hi = mid;
  }
  const auto& A = samples[lo];
  const auto& B = samples[hi];
  double h = B.s - A.s;
  double t = (s - A.s) / h;
  double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
  double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
  RayState out;
  out.s = s;
  out.x = h00 * A.x + h10 * h * xdot[lo] + h01 * B.x + h11 * h * xdot[hi];
  out.p = h00 * A.p + h10 * h * pdot[lo] + h01 * B.p + h11 * h * pdot[hi];
  return out;
}

Vec RaySolution::eval_xdot(double s) const {
  if (s <= samples.front().s) return xdot.front();
  if (s >= samples.back().s) return xdot.back();
  size_t lo = 0, hi = samples.size() - 1;
  while (hi - lo > 1) {
    size_t mid = (lo + hi) / 2;
    if (samples[mid].s <= s) lo = mid;
    else hi = mid;
  }
  const auto& A = samples[lo];
  const auto& B = samples[hi];
  double h = B.s - A.s;
  double t = (s - A.s) / h;
  // derivative of the Hermite position interpolant
  double d00 = (6 * t * t - 6 * t) / h, d10 = 3 * t * t - 4 * t + 1;
  double d01 = (6 * t - 6 * t * t) / h, d11 = 3 * t * t - 2 * t;
  return d00 * A.x + d10 * xdot[lo] + d01 * B.x + d11 * xdot[hi];
}

double RaySolution::max_shell_residual(const MetricField& g) const {
  double m = 0;
  for (const auto& st : samples) m = std::max(m, std::abs(hamiltonian(g, st.x, st.p)));
  return m;
}

std::vector<RayState> RaySolution::resample_uniform(int n, double s_to) const {
  std::vector<RayState> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(eval(s_to * i / (n - 1.0)));
  return out;
}

RaySolution integrate_bicharacteristic(const MetricField& g, const Chart& chart, const Vec& x0,
                                       const Vec& xi0, IntegrateOpts opts) {
  const int d = g.dim();
  require_finite(x0, "ray x0");
  require_finite(xi0, "ray xi0");
  if (classify(g, x0, xi0, opts.shell_tol) != CausalClass::Lightlike)
    throw NumericsError("integrate_bicharacteristic: initial covector is not lightlike");

  const double diam = chart.diameter();
  double h = opts.step_init > 0 ? opts.step_init : 1e-2 * diam / std::max(1.0, xi0.norm());
  const double max_s = opts.max_s > 0 ? opts.max_s : 10.0 * diam / std::max(1e-12, xi0.norm());
  const double h_min = 1e-14 * max_s;

  Rhs rhs{g, opts.variational, d};
  const int nvar = opts.variational ? 2 * d + 4 * d * d : 2 * d;
  Vec y(nvar);
  y.segment(0, d) = x0;
  y.segment(d, d) = xi0;
  if (opts.variational) {
    Mat I = Mat::Identity(2 * d, 2 * d);
    y.segment(2 * d, 4 * d * d) = Eigen::Map<const Vec>(I.data(), 4 * d * d);
  }

  RaySolution sol;
  double s = 0;
  auto push = [&](double sv, const Vec& yv) {
    RayState st;
    st.s = sv;
    st.x = yv.segment(0, d);
    st.p = yv.segment(d, d);
    Vec f = rhs(yv);
    sol.samples.push_back(st);
    sol.xdot.push_back(f.segment(0, d));
    sol.pdot.push_back(f.segment(d, d));
    if (opts.variational)
      sol.variational.push_back(Eigen::Map<const Mat>(yv.data() + 2 * d, 2 * d, 2 * d));
  };
  push(0.0, y);

  bool inside_seen = false;
  int reject_streak = 0;
  while (s < max_s) {
    Vec k1 = rhs(y);
    auto [ynew, err] = DP45::step(rhs, y, h, k1);
    double tol = opts.rk_tol * (1.0 + y.segment(0, 2 * d).cwiseAbs().maxCoeff());
    if (err > tol && h > h_min) {
      h = std::max(h_min, h * std::clamp(0.9 * std::pow(tol / (err + 1e-300), 0.2), 0.2, 1.0));
      if (++reject_streak > 60) break;
      continue;
    }
    reject_streak = 0;
    if (opts.renormalize_shell) {
      Vec p = ynew.segment(d, d);
      if (!project_to_shell(g, chart.time_axis, ynew.segment(0, d), p))
        throw NumericsError("null-shell renormalization failed (far off the cone)");
      ynew.segment(d, d) = p;
    }
    s += h;
    y = ynew;
    push(s, y);
    h = std::min(h * std::clamp(0.9 * std::pow(tol / (err + 1e-300), 0.2), 0.2, 5.0), max_s - s);
    if (h <= 0) break;

    double r = chart.rho(y.segment(0, d));
    if (!inside_seen && r > 1e-8) inside_seen = true;
    bool left_box = !chart.contains(y.segment(0, d), 1e-9);
    if ((inside_seen && r <= 0.0) || left_box) break;
  }

  auto exit = detect_boundary_exit(sol, chart, opts.trans_tol);
  if (exit) {
    sol.exit = exit;
    sol.status = exit->transversality < opts.trans_tol ? RayStatus::TangencySuspected
                                                       : RayStatus::Exited;
  } else {
    sol.status = RayStatus::RanOut;
  }
  return sol;
}

std::optional<ExitRecord> detect_boundary_exit(const RaySolution& ray, const Chart& chart,
                                               double trans_tol) {
  if (ray.samples.size() < 2) return std::nullopt;
  // first index (past the entry collar) where rho crosses to <= 0
  size_t idx = 0;
  bool inside_seen = false;
  bool found = false;
  for (size_t i = 1; i < ray.samples.size(); ++i) {
    double r = chart.rho(ray.samples[i].x);
    if (!inside_seen) {
      if (r > 1e-8) inside_seen = true;
      continue;
    }
    if (r <= 0.0) {
      idx = i;
      found = true;
      break;
    }
  }
  if (!found) return std::nullopt;
  double slo = ray.samples[idx - 1].s, shi = ray.samples[idx].s;
  auto rho_at = [&](double s) { return chart.rho(ray.eval(s).x); };
  // bisection to bracket tightly, then Newton on the dense output
  for (int it = 0; it < 60 && (shi - slo) > 1e-15 * std::max(1.0, shi); ++it) {
    double mid = 0.5 * (slo + shi);
    if (rho_at(mid) > 0) slo = mid;
    else shi = mid;
  }
  double s_star = 0.5 * (slo + shi);
  for (int it = 0; it < 8; ++it) {
    RayState st = ray.eval(s_star);
    double r = chart.rho(st.x);
    if (std::abs(r) <= 1e-12) break;
    Vec dr = chart.drho(st.x);
    double drds = dr.dot(ray.eval_xdot(s_star));
    if (std::abs(drds) < 1e-300) break;
    double step = -r / drds;
    double s_next = s_star + step;
    if (s_next < slo - (shi - slo) || s_next > shi + (shi - slo)) break;
    s_star = s_next;
  }
  RayState st = ray.eval(s_star);
  if (std::abs(chart.rho(st.x)) > 1e-10) return std::nullopt;
  ExitRecord rec;
  rec.s_exit = s_star;
  rec.y = st.x;
  rec.eta = st.p;
  Vec dr = chart.drho(st.x);
  Vec xd = ray.eval_xdot(s_star);
  rec.transversality = std::abs(dr.dot(xd)) / (dr.norm() * xd.norm() + 1e-300);
  (void)trans_tol;
  return rec;
}

std::string ray_to_csv(const MetricField& g, const RaySolution& ray, const std::string& header) {
  std::ostringstream os;
  os << header;
  os << "s";
  for (int i = 0; i < g.dim(); ++i) os << ",x" << i;
  for (int i = 0; i < g.dim(); ++i) os << ",p" << i;
  os << ",H\n";
  for (const auto& st : ray.samples) {
    os << fmt_g17(st.s);
    for (int i = 0; i < g.dim(); ++i) os << "," << fmt_g17(st.x[i]);
    for (int i = 0; i < g.dim(); ++i) os << "," << fmt_g17(st.p[i]);
    os << "," << fmt_g17(hamiltonian(g, st.x, st.p)) << "\n";
  }
  return os.str();
}

}  // namespace nullray
