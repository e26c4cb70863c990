#include "nullray/ray_transforms.hpp"

#include <sstream>

namespace nullray {

cplx l0_along_ray(const CScalarClosure& f, const RaySolution& ray, double s_end, double tol,
                  double* err_est) {
  auto integrand = [&](double s) -> cplx { return f(ray.eval(s).x); };
  auto [v, e] = integrate_adaptive(integrand, 0.0, s_end, tol);
  if (err_est) *err_est = e;
  return v;
}

cplx l1_along_ray(const MetricField& g, const CVecClosure& A, const RaySolution& ray, double s_end,
                  double tol, double* err_est) {
  auto integrand = [&](double s) -> cplx {
    RayState st = ray.eval(s);
    Vec v = g.upper(st.x) * st.p;
    return A(st.x).dot(v.cast<cplx>());
  };
  auto [v, e] = integrate_adaptive(integrand, 0.0, s_end, tol);
  if (err_est) *err_est = e;
  return v;
}

namespace {
TransformTable run_table(const LensTable& rays, double tol,
                         const std::function<cplx(const LensRecord&, double*)>& one) {
  TransformTable t;
  t.rows.reserve(rays.rows.size());
  for (const auto& r : rays.rows) {
    TransformRow row;
    if (r.status == LensStatus::Exited && !r.ray.samples.empty()) {
      double err = 0;
      row.value = one(r, &err);
      row.err_est = err;
      row.ok = std::isfinite(row.value.real()) && std::isfinite(row.value.imag()) &&
               err <= std::max(tol * 100, 1e-8);
    }
    t.rows.push_back(row);
  }
  return t;
}
}  // namespace

TransformTable light_ray_transform_scalar(const CScalarClosure& f, const LensTable& rays,
                                          double tol) {
  auto t = run_table(rays, tol, [&](const LensRecord& r, double* e) {
    return l0_along_ray(f, r.ray, r.s_exit, tol, e);
  });
  t.kind = "L0";
  return t;
}

TransformTable light_ray_transform_oneform(const MetricField& g, const CVecClosure& A,
                                           const LensTable& rays, double tol) {
  auto t = run_table(rays, tol, [&](const LensRecord& r, double* e) {
    return l1_along_ray(g, A, r.ray, r.s_exit, tol, e);
  });
  t.kind = "L1";
  return t;
}

std::string transform_table_csv(const LensTable& rays, const TransformTable& t,
                                const std::string& header) {
  std::ostringstream os;
  os << header;
  const int np = rays.rows.empty() ? 0 : int(rays.rows.front().entry.u.size());
  for (int i = 0; i < np; ++i) os << "entry_u" << i << ",";
  for (int i = 0; i < np; ++i) os << "entry_xi" << i << ",";
  os << "value_re,value_im,err_est,ok\n";
  for (size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = rays.rows[k];
    const auto& v = t.rows[k];
    for (int i = 0; i < np; ++i) os << fmt_g17(r.entry.u[i]) << ",";
    for (int i = 0; i < np; ++i) os << fmt_g17(r.entry.xip[i]) << ",";
    os << fmt_g17(v.value.real()) << "," << fmt_g17(v.value.imag()) << ","
       << fmt_g17(v.err_est) << "," << (v.ok ? 1 : 0) << "\n";
  }
  return os.str();
}

}  // namespace nullray
