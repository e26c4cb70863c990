// Light ray transforms: quadrature of functions (L0) and one-forms paired with
// the velocity (L1) along lens-table geodesics.
#pragma once

#include "nullray/lens.hpp"

namespace nullray {

struct TransformRow {
  cplx value{0.0, 0.0};
  double err_est = 0;
  bool ok = false;
};

struct TransformTable {
  std::vector<TransformRow> rows;
  std::string kind;  // "L0" | "L1"
};

// Integral of f along the ray's dense output over [0, s_end].
cplx l0_along_ray(const CScalarClosure& f, const RaySolution& ray, double s_end, double tol,
                  double* err_est = nullptr);

// Integral of <A(gamma), gamma_dot> with gamma_dot = g^{-1} p.
cplx l1_along_ray(const MetricField& g, const CVecClosure& A, const RaySolution& ray, double s_end,
                  double tol, double* err_est = nullptr);

TransformTable light_ray_transform_scalar(const CScalarClosure& f, const LensTable& rays,
                                          double tol = 1e-10);
TransformTable light_ray_transform_oneform(const MetricField& g, const CVecClosure& A,
                                           const LensTable& rays, double tol = 1e-10);

std::string transform_table_csv(const LensTable& rays, const TransformTable& t,
                                const std::string& header);

}  // namespace nullray
