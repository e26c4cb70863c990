// Boundary-adapted constructions: tangential projection, lightlike lifts,
// semigeodesic coordinate charts and ray-parameter normalization against the
// orientation field Z.
#pragma once

#include "nullray/null_flow.hpp"

namespace nullray {

// Explicitly parameterized lateral-boundary patch (interval segments for flat
// charts, angle parameterization for the disk). No implicit meshing.
struct BoundaryPatch {
  int dim = 0;      // chart dimension
  int nparams = 0;  // dim - 1
  std::vector<std::array<double, 2>> param_box;
  std::function<Vec(const Vec&)> emb;                 // u -> chart point on {rho = 0}
  std::function<Mat(const Vec&)> demb;                // dim x nparams tangent frame
  std::function<std::vector<Mat>(const Vec&)> d2emb;  // per chart comp c: (i,j) = d_i d_j emb^c
  std::function<Vec(const Vec&)> inward;              // inward-pointing chart direction
  std::function<Vec(const Vec&)> params_of;           // boundary chart point -> u

  // g-unit inward normal vector (spacelike) orthogonal to the tangent frame.
  Vec unit_inward_normal(const MetricField& g, const Vec& u) const;
  Mat induced_metric(const MetricField& g, const Vec& u) const;  // nparams x nparams, lower

  // Plane {x^axis = offset} with inward direction inward_sign * e_axis.
  static BoundaryPatch flat(int dim, int normal_axis,
                            std::vector<std::array<double, 2>> param_box, double offset = 0.0,
                            double inward_sign = 1.0);
  static BoundaryPatch cylinder_disk(std::array<double, 2> t_range);  // dim 3, u = (t, angle)
};

enum class Orientation { Future, Past };

// Tangential covector on the boundary. Orientation follows the covector
// convention: future-pointing when <xi', Z> < 0 (the covector of a vector with
// positive time component), Z = d/dx^{time_axis}.
struct BoundaryCovector {
  Vec u;    // patch parameters
  Vec xip;  // tangential covector components in the patch parameter basis
  Orientation orientation = Orientation::Future;
};

struct NotTimelikeError : NumericsError {
  double margin;
  explicit NotTimelikeError(double m)
      : NumericsError("boundary covector is not timelike (radicand margin " + fmt_g17(m) + ")"),
        margin(m) {}
};

// xi_n(x', xi') = sqrt(-g^{ab} xi'_a xi'_b) with the induced boundary metric.
double xi_normal(const MetricField& g, const BoundaryPatch& patch, const Vec& u, const Vec& xip,
                 double tol = 1e-12);

BoundaryCovector tangential_project(const MetricField& g, const Chart& chart,
                                    const BoundaryPatch& patch, const PointCovector& pc,
                                    double boundary_tol = 1e-10);

enum class LiftSide { Interior, Exterior };

// Completes a timelike tangential covector to a lightlike chart covector with
// normal component +-xi_n (interior lift points into M).
PointCovector lightlike_lift(const MetricField& g, const BoundaryPatch& patch,
                             const BoundaryCovector& b, LiftSide side);

// Semigeodesic normal coordinates (u, r): Psi(u, r) follows the unit-speed
// geodesic normal to the boundary. In these coordinates g_{nj} = delta_{nj}.
class SemigeodesicChart {
 public:
  SemigeodesicChart(MetricField g, BoundaryPatch patch, double eps, double rk_tol = 1e-12);

  Vec to_chart(const Vec& ur) const;        // Psi
  Mat jacobian(const Vec& ur) const;        // dPsi, dim x dim
  Mat metric_sg(const Vec& ur) const;       // pullback metric components in (u, r)
  Vec from_chart(const Vec& x, Vec guess_ur, double tol = 1e-12) const;
  MetricField as_metric_field(double h_fd = 1e-3) const;

  double eps() const { return eps_; }
  const BoundaryPatch& patch() const { return patch_; }

  // Max deviation of the g_{nj} = delta_{nj} block over a verification grid.
  double block_deviation(int nu, int nr) const;

 private:
  struct Shot { Vec x; Vec p; Mat var; };
  Shot shoot(const Vec& u, double r) const;

  MetricField g_;
  BoundaryPatch patch_;
  double eps_;
  double rk_tol_;
};

// Geodesic of arbitrary causal character from (x0, v0), Hamiltonian form,
// fixed adaptive tolerance; returns states plus variational data.
RaySolution integrate_geodesic(const MetricField& g, const Vec& x0, const Vec& v0, double s_end,
                               double rk_tol = 1e-12);

// Rescales parameter and momenta so g(gamma_dot(0), Z) = -+1 for future/past
// runs; the path is unchanged as a point set.
RaySolution normalize_ray_parameter(const MetricField& g, int time_axis, const RaySolution& ray,
                                    double tol = 1e-12);

}  // namespace nullray
