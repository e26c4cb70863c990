// Null bicharacteristics of H = 1/2 g^{jk} p_j p_k: adaptive integration with
// variational (derivative-of-flow) data and boundary exit detection.
#pragma once

#include "nullray/geometry.hpp"

#include <optional>

namespace nullray {

struct RayState {
  double s = 0;
  Vec x;
  Vec p;
};

enum class RayStatus { Exited, RanOut, TangencySuspected };
const char* to_string(RayStatus s);

struct ExitRecord {
  double s_exit = 0;
  Vec y;    // chart point on {rho = 0}
  Vec eta;  // momentum covector at exit
  double transversality = 0;  // |<drho, xdot>| / (|drho| |xdot|)
};

struct IntegrateOpts {
  double step_init = 0;      // 0: 1e-2 of chart diameter
  double shell_tol = 1e-9;
  double max_s = 0;          // 0: 10x chart diameter
  double rk_tol = 1e-10;
  double trans_tol = 1e-4;
  bool variational = true;
  bool renormalize_shell = true;
};

class RaySolution {
 public:
  std::vector<RayState> samples;
  std::vector<Vec> xdot;             // dx/ds at samples (for dense output)
  std::vector<Vec> pdot;
  std::vector<Mat> variational;      // d(x,p)/d(x0,p0), per sample
  std::optional<ExitRecord> exit;
  RayStatus status = RayStatus::RanOut;

  double s_end() const { return samples.empty() ? 0.0 : samples.back().s; }
  // Cubic Hermite dense output between stored samples.
  RayState eval(double s) const;
  Vec eval_xdot(double s) const;
  // max |H| over samples
  double max_shell_residual(const MetricField& g) const;
  std::vector<RayState> resample_uniform(int n, double s_to) const;
};

double hamiltonian(const MetricField& g, const Vec& x, const Vec& p);

// Integrates the Hamilton equations xdot = g^{-1} p, pdot_k = -1/2 d_k g^{ij} p_i p_j
// with embedded RK45, projecting p back to the null shell after each accepted
// step (spatial rescale; exact root of the quadratic in the scale factor).
// Requires classify(x0, xi0) == lightlike within shell_tol.
RaySolution integrate_bicharacteristic(const MetricField& g, const Chart& chart, const Vec& x0,
                                       const Vec& xi0, IntegrateOpts opts = {});

// Locates rho(x(s)) = 0 on the stored dense output (bisection + Newton, |rho| <= 1e-10)
// and verifies transversality against trans_tol. Returns nullopt when the path
// never crosses the lateral boundary.
std::optional<ExitRecord> detect_boundary_exit(const RaySolution& ray, const Chart& chart,
                                               double trans_tol = 1e-4);

// CSV export: columns s, x^0..x^n, p_0..p_n, H.
std::string ray_to_csv(const MetricField& g, const RaySolution& ray, const std::string& header);

}  // namespace nullray
