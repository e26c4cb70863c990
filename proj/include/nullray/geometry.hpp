// Coordinate charts, Lorentzian metric fields, coefficient triples (g, A, q),
// pointwise tensor algebra, causal classification and gauge pullbacks.
#pragma once

#include "nullray/core.hpp"

#include <array>
#include <memory>
#include <optional>

namespace nullray {

using ScalarClosure = std::function<double(const Vec&)>;
using CScalarClosure = std::function<cplx(const Vec&)>;
using VecClosure = std::function<Vec(const Vec&)>;
using CVecClosure = std::function<CVec(const Vec&)>;
using MatClosure = std::function<Mat(const Vec&)>;

// A single coordinate chart. rho > 0 in the interior, rho = 0 on the lateral
// boundary; the time axis orients the field Z = d/dx^{time_axis}.
struct Chart {
  int dim = 0;  // spacetime dimension 1+n
  std::vector<std::array<double, 2>> box;
  ScalarClosure rho;
  VecClosure drho;  // gradient of rho; FD of rho when not provided
  int time_axis = 0;

  bool contains(const Vec& x, double slack = 0.0) const;
  double diameter() const;
  static Chart make(int dim, std::vector<std::array<double, 2>> box, ScalarClosure rho,
                    VecClosure drho = nullptr, int time_axis = 0, double h_fd = 1e-6);
};

// Lorentzian metric on a chart, signature (-, +, ..., +). Derivatives come from
// analytic closures when registered, 4th order central differences otherwise.
class MetricField {
 public:
  MetricField() = default;
  MetricField(int dim, MatClosure g_lower, double h_fd = 1e-4);

  // Optional analytic first derivatives: d_lower(x)[i] = d/dx^i g_{jk}(x).
  void set_d_lower(std::function<std::vector<Mat>(const Vec&)> d_lower);

  int dim() const { return dim_; }
  double h_fd() const { return h_fd_; }

  Mat lower(const Vec& x) const;
  Mat upper(const Vec& x) const;
  double det_lower(const Vec& x) const;
  double sqrt_abs_det(const Vec& x) const;

  std::vector<Mat> d_lower(const Vec& x) const;   // [i](j,k) = d_i g_{jk}
  std::vector<Mat> d_upper(const Vec& x) const;   // [i](j,k) = d_i g^{jk}
  // [i][j](k,l) = d_i d_j g^{kl}; symmetric in (i,j).
  std::vector<std::vector<Mat>> dd_upper(const Vec& x) const;
  Vec dlog_sqrt_abs_det(const Vec& x) const;      // gradient of log sqrt|det g|

  // Throws unless eigenvalue signs are (-, +, ..., +) and g_lower * g_upper = I.
  void check_signature(const Vec& x, double tol = 1e-10) const;

 private:
  int dim_ = 0;
  double h_fd_ = 1e-4;
  MatClosure g_lower_;
  std::function<std::vector<Mat>(const Vec&)> d_lower_analytic_;
};

// (g, A, q): a metric, a complex one-form and a complex potential.
struct CoefficientTriple {
  MetricField g;
  CVecClosure A;      // covector components A_j(x)
  CScalarClosure q;
  double h_fd = 1e-4; // step for A/q derivatives

  static CoefficientTriple make(MetricField g, CVecClosure A = nullptr,
                                CScalarClosure q = nullptr);
  CVec A_at(const Vec& x) const;
  cplx q_at(const Vec& x) const;
  CMat dA(const Vec& x) const;  // (i,j) = d_i A_j
};

struct PointCovector {
  Vec x;
  Vec xi;
};

enum class CausalClass { Timelike, Lightlike, Spacelike };
const char* to_string(CausalClass c);

// Sign of g^{jk} xi_j xi_k against +-tol |xi|^2.
CausalClass classify(const MetricField& g, const Vec& x, const Vec& xi, double tol = 1e-9);

Vec raise_index(const MetricField& g, const Vec& x, const Vec& xi);
Vec lower_index(const MetricField& g, const Vec& x, const Vec& v);

// Christoffel symbols; result[i](j,k) = Gamma^i_{jk}.
std::vector<Mat> christoffel(const MetricField& g, const Vec& x);

// Wave operator (1/sqrt|det g|) d_j (sqrt|det g| g^{jk} d_k u) at x.
// The scalar closure is differentiated by finite differences of step h.
double box_g(const MetricField& g, const ScalarClosure& u, const Vec& x, double h = 1e-4);
cplx box_g(const MetricField& g, const CScalarClosure& u, const Vec& x, double h = 1e-4);

// A diffeomorphism of the chart with inverse and Jacobian closures.
struct Diffeo {
  VecClosure map;       // Phi
  VecClosure inverse;   // Phi^{-1}
  MatClosure jacobian;  // (i,j) = d Phi^i / d x^j
};

// Pullbacks (Phi*g, Phi*A, Phi*q). Phi must fix {rho = 0} pointwise; checked at
// sample points to tol.
CoefficientTriple pullback_triple(const CoefficientTriple& t, const Diffeo& phi,
                                  const Chart& chart,
                                  const std::vector<Vec>& boundary_samples,
                                  double tol = 1e-10);

// Conformal/gauge change (e^{-2 phi} g, A - d psi, e^{2 phi}(q - q_phi)) with
// q_phi = c box_g(phi) - c^2 g^{jk} d_j phi d_k phi,  c = (dim - 2)/2,
// so that P_{g,A,q} u = 0 iff P of the transformed triple annihilates
// e^{c phi} e^{-i psi} u. See tests/test_geometry.cpp for the direct operator
// identity check fixing the exponent.
CoefficientTriple conformal_transform(const CoefficientTriple& t, const ScalarClosure& phi,
                                      const ScalarClosure& psi, double h = 1e-4);

// Full operator P_{g,A,q} applied to a complex closure at x (FD derivatives);
// used by oracle tests and the amplitude corrector.
cplx apply_P(const CoefficientTriple& t, const CScalarClosure& u, const Vec& x, double h = 1e-4);

// Registered metric families ("minkowski", "speed-profile", "conformal-minkowski",
// "sg-poly", ...) are constructed in scenario.cpp.

}  // namespace nullray
