// Phase and amplitude transport along null bicharacteristics: phase Hessian
// evolution (matrix Riccati), box_g(phi) along rays, leading amplitude via the
// integrating factor, the order -1 corrector via ray-bundle stencils, local DN
// symbol values from boundary jets, and semiglobal symbol rows.
#pragma once

#include "nullray/lens.hpp"

namespace nullray {

// --------------------------------------------------------------------------
// Phase transport

// Initial phase Hessian at a boundary entry. The boundary phase is linear in
// the patch parameters, so the tangential block satisfies
//   E^T W E = - sum_c p_c d2emb^c,
// and differentiating the eikonal identity g^{jk}(x) d_j phi d_k phi = 0 in a
// direction w gives  (d_w g^{jk}) p_j p_k + 2 v . (W w) = 0 with v = g^{-1} p.
// Taking w over the frame {E_1..E_{d-1}, v} closes the remaining rows.
Mat initial_phase_hessian(const MetricField& g, const BoundaryPatch& patch, const Vec& u,
                          const Vec& p);

struct PhaseTransport {
  std::vector<double> s;       // uniform grid on [0, s_end]
  std::vector<Mat> W;          // phase Hessian at grid nodes
  std::vector<double> boxphi;  // box_g(phi) along the ray
  std::vector<double> dboxphi_ds;
  bool valid = true;
  int blowup_index = -1;  // first node past a conjugate-point blow-up
};

// Integrates  dW/ds = -(H_xx + H_xp W + W H_px + W H_pp W)  along the ray's
// dense output with RK4 substeps; H = 1/2 g^{jk} p_j p_k.
PhaseTransport phase_hessian_evolution(const MetricField& g, const RaySolution& ray,
                                       const Mat& W0, double s_end, int n_samp,
                                       double blowup_norm = 1e8);

// box_g(phi) = g^{jk} W_jk + (d_j g^{jk}) p_k + (d_j log sqrt|det g|) g^{jk} p_k.
double boxphi_value(const MetricField& g, const Vec& x, const Vec& p, const Mat& W);

// --------------------------------------------------------------------------
// Amplitude transport

struct AmplitudeTransport {
  std::vector<double> s;
  std::vector<cplx> a0;
  std::vector<cplx> da0_ds;          // exact derivative a0 * (-1/2 boxphi + i <A, xdot>)
  std::vector<double> half_int_box;  // 1/2 int_0^s boxphi
  std::vector<cplx> int_iA;          // i int_0^s <A, gamma_dot>
  cplx exit_a0{1.0, 0.0};
  bool valid = true;
};

// a0(s) = exp(-1/2 int boxphi) exp(i int <A, gamma_dot>) on the phase grid.
AmplitudeTransport transport_a0(const MetricField& g, const CVecClosure& A, const RaySolution& ray,
                                const PhaseTransport& ph);

// Geometric spreading from the ray-tube Jacobian J(s) = det[xdot, dx/du_i] of
// the constant-covector entry fan. J stays finite through caustics, where the
// Riccati form of box_g(phi) has poles; fold crossings are counted by sign
// changes of J. On fold-free stretches, log(J(s)/J(0)) = int_0^s box_g(phi).
struct SpreadingTransport {
  std::vector<double> s;
  std::vector<double> J;  // normalized to J(0) = 1
  int folds = 0;
  double spread_exit = 1.0;  // |J(0)/J(end)|^{1/2}
  cplx maslov_factor{1.0, 0.0};  // e^{-i pi/2 per fold}
};

SpreadingTransport spreading_transport(const MetricField& g, const BoundaryPatch& patch,
                                       const BoundaryCovector& entry, const Vec& p_run,
                                       const RaySolution& ray, double s_end, int n_samp);

// Leading amplitude at the exit: spreading * fold factor * exp(i int <A, xdot>).
cplx exit_a0_factor(const MetricField& g, const CVecClosure& A, const RaySolution& ray,
                    const SpreadingTransport& sp, double s_end);

// --------------------------------------------------------------------------
// Ray bundles for transverse derivatives of a0

struct BundleOpts {
  double h_sten = 0.015;  // stencil spacing in the patch parameters
  int n_samp = 600;
  bool richardson = true;  // second pass at h/2, Richardson-extrapolated Hessians
  IntegrateOpts ray;
  std::function<const BoundaryPatch*(const Vec& y)> patch_for_exit;
};

class GOBundle {
 public:
  // Builds the central lens run plus a 3x3 stencil of entry offsets (two
  // spacings when richardson is on), each with its own phase/amplitude data on
  // a common uniform s-grid.
  GOBundle(const MetricField& g, const CVecClosure& A, const Chart& chart,
           const BoundaryPatch& patch, const BoundaryCovector& entry, const BundleOpts& opts);

  bool valid() const { return valid_; }
  const LensRecord& central() const { return central_; }
  const PhaseTransport& central_phase() const;
  const AmplitudeTransport& central_amp() const;
  const std::vector<double>& sgrid() const { return sgrid_; }

  // (1/a0) P_{g,A,0} a0 at the central grid nodes, via stencil-differenced
  // spacetime derivatives of a0.
  std::vector<cplx> corrector_base(const CoefficientTriple& t) const;

  // a1(s) = (i a0 / 2) int_0^s [ corrector_base + q ] and its exit value.
  AmplitudeTransport transport_a1(const CoefficientTriple& t) const;
  AmplitudeTransport transport_a1_with(const std::vector<cplx>& corrector_plus_q) const;

  // transverse FD of the momentum across the stencil; oracle for the Riccati W
  Mat momentum_gradient_fd(int node) const;

 private:
  struct Column {
    RaySolution ray;
    PhaseTransport phase;
    AmplitudeTransport amp;
    Vec offset;  // patch-parameter offset of the entry
  };
  const Column& col_of(int i, int j, int set) const;
  cplx corrector_at(int node, int set /*0: h, 1: h/2*/, const CoefficientTriple& t) const;

  const MetricField* g_ = nullptr;
  LensRecord central_;
  std::vector<double> sgrid_;
  std::vector<Column> cols_;  // [0] central, then the ring at h, then at h/2
  int ring_size_ = 8;
  double h_ = 0;
  bool rich_ = true;
  bool valid_ = false;
};

// --------------------------------------------------------------------------
// Local DN symbol from semigeodesic boundary jets

// Boundary jets of a triple expressed in semigeodesic normal form (tangential
// block + unit normal direction). Indices a,b run over the boundary directions.
struct SGBoundaryJets {
  Mat gu0, gu1, gu2;  // g^{ab}, d_n g^{ab}, d_n^2 g^{ab}
  Mat gl0;            // g_ab
  double det0 = -1, det1 = 0, det2 = 0;  // det g and normal derivatives
  CVec Atan;          // A_a
  cplx An{0, 0};      // A_n
  CVec dAtan_n;       // d_n A_a
  cplx dAn_n{0, 0};   // d_n A_n
  cplx q0{0, 0};
};

// Triple in semigeodesic coordinates (u, r): full metric closure must have the
// block form g_ab dx^a dx^b + dr^2 near r = 0.
struct SGTriple {
  int dim = 0;
  MatClosure g_sg;      // full metric components in SG coordinates
  CVecClosure A_sg;     // covector components in SG coordinates
  CScalarClosure q_sg;
  std::function<SGBoundaryJets(const Vec&)> analytic_jets;  // optional, exact jets
};

class SGJetEngine {
 public:
  SGJetEngine(SGTriple t, double h_jet = 0.02, double h_tan = 1e-4);
  SGBoundaryJets jets(const Vec& xp) const;
  const SGTriple& triple() const { return t_; }
  double h_tan() const { return h_tan_; }
  int dim() const { return t_.dim; }

 private:
  SGTriple t_;
  double h_jet_, h_tan_;
};

struct LocalSymbol {
  double xin = 0;
  cplx principal{0, 0};  // -i xi_n
  cplx s0a{0, 0};        // (d_n - i A_n) a0 at the boundary
  cplx s1a{0, 0};        // (d_n - i A_n) a1 at the boundary (order >= 1 only)
  // DN response value: -( i lambda xin + s0a + s1a / lambda ) e^{i lambda phase}
};

// Solves the boundary-restricted transport equations for the amplitude jets.
// order 0 fills xin/principal/s0a; order 1 adds s1a. The normal derivative of
// box_g(phi) needed at order 1 comes from a short interior ray with the
// Riccati evolution (see implementation notes).
LocalSymbol local_dn_symbol(const SGJetEngine& eng, const Vec& xp, const Vec& xip, int order);

// --------------------------------------------------------------------------
// Semiglobal symbol data

struct SymbolRow {
  BoundaryCovector entry;
  double xi_n_entry = 0, xi_n_exit = 0;
  double lambda0 = 0;  // -4 (xi_n at exit)(xi_n at entry)
  cplx local_sub{0, 0};
  cplx exit_a0{0, 0};  // Jacobian-route spreading x fold factor x exp(i L1 A)
  cplx exit_a1{0, 0};  // fold-free rays only; see conjugate_flag
  double s_exit = 0;
  Vec exit_u, exit_eta;
  LensStatus status = LensStatus::Failed;
  bool conjugate_flag = false;  // fold crossed: a1-level data not valid
  int folds = 0;
  double entry_phase = 0;  // u . xi' at the entry
};

struct SymbolTable {
  std::vector<SymbolRow> rows;
  std::string field_id;
};

struct SymbolTableOpts {
  bool with_a1 = true;
  bool with_local_sub = false;
  const SGJetEngine* engine = nullptr;  // for local_sub
  BundleOpts bundle;
  LensOpts lens;
};

SymbolRow semiglobal_symbol_data(const CoefficientTriple& t, const Chart& chart,
                                 const BoundaryPatch& patch, const BoundaryCovector& entry,
                                 const SymbolTableOpts& opts);

SymbolTable symbol_table(const CoefficientTriple& t, const Chart& chart,
                         const BoundaryPatch& patch,
                         const std::vector<BoundaryCovector>& entries,
                         const SymbolTableOpts& opts);

std::string symbol_table_csv(const SymbolTable& t, const std::string& header);

// --------------------------------------------------------------------------
// Reflection bookkeeping at a transversal exit

struct ReflectData {
  Vec p_ref;    // momentum with the normal covector component flipped
  cplx a0_ref;  // -a0 at the exit
  cplx a1_ref;  // -a1 at the exit
};

ReflectData reflect_initial_data(const MetricField& g, const BoundaryPatch& patch, const Vec& y_u,
                                 const Vec& p_exit, cplx a0_exit, cplx a1_exit);

}  // namespace nullray
