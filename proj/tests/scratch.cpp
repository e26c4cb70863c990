#include "nullray/geo_optics.hpp"
#include "nullray/ray_transforms.hpp"
#include <cstdio>
#include <cmath>

using namespace nullray;

static MetricField minkowski(int d) {
  MetricField g(d, [d](const Vec&) {
    Mat m = Mat::Identity(d, d);
    m(0, 0) = -1;
    return m;
  });
  g.set_d_lower([d](const Vec&) { return std::vector<Mat>(d, Mat::Zero(d, d)); });
  return g;
}

static Chart disk_chart() {
  return Chart::make(3, {{-6, 6}, {-1.5, 1.5}, {-1.5, 1.5}},
                     [](const Vec& x) { return 1.0 - x[1] * x[1] - x[2] * x[2]; },
                     [](const Vec& x) { Vec gr(3); gr << 0, -2 * x[1], -2 * x[2]; return gr; });
}

int main() {
  auto g = minkowski(3);
  auto chart = disk_chart();
  auto patch = BoundaryPatch::cylinder_disk({-6, 6});

  BoundaryCovector b;
  b.u = Vec(2); b.u << 0, 0;
  b.xip = Vec(2); b.xip << 1, 0;
  b.orientation = Orientation::Past;  // tau=+1
  LensRecord rec = lens_relation(g, chart, patch, b);
  printf("lens status=%s y=(%.12f, %.12f) eta'=(%.9f, %.9f) s_exit=%.12f xin=(%g,%g)\n",
         to_string(rec.status), rec.exit ? rec.exit->u[0] : 0.0,
         rec.exit ? rec.exit->u[1] : 0.0, rec.exit ? rec.exit->xip[0] : 0.0,
         rec.exit ? rec.exit->xip[1] : 0.0, rec.s_exit, rec.entry_xin, rec.exit_xin);
  printf("shell residual = %g, samples = %zu\n", rec.ray.max_shell_residual(g),
         rec.ray.samples.size());

  BoundaryCovector bm = b;
  bm.xip = -b.xip;
  bm.orientation = Orientation::Future;
  LensRecord rm = lens_relation(g, chart, patch, bm);
  printf("even: y=(%.9f, %.9f) eta'=(%.9f, %.9f)\n", rm.exit->u[0], rm.exit->u[1],
         rm.exit->xip[0], rm.exit->xip[1]);

  CVecClosure A = [](const Vec&) { CVec a(3); a << cplx(1, 0), cplx(0, 0), cplx(0, 0); return a; };
  double err = 0;
  cplx l1 = l1_along_ray(g, A, rec.ray, rec.s_exit, 1e-10, &err);
  printf("L1(dt) = %.12f + %.3ei (err %g)\n", l1.real(), l1.imag(), err);

  const bool fut = rec.entry.orientation == Orientation::Future;
  PointCovector lift =
      lightlike_lift(g, patch, rec.entry, fut ? LiftSide::Interior : LiftSide::Exterior);
  Vec prun = fut ? lift.xi : Vec(-lift.xi);
  Mat W0 = initial_phase_hessian(g, patch, b.u, prun);
  printf("W0 =\n");
  for (int i = 0; i < 3; ++i) printf("  %12.6f %12.6f %12.6f\n", W0(i, 0), W0(i, 1), W0(i, 2));
  PhaseTransport ph = phase_hessian_evolution(g, rec.ray, W0, rec.s_exit, 400);
  printf("boxphi(0)=%.9f boxphi(mid)=%.9f valid=%d\n", ph.boxphi[0], ph.boxphi[200],
         int(ph.valid));

  CoefficientTriple trip = CoefficientTriple::make(g);
  BundleOpts bo;
  GOBundle bundle(g, trip.A, chart, patch, b, bo);
  printf("bundle valid=%d\n", int(bundle.valid()));
  if (bundle.valid()) {
    Mat West = bundle.momentum_gradient_fd(200);
    Mat Wr = bundle.central_phase().W[200];
    printf("W riccati vs stencil max diff = %g\n", (West - Wr).cwiseAbs().maxCoeff());
    auto corr = bundle.corrector_base(trip);
    printf("corrector mid = %g + %gi\n", corr[200].real(), corr[200].imag());
    auto a1 = bundle.transport_a1(trip);
    printf("a1 exit (A=q=0) = %g + %gi\n", a1.exit_a0.real(), a1.exit_a0.imag());
    printf("a0 exit = %g + %gi\n", bundle.central_amp().exit_a0.real(),
           bundle.central_amp().exit_a0.imag());
    // q = const 0.3: a1 difference identity against L0 = q * s_exit
    CoefficientTriple tq = CoefficientTriple::make(g, nullptr,
        [](const Vec&) { return cplx(0.3, 0.0); });
    auto a1q = bundle.transport_a1(tq);
    cplx dl = (a1q.exit_a0 - a1.exit_a0) / bundle.central_amp().exit_a0;
    printf("L0 from a1 diff = %g + %gi  (expect i*0.3*s/2 -> L0=%g)\n", dl.real(), dl.imag(),
           0.3 * rec.s_exit);
  }
  return 0;
}
