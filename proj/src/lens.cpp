#include "nullray/lens.hpp"

#include <sstream>

namespace nullray {

const char* to_string(LensStatus s) {
  switch (s) {
    case LensStatus::Exited: return "exited";
    case LensStatus::TangentialExit: return "tangential_exit";
    case LensStatus::NoExit: return "no_exit";
    case LensStatus::NotTimelike: return "not_timelike";
    case LensStatus::Failed: return "failed";
  }
  return "?";
}

LensRecord lens_relation(const MetricField& g, const Chart& chart, const BoundaryPatch& patch,
                         const BoundaryCovector& entry, const LensOpts& opts) {
  LensRecord rec;
  rec.entry = entry;
  try {
    rec.entry_xin = xi_normal(g, patch, entry.u, entry.xip);
  } catch (const NotTimelikeError&) {
    rec.status = LensStatus::NotTimelike;
    return rec;
  }
  const bool future = entry.orientation == Orientation::Future;
  PointCovector lift =
      lightlike_lift(g, patch, entry, future ? LiftSide::Interior : LiftSide::Exterior);
  Vec p_run = future ? lift.xi : Vec(-lift.xi);
  rec.run_sign = future ? 1 : -1;
  try {
    rec.ray = integrate_bicharacteristic(g, chart, lift.x, p_run, opts.ray);
  } catch (const NumericsError& e) {
    rec.status = LensStatus::Failed;
    rec.note = e.what();
    return rec;
  }
  if (rec.ray.status == RayStatus::TangencySuspected) {
    rec.status = LensStatus::TangentialExit;
    return rec;
  }
  if (rec.ray.status != RayStatus::Exited || !rec.ray.exit) {
    rec.status = LensStatus::NoExit;
    return rec;
  }
  const ExitRecord& ex = *rec.ray.exit;
  rec.s_exit = ex.s_exit;
  rec.y_chart = ex.y;
  Vec eta = double(rec.run_sign) * ex.eta;
  PointCovector pc{ex.y, eta};
  const BoundaryPatch& exit_patch =
      opts.patch_for_exit ? *opts.patch_for_exit(ex.y) : patch;
  BoundaryCovector out = tangential_project(g, chart, exit_patch, pc, 1e-8);
  rec.exit = out;
  try {
    rec.exit_xin = xi_normal(g, exit_patch, out.u, out.xip);
  } catch (const NotTimelikeError&) {
    rec.status = LensStatus::Failed;
    rec.note = "exit covector not timelike";
    return rec;
  }
  rec.status = LensStatus::Exited;
  rec.fixed_point_flag =
      (out.u - entry.u).norm() < 1e-9 && (out.xip - entry.xip).norm() < 1e-9;
  if (!opts.keep_rays) rec.ray = RaySolution{};
  return rec;
}

LensTable lens_fan(const MetricField& g, const Chart& chart, const BoundaryPatch& patch,
                   const std::vector<BoundaryCovector>& entries, const LensOpts& opts) {
  LensTable t;
  t.rows.reserve(entries.size());
  for (const auto& e : entries) t.rows.push_back(lens_relation(g, chart, patch, e, opts));
  return t;
}

std::string lens_table_csv(const LensTable& t, const std::string& header) {
  std::ostringstream os;
  os << header;
  if (t.rows.empty()) return os.str();
  const int np = t.rows.front().entry.u.size();
  for (int i = 0; i < np; ++i) os << "entry_u" << i << ",";
  for (int i = 0; i < np; ++i) os << "entry_xi" << i << ",";
  os << "orientation,";
  for (int i = 0; i < np; ++i) os << "exit_u" << i << ",";
  for (int i = 0; i < np; ++i) os << "exit_eta" << i << ",";
  os << "s_exit,eta_n,status\n";
  for (const auto& r : t.rows) {
    for (int i = 0; i < np; ++i) os << fmt_g17(r.entry.u[i]) << ",";
    for (int i = 0; i < np; ++i) os << fmt_g17(r.entry.xip[i]) << ",";
    os << (r.entry.orientation == Orientation::Future ? "future" : "past") << ",";
    for (int i = 0; i < np; ++i) os << (r.exit ? fmt_g17(r.exit->u[i]) : "nan") << ",";
    for (int i = 0; i < np; ++i) os << (r.exit ? fmt_g17(r.exit->xip[i]) : "nan") << ",";
    os << fmt_g17(r.s_exit) << "," << fmt_g17(r.exit_xin) << "," << to_string(r.status) << "\n";
  }
  return os.str();
}

}  // namespace nullray
