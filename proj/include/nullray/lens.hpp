// Lens relation: entry boundary covector -> exit boundary covector along the
// null geodesic it generates, plus fan tables over covector grids.
#pragma once

#include "nullray/boundary_frame.hpp"

namespace nullray {

enum class LensStatus { Exited, TangentialExit, NoExit, NotTimelike, Failed };
const char* to_string(LensStatus s);

struct LensRecord {
  BoundaryCovector entry;
  std::optional<BoundaryCovector> exit;
  Vec y_chart;         // exit chart point
  double s_exit = 0;   // affine parameter span (positive)
  double exit_xin = 0; // xi_n at the exit covector
  double entry_xin = 0;
  LensStatus status = LensStatus::Failed;
  bool fixed_point_flag = false;
  int run_sign = 1;            // reported eta = run_sign * integrated momentum
  RaySolution ray;             // dense geometry, reused by transforms and amplitudes
  std::string note;
};

struct LensTable {
  std::vector<LensRecord> rows;
  std::string field_id;
  double shell_tol = 1e-9;
};

struct LensOpts {
  IntegrateOpts ray;
  bool keep_rays = true;
  // Chooses the patch covering the exit point (slab charts have two faces);
  // defaults to the entry patch.
  std::function<const BoundaryPatch*(const Vec& y)> patch_for_exit;
};

// Lift -> integrate -> exit -> project. Future-pointing entries (covector value
// on Z negative) take the interior lift forward; past-pointing entries take the
// exterior lift and run backward in the parameter, realized by integrating the
// negated momentum and flipping the reported covectors.
LensRecord lens_relation(const MetricField& g, const Chart& chart, const BoundaryPatch& patch,
                         const BoundaryCovector& entry, const LensOpts& opts = {});

LensTable lens_fan(const MetricField& g, const Chart& chart, const BoundaryPatch& patch,
                   const std::vector<BoundaryCovector>& entries, const LensOpts& opts = {});

std::string lens_table_csv(const LensTable& t, const std::string& header);

}  // namespace nullray
