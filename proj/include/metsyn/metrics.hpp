#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metsyn/volume.hpp"

namespace metsyn {

// ---------------------------------------------------------------------------
// Morphology and connected components. 6-connectivity throughout.

/// One-voxel 6-connected dilation; voxels outside the grid are ignored.
Mask dilate6(const Mask &m);
/// One-voxel 6-connected erosion. `outside_is_foreground` selects how the
/// grid border behaves: false erodes voxels touching the border.
Mask erode6(const Mask &m, bool outside_is_foreground = false);
/// Dilation followed by erosion with the border treated as foreground,
/// so the result always contains the input.
Mask close6(const Mask &m);
Mask mask_union(const Mask &a, const Mask &b);
Mask mask_intersection(const Mask &a, const Mask &b);
/// Voxels in `a` and not in `b`.
Mask mask_difference(const Mask &a, const Mask &b);

struct Components {
  /// Per-voxel label, 0 for background, 1..count for components.
  std::vector<std::int32_t> labels;
  /// sizes[k] is the voxel count of label k+1.
  std::vector<std::size_t> sizes;

  std::size_t count() const noexcept { return sizes.size(); }
};

/// 6-connected labeling. Labels are ordered by decreasing size; equal sizes
/// are ordered by their smallest linear voxel index.
Components connected_components(const Mask &m);
/// Mask of the component with the given label (1-based).
Mask component_mask(const Mask &grid, const Components &cc, std::int32_t label);
/// Largest component, or an empty mask when there is none.
Mask largest_component(const Mask &m);

/// Closing, then removal of components whose physical volume is <= min_mm3.
Mask postprocess(const Mask &prediction, double min_mm3 = 16.0);

// ---------------------------------------------------------------------------
// Evaluation metrics.

/// 2|A∩B| / (|A|+|B|); 1.0 when both are empty.
double dice(const Mask &a, const Mask &b);

/// Foreground voxels with a background (or out-of-grid) 6-neighbour, in
/// ascending linear index. Throws on an empty mask.
std::vector<Index3> surface_voxels(const Mask &m);

/// Distance in mm between two voxel centres. All surface distances use
///   sqrt(((dx*sx)^2 + (dy*sy)^2) + (dz*sz)^2)
/// evaluated in this order, so independent implementations agree bit-for-bit.
double voxel_distance_mm(const Index3 &a, const Index3 &b, const Spacing3 &s);

/// For every voxel of `from` (in order), the distance to the nearest voxel of `to`.
std::vector<double> directed_surface_distances(const std::vector<Index3> &from,
                                               const std::vector<Index3> &to,
                                               const Spacing3 &spacing);

/// Nearest-rank percentile: the ceil(q/100 * n)-th smallest value (q integral).
double nearest_rank_percentile(std::vector<double> values, int q);

struct HausdorffResult {
  double hd_mm = 0.0;
  double hd95_mm = 0.0;
};

/// HD is the larger directed maximum; HD95 the larger directed 95th
/// percentile. Both masks must be nonempty.
HausdorffResult hausdorff(const Mask &a, const Mask &b);

/// Mean of both directed surface-distance sets pooled together. Sums run in
/// surface order of A, then surface order of B.
double assd(const Mask &a, const Mask &b);

struct MetricsReport {
  double dice = 0.0;
  double hd_mm = 0.0;
  double hd95_mm = 0.0;
  double assd_mm = 0.0;
  /// Set when either mask was empty and the penalty policy was applied.
  bool empty_flag = false;
  bool postprocessed = false;
};

struct EvaluateOptions {
  bool postprocess = false;
  double min_component_mm3 = 16.0;
};

/// Physical length of the grid diagonal (extent n*s per axis).
double grid_diagonal_mm(const Index3 &dims, const Spacing3 &spacing);

/// All four metrics. If exactly one mask is empty: dice 0 and every distance
/// set to the grid diagonal. If both are empty: dice 1 and distances 0.
/// Either case sets `empty_flag`.
MetricsReport evaluate(const Mask &prediction, const Mask &reference,
                       const EvaluateOptions &opts = {});

/// "sample_id,dice,hd_mm,hd95_mm,assd_mm,empty_flag" rows.
std::string metrics_csv(const std::vector<std::string> &ids,
                        const std::vector<MetricsReport> &reports);

} // namespace metsyn
