#pragma once

/// Stage 1: metric-scale scene construction. RANSAC scale/shift alignment
/// of relative point maps to metric depth, outlier removal, robust floor
/// plane fitting, floor synthesis, and focal recalibration.

#include "physic/types.hpp"

namespace physic {

struct RansacConfig {
  int iterations = 256;
  double inlier_threshold = 0.05;  // meters
  double min_inlier_fraction = 0.3;
  uint64_t seed = 1;
  double normal_angle_deg = 25.0;  // plane fitting only

  void validate() const {
    if (iterations < 1) throw Error(ErrorCode::InvariantViolation, "ransac iterations >= 1");
    if (!(inlier_threshold > 0))
      throw Error(ErrorCode::InvariantViolation, "ransac inlier threshold > 0");
    if (!(min_inlier_fraction > 0) || min_inlier_fraction > 1)
      throw Error(ErrorCode::InvariantViolation, "min inlier fraction in (0, 1]");
  }
};

/// Stage-1 output: the metric scene cloud with provenance, the fitted
/// floor (if any), and the recalibrated camera.
struct SceneScaffold {
  PointCloud points;
  std::optional<Plane> floor;
  CameraIntrinsics cam;
  std::vector<uint8_t> provenance;  // 0 = observed, 1 = synthesized floor

  int observed_count() const {
    int n = 0;
    for (uint8_t p : provenance) n += p == 0;
    return n;
  }
};

/// Fits (s, tz) so that s * rel_z + tz matches metric_z over RANSAC
/// consensus pixels (depth residuals only; the shift is depth-only).
/// Requires >= 100 valid, non-excluded pixels in common.
ScaleShift align_scale_shift(const PointMap& rel, const PointMap& metric,
                             const PixelMask* exclude, const RansacConfig& cfg);

struct OutlierFilterResult {
  PointCloud cloud;
  std::vector<int> kept;  // indices into the input cloud
};

/// Mean k-NN-distance outlier filter. k adapts to the image resolution
/// (clamp(round(sqrt(W*H)/40), 8, 64)); a point is dropped when its mean
/// k-NN distance exceeds max(mean + lambda*stddev, 2*mean) of that
/// statistic. Never drops more than 20% of the points.
OutlierFilterResult remove_outliers(const PointCloud& pc, int width, int height,
                                    double lambda = 2.0);

/// Robust plane fit over the masked floor points: RANSAC on 3-point
/// samples scoring positional and normal agreement, then a least-squares
/// refit over the consensus set. The returned normal has negative dot
/// product with the floor centroid direction (points up, toward the
/// camera at the origin).
Plane fit_floor_plane(const PointCloud& pc, const std::vector<int>& floor_indices,
                      const RansacConfig& cfg);

/// Regular grid of points on the plane covering the projection of `extent`
/// onto it, all carrying the plane normal.
PointCloud synthesize_floor(const Plane& plane, const Aabb& extent, double spacing);

/// Median-based focal recovery from a pixel-aligned metric point map:
/// fx = median (u - W/2) Z / X over pixels with |X| > 1e-6 Z, fy likewise.
CameraIntrinsics recalibrate_intrinsics(const PointMap& pm);

struct SceneBuildConfig {
  RansacConfig align_ransac{256, 0.05, 0.3, 1, 25.0};
  RansacConfig plane_ransac{256, 0.02, 0.3, 2, 25.0};
  double outlier_lambda = 2.0;
  double floor_spacing = 0.02;     // meters
  double extent_inflation = 1.1;   // scene AABB factor for floor coverage
  bool enable_floor = true;        // ablation switch
};

struct SceneBuildResult {
  SceneScaffold scaffold;
  PointMap metric_map;     // scaled relative map (outlier pixels invalidated)
  ScaleShift scale_shift;  // rel -> metric alignment
};

/// Full stage-1 composition. Floor fitting failures are non-fatal: the
/// scaffold simply records an absent floor.
SceneBuildResult build_scene(const DepthRaster& scene_depth, const PointMap& scene_rel,
                             const PixelMask* floor_mask, const CameraIntrinsics& hint,
                             const SceneBuildConfig& cfg);

}  // namespace physic
