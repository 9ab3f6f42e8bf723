#pragma once

/// Foundational geometry: pinhole projection, back-projection, grid normal
/// estimation, Chamfer distance, the robust loss family, and rigid
/// Procrustes alignment.

#include "physic/types.hpp"

namespace physic {

/// Perspective projection of camera-frame points to continuous pixel
/// coordinates: u = fx*X/Z + W/2, v = fy*Y/Z + H/2.
/// Throws NonPositiveDepth if any Z <= 0.
std::vector<Vec2> project(const std::vector<Vec3>& points, const CameraIntrinsics& cam);

/// Single-point projection (same convention, same depth check).
Vec2 project_point(const Vec3& p, const CameraIntrinsics& cam);

/// Back-projection of a depth raster into a pixel-aligned point map.
/// Invalid pixels stay invalid. Throws DimensionMismatch if the camera
/// dimensions differ from the raster's.
PointMap backproject(const DepthRaster& depth, const CameraIntrinsics& cam);

/// Per-pixel normals from immediate grid neighbours: the normalized cross
/// product of (P(u+1,v) - P(u,v)) and (P(u,v+1) - P(u,v)), oriented to face
/// the camera (n . p <= 0). Border pixels use backward differences.
/// Returns one cloud point per valid pixel in row-major pixel order;
/// pixels with degenerate or missing stencils carry no normal.
PointCloud estimate_gridnormals(const PointMap& pm);

/// Symmetric Chamfer distance:
/// sum_a min_b |a-b|^2 + sum_b min_a |b-a|^2. Throws EmptySet.
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

/// General robust loss rho(x) for x >= 0 (x is typically an already-squared
/// distance). alpha = 2 gives 0.5*(x/c)^2; alpha = 0 gives the log form;
/// alpha = -2 gives the Geman-McClure form 2*(x/c)^2 / ((x/c)^2 + 4).
/// rho(0) = 0 and rho is nondecreasing on x >= 0.
double robust_rho(double x, const RobustLossSpec& spec);

/// Derivative d rho / d x of the family above.
double robust_rho_deriv(double x, const RobustLossSpec& spec);

/// Result of rigid Procrustes alignment (rotation + translation, no scale).
struct ProcrustesResult {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;          // fixed at 1 by construction
  double residual_mm = 0.0;    // mean per-point distance after alignment
};

/// Least-squares rigid alignment of `pred` onto `gt` (Kabsch). Requires
/// matching cardinality >= 3 and a non-degenerate (rank >= 2) configuration.
ProcrustesResult procrustes_align(const std::vector<Vec3>& pred,
                                  const std::vector<Vec3>& gt);

}  // namespace physic
