#pragma once

/// Precomputed nearest-scene-point grid: a dense voxel grid over the scene
/// bounding box where every cell stores the index of the scene point
/// nearest to the cell centre. Queries are O(1) cell lookups and are
/// scale-invariant: a query taken at scene scale s is mapped back to the
/// build scale before the lookup, and the returned distance is measured
/// against the stored point rescaled to the query's scale.

#include "physic/types.hpp"

namespace physic {

class NearestPointGrid {
 public:
  struct QueryResult {
    int index = -1;       // scene point index
    double distance = 0;  // exact distance to that point at the query scale
  };

  /// Builds the grid over `scene` (nonempty, else EmptyScene) with
  /// `resolution` cells per axis. The AABB is inflated by 5% to keep
  /// near-edge queries off the clamp boundary. `build_scale` records the
  /// scene scale at construction (normally 1).
  static NearestPointGrid build(const PointCloud& scene, int resolution = 128,
                                double build_scale = 1.0);

  /// Nearest stored point for a query expressed at scene scale
  /// `current_scale`. Out-of-box queries are clamped.
  QueryResult query(const Vec3& point, double current_scale) const;

  int resolution() const { return resolution_; }
  const Aabb& aabb() const { return box_; }
  double build_scale() const { return build_scale_; }
  int cell_nearest(int ix, int iy, int iz) const {
    return cells_[(size_t(iz) * resolution_ + iy) * resolution_ + ix];
  }
  Vec3 cell_center(int ix, int iy, int iz) const;
  /// Length of a voxel diagonal at build scale (query-accuracy bound).
  double voxel_diagonal() const { return step_.norm(); }

 private:
  int resolution_ = 0;
  Aabb box_;
  Vec3 step_ = Vec3::Zero();
  double build_scale_ = 1.0;
  std::vector<int> cells_;
  std::vector<Vec3> points_;  // snapshot of the scene points at build scale
};

}  // namespace physic
