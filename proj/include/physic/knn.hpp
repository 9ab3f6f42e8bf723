#pragma once

/// Exact nearest-neighbour queries over a fixed point set, backed by a
/// uniform bucket grid with expanding-shell search. Used for one-shot
/// preprocessing (outlier statistics) and final contact extraction; the
/// optimization hot path uses the approximate NearestPointGrid instead.

#include "physic/types.hpp"

namespace physic {

class BucketIndex {
 public:
  explicit BucketIndex(const std::vector<Vec3>& points);

  /// Index and squared distance of the exact nearest point to `q`.
  /// `scale` maps stored points into query space: distances are measured
  /// against scale * p. Throws EmptySet on an empty index.
  std::pair<int, double> nearest(const Vec3& q, double scale = 1.0) const;

  /// Mean distance from points[i] to its k nearest other points (exact).
  double mean_knn_distance(int i, int k) const;

  size_t size() const { return points_.size(); }

 private:
  std::vector<Vec3> points_;
  Aabb box_;
  double cell_ = 1.0;
  int nx_ = 1, ny_ = 1, nz_ = 1;
  std::vector<int> bucket_start_;  // CSR layout over cells
  std::vector<int> bucket_items_;

  int cell_of(const Vec3& p) const;
  void cell_coords(const Vec3& p, int& ix, int& iy, int& iz) const;
};

}  // namespace physic
