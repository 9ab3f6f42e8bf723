#include "physic/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace physic {

BucketIndex::BucketIndex(const std::vector<Vec3>& points) : points_(points) {
  if (points_.empty()) return;
  box_ = Aabb::of(points_);
  const Vec3 ext = box_.extent().cwiseMax(1e-9);
  // Target a handful of points per bucket.
  const double volume = ext.x() * ext.y() * ext.z();
  double cell = std::cbrt(std::max(volume, 1e-18) / double(points_.size())) * 2.0;
  // Degenerate (planar/linear) clouds have near-zero volume; fall back to
  // the largest extent so buckets stay usable.
  cell = std::max(cell, ext.maxCoeff() / 256.0);
  cell_ = std::max(cell, 1e-9);

  auto dims = ((box_.extent() / cell_).array() + 1.0).ceil();
  nx_ = std::max(1, int(dims.x()));
  ny_ = std::max(1, int(dims.y()));
  nz_ = std::max(1, int(dims.z()));

  const size_t ncells = size_t(nx_) * ny_ * nz_;
  std::vector<int> counts(ncells + 1, 0);
  std::vector<int> cells(points_.size());
  for (size_t i = 0; i < points_.size(); ++i) {
    cells[i] = cell_of(points_[i]);
    counts[cells[i] + 1]++;
  }
  for (size_t i = 1; i < counts.size(); ++i) counts[i] += counts[i - 1];
  bucket_start_ = counts;
  bucket_items_.resize(points_.size());
  std::vector<int> cursor(bucket_start_.begin(), bucket_start_.end() - 1);
  for (size_t i = 0; i < points_.size(); ++i) bucket_items_[cursor[cells[i]]++] = int(i);
}

void BucketIndex::cell_coords(const Vec3& p, int& ix, int& iy, int& iz) const {
  ix = std::clamp(int((p.x() - box_.min.x()) / cell_), 0, nx_ - 1);
  iy = std::clamp(int((p.y() - box_.min.y()) / cell_), 0, ny_ - 1);
  iz = std::clamp(int((p.z() - box_.min.z()) / cell_), 0, nz_ - 1);
}

int BucketIndex::cell_of(const Vec3& p) const {
  int ix, iy, iz;
  cell_coords(p, ix, iy, iz);
  return (iz * ny_ + iy) * nx_ + ix;
}

std::pair<int, double> BucketIndex::nearest(const Vec3& q, double scale) const {
  if (points_.empty()) throw Error(ErrorCode::EmptySet, "nearest on empty index");

  // Search in the stored points' frame.
  const Vec3 qs = q / scale;
  int ix, iy, iz;
  cell_coords(qs, ix, iy, iz);

  int best = -1;
  double best_sq = std::numeric_limits<double>::infinity();

  for (int ring = 0;; ++ring) {
    // Once a candidate exists, stop when the next ring cannot improve it.
    if (best >= 0) {
      const double reach = double(ring - 1) * cell_;
      if (ring > 0 && reach * reach > best_sq) break;
    }
    bool any_cell = false;
    const int x0 = ix - ring, x1 = ix + ring;
    const int y0 = iy - ring, y1 = iy + ring;
    const int z0 = iz - ring, z1 = iz + ring;
    for (int z = z0; z <= z1; ++z) {
      if (z < 0 || z >= nz_) continue;
      for (int y = y0; y <= y1; ++y) {
        if (y < 0 || y >= ny_) continue;
        for (int x = x0; x <= x1; ++x) {
          if (x < 0 || x >= nx_) continue;
          // Shell only: skip interior cells already visited.
          if (ring > 0 && z != z0 && z != z1 && y != y0 && y != y1 && x != x0 && x != x1)
            continue;
          any_cell = true;
          const int cell = (z * ny_ + y) * nx_ + x;
          for (int k = bucket_start_[cell]; k < bucket_start_[cell + 1]; ++k) {
            const int idx = bucket_items_[k];
            const double d = (qs - points_[idx]).squaredNorm();
            if (d < best_sq || (d == best_sq && idx < best)) {
              best_sq = d;
              best = idx;
            }
          }
        }
      }
    }
    if (!any_cell && best >= 0) break;
    if (!any_cell && ring > nx_ + ny_ + nz_) break;
  }
  return {best, best_sq * scale * scale};
}

double BucketIndex::mean_knn_distance(int i, int k) const {
  const int n = int(points_.size());
  k = std::min(k, n - 1);
  if (k <= 0) return 0.0;

  const Vec3& p = points_[i];
  int ix, iy, iz;
  cell_coords(p, ix, iy, iz);

  // Max-heap of the k best squared distances found so far.
  std::priority_queue<double> heap;

  for (int ring = 0;; ++ring) {
    if (int(heap.size()) == k) {
      const double reach = double(ring - 1) * cell_;
      if (ring > 0 && reach * reach > heap.top()) break;
    }
    bool any_cell = false;
    const int x0 = ix - ring, x1 = ix + ring;
    const int y0 = iy - ring, y1 = iy + ring;
    const int z0 = iz - ring, z1 = iz + ring;
    for (int z = z0; z <= z1; ++z) {
      if (z < 0 || z >= nz_) continue;
      for (int y = y0; y <= y1; ++y) {
        if (y < 0 || y >= ny_) continue;
        for (int x = x0; x <= x1; ++x) {
          if (x < 0 || x >= nx_) continue;
          if (ring > 0 && z != z0 && z != z1 && y != y0 && y != y1 && x != x0 && x != x1)
            continue;
          any_cell = true;
          const int cell = (z * ny_ + y) * nx_ + x;
          for (int kk = bucket_start_[cell]; kk < bucket_start_[cell + 1]; ++kk) {
            const int idx = bucket_items_[kk];
            if (idx == i) continue;
            const double d = (p - points_[idx]).squaredNorm();
            if (int(heap.size()) < k) {
              heap.push(d);
            } else if (d < heap.top()) {
              heap.pop();
              heap.push(d);
            }
          }
        }
      }
    }
    if (!any_cell && int(heap.size()) == k) break;
    if (ring > nx_ + ny_ + nz_) break;
  }

  double sum = 0.0;
  const int found = int(heap.size());
  while (!heap.empty()) {
    sum += std::sqrt(heap.top());
    heap.pop();
  }
  return found > 0 ? sum / double(found) : 0.0;
}

}  // namespace physic
