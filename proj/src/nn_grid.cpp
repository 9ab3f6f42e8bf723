#include "physic/nn_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

namespace physic {

Vec3 NearestPointGrid::cell_center(int ix, int iy, int iz) const {
  return box_.min + Vec3((ix + 0.5) * step_.x(), (iy + 0.5) * step_.y(),
                         (iz + 0.5) * step_.z());
}

NearestPointGrid NearestPointGrid::build(const PointCloud& scene, int resolution,
                                         double build_scale) {
  if (scene.points.empty())
    throw Error(ErrorCode::EmptyScene, "cannot build nearest-point grid over empty scene");
  if (resolution < 1)
    throw Error(ErrorCode::InvariantViolation, "grid resolution must be >= 1");

  NearestPointGrid grid;
  grid.resolution_ = resolution;
  grid.build_scale_ = build_scale;
  grid.points_ = scene.points;
  grid.box_ = Aabb::of(scene.points).inflated(1.05);
  // Keep all cell extents strictly positive for degenerate (planar) scenes.
  Vec3 ext = grid.box_.extent();
  for (int a = 0; a < 3; ++a) {
    if (ext[a] < 1e-6) {
      grid.box_.min[a] -= 5e-7;
      grid.box_.max[a] += 5e-7;
    }
  }
  grid.step_ = grid.box_.extent() / double(resolution);

  const int n = resolution;
  const size_t ncells = size_t(n) * n * n;
  grid.cells_.assign(ncells, -1);

  auto cell_index = [n](int x, int y, int z) {
    return (size_t(z) * n + y) * n + x;
  };
  auto center = [&grid](int x, int y, int z) { return grid.cell_center(x, y, z); };

  // Seed: each point proposes itself to its containing cell.
  auto coords_of = [&](const Vec3& p, int& x, int& y, int& z) {
    x = std::clamp(int((p.x() - grid.box_.min.x()) / grid.step_.x()), 0, n - 1);
    y = std::clamp(int((p.y() - grid.box_.min.y()) / grid.step_.y()), 0, n - 1);
    z = std::clamp(int((p.z() - grid.box_.min.z()) / grid.step_.z()), 0, n - 1);
  };

  // dist-to-cell-centre per cell for the current candidate.
  std::vector<double> dist(ncells, std::numeric_limits<double>::infinity());

  // (distance, cell, site): deterministic ordering via the full tuple.
  using Entry = std::tuple<double, size_t, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;

  for (int i = 0; i < int(grid.points_.size()); ++i) {
    int x, y, z;
    coords_of(grid.points_[i], x, y, z);
    const size_t c = cell_index(x, y, z);
    const double d = (center(x, y, z) - grid.points_[i]).norm();
    if (d < dist[c] || (d == dist[c] && i < grid.cells_[c])) {
      dist[c] = d;
      grid.cells_[c] = i;
      queue.emplace(d, c, i);
    }
  }

  // Multi-source expanding-front relaxation over the 26-neighbourhood,
  // processed until fixpoint.
  while (!queue.empty()) {
    auto [d, c, site] = queue.top();
    queue.pop();
    if (grid.cells_[c] != site || d > dist[c]) continue;  // stale entry

    const int z = int(c / (size_t(n) * n));
    const int y = int((c / n) % n);
    const int x = int(c % n);
    for (int dz = -1; dz <= 1; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const int nx = x + dx, ny = y + dy, nz = z + dz;
          if (nx < 0 || nx >= n || ny < 0 || ny >= n || nz < 0 || nz >= n) continue;
          const size_t nc = cell_index(nx, ny, nz);
          const double nd = (center(nx, ny, nz) - grid.points_[site]).norm();
          if (nd < dist[nc] || (nd == dist[nc] && site < grid.cells_[nc])) {
            dist[nc] = nd;
            grid.cells_[nc] = site;
            queue.emplace(nd, nc, site);
          }
        }
      }
    }
  }

  return grid;
}

NearestPointGrid::QueryResult NearestPointGrid::query(const Vec3& point,
                                                      double current_scale) const {
  // Map the query back to build scale, clamp into the box, look up its cell.
  const double to_build = build_scale_ / current_scale;
  Vec3 q = point * to_build;
  q = q.cwiseMax(box_.min).cwiseMin(box_.max);

  const int n = resolution_;
  const int ix = std::clamp(int((q.x() - box_.min.x()) / step_.x()), 0, n - 1);
  const int iy = std::clamp(int((q.y() - box_.min.y()) / step_.y()), 0, n - 1);
  const int iz = std::clamp(int((q.z() - box_.min.z()) / step_.z()), 0, n - 1);

  // The query's own cell stores the point nearest the cell centre, which
  // can be half a voxel off for queries near cell boundaries. Taking the
  // argmin over the 27 neighbouring cells' candidates keeps the lookup
  // O(1) while making the returned neighbour near-exact.
  QueryResult out;
  double best_sq = std::numeric_limits<double>::infinity();
  for (int dz = -1; dz <= 1; ++dz) {
    const int z = iz + dz;
    if (z < 0 || z >= n) continue;
    for (int dy = -1; dy <= 1; ++dy) {
      const int y = iy + dy;
      if (y < 0 || y >= n) continue;
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = ix + dx;
        if (x < 0 || x >= n) continue;
        const int idx = cells_[(size_t(z) * n + y) * n + x];
        const double d = (q - points_[idx]).squaredNorm();
        if (d < best_sq || (d == best_sq && idx < out.index)) {
          best_sq = d;
          out.index = idx;
        }
      }
    }
  }
  const Vec3 stored = points_[out.index] * (current_scale / build_scale_);
  out.distance = (point - stored).norm();
  return out;
}

}  // namespace physic
