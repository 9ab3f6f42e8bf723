#include "physic/scene.hpp"

#include "physic/geometry.hpp"
#include "physic/knn.hpp"
#include "physic/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace physic {

// ============================================================================
// Scale/shift alignment
// ============================================================================

namespace {

struct DepthPair {
  double rel = 0.0;
  double metric = 0.0;
};

/// Least-squares (s, tz) minimizing sum (s*rel + tz - metric)^2.
bool fit_scale_shift(const std::vector<DepthPair>& pairs, const std::vector<int>& idx,
                     double& s, double& tz) {
  double sum_r = 0, sum_m = 0, sum_rr = 0, sum_rm = 0;
  const double n = double(idx.size());
  for (int i : idx) {
    sum_r += pairs[i].rel;
    sum_m += pairs[i].metric;
    sum_rr += pairs[i].rel * pairs[i].rel;
    sum_rm += pairs[i].rel * pairs[i].metric;
  }
  const double denom = n * sum_rr - sum_r * sum_r;
  if (std::abs(denom) < 1e-12 * std::max(1.0, n * sum_rr)) return false;
  s = (n * sum_rm - sum_r * sum_m) / denom;
  tz = (sum_m - s * sum_r) / n;
  return true;
}

}  // namespace

ScaleShift align_scale_shift(const PointMap& rel, const PointMap& metric,
                             const PixelMask* exclude, const RansacConfig& cfg) {
  cfg.validate();
  if (rel.width != metric.width || rel.height != metric.height)
    throw Error(ErrorCode::DimensionMismatch, "relative and metric maps are not pixel-aligned");

  std::vector<DepthPair> pairs;
  pairs.reserve(size_t(rel.width) * rel.height / 4);
  for (int r = 0; r < rel.height; ++r) {
    for (int c = 0; c < rel.width; ++c) {
      if (!rel.is_valid(r, c) || !metric.is_valid(r, c)) continue;
      if (exclude && exclude->is_inside(r, c)) continue;
      pairs.push_back({rel.at(r, c).z(), metric.at(r, c).z()});
    }
  }
  if (int(pairs.size()) < 100)
    throw Error(ErrorCode::InsufficientOverlap,
                "need >= 100 common pixels, got " + std::to_string(pairs.size()));

  const int n = int(pairs.size());
  Rng rng(cfg.seed);

  std::vector<int> best_inliers;
  for (int it = 0; it < cfg.iterations; ++it) {
    Rng iter_rng = rng.fork(uint64_t(it));
    const int i = iter_rng.uniform_int(n);
    int j = iter_rng.uniform_int(n);
    if (j == i) j = (j + 1) % n;
    const double dr = pairs[i].rel - pairs[j].rel;
    if (std::abs(dr) < 1e-12) continue;
    const double s = (pairs[i].metric - pairs[j].metric) / dr;
    if (!(s > 0.0)) continue;
    const double tz = pairs[i].metric - s * pairs[i].rel;

    std::vector<int> inliers;
    inliers.reserve(n);
    for (int k = 0; k < n; ++k)
      if (std::abs(s * pairs[k].rel + tz - pairs[k].metric) < cfg.inlier_threshold)
        inliers.push_back(k);
    if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
  }

  if (double(best_inliers.size()) < cfg.min_inlier_fraction * n)
    throw Error(ErrorCode::NoConsensus,
                "best inlier fraction " +
                    std::to_string(double(best_inliers.size()) / n) + " below minimum");

  ScaleShift out;
  if (!fit_scale_shift(pairs, best_inliers, out.s, out.tz) || !(out.s > 0.0))
    throw Error(ErrorCode::NoConsensus, "degenerate consensus set for scale/shift fit");
  return out;
}

// ============================================================================
// Outlier removal
// ============================================================================

OutlierFilterResult remove_outliers(const PointCloud& pc, int width, int height,
                                    double lambda) {
  if (pc.points.empty())
    throw Error(ErrorCode::EmptySet, "outlier filter needs a nonempty cloud");

  const int n = int(pc.points.size());
  const int k = std::clamp(int(std::lround(std::sqrt(double(width) * height) / 40.0)), 8, 64);

  BucketIndex index(pc.points);
  std::vector<double> stat(n);
  for (int i = 0; i < n; ++i) stat[i] = index.mean_knn_distance(i, k);

  double mean = std::accumulate(stat.begin(), stat.end(), 0.0) / n;
  double var = 0.0;
  for (double s : stat) var += (s - mean) * (s - mean);
  const double stddev = std::sqrt(var / n);

  // Grid-border points legitimately exceed mean + 2*sigma on clean rasters,
  // so the cut also requires the statistic to at least double the mean.
  const double cutoff = std::max(mean + lambda * stddev, 2.0 * mean);

  std::vector<int> drop;
  for (int i = 0; i < n; ++i)
    if (stat[i] > cutoff) drop.push_back(i);

  const int max_drop = int(0.2 * n);
  if (int(drop.size()) > max_drop) {
    std::sort(drop.begin(), drop.end(),
              [&](int a, int b) { return stat[a] > stat[b] || (stat[a] == stat[b] && a < b); });
    drop.resize(max_drop);
  }

  std::vector<uint8_t> dropped(n, 0);
  for (int i : drop) dropped[i] = 1;

  OutlierFilterResult out;
  out.kept.reserve(n - int(drop.size()));
  for (int i = 0; i < n; ++i) {
    if (dropped[i]) continue;
    out.kept.push_back(i);
    out.cloud.points.push_back(pc.points[i]);
    if (pc.has_normals()) {
      out.cloud.normals.push_back(pc.normals[i]);
      out.cloud.normal_valid.push_back(pc.normal_valid[i]);
    }
  }
  return out;
}

// ============================================================================
// Floor plane
// ============================================================================

namespace {

/// Least-squares plane through the given points (centroid + smallest
/// covariance eigenvector).
bool plane_least_squares(const PointCloud& pc, const std::vector<int>& idx, Plane& plane) {
  if (idx.size() < 3) return false;
  Vec3 centroid = Vec3::Zero();
  for (int i : idx) centroid += pc.points[i];
  centroid /= double(idx.size());
  Mat3 cov = Mat3::Zero();
  for (int i : idx) {
    const Vec3 d = pc.points[i] - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  if (eig.info() != Eigen::Success) return false;
  // Degenerate (collinear) point sets leave the normal undetermined.
  if (eig.eigenvalues()(1) < 1e-12 * std::max(eig.eigenvalues()(2), 1e-12)) return false;
  plane.normal = eig.eigenvectors().col(0).normalized();
  plane.d = plane.normal.dot(centroid);
  return true;
}

}  // namespace

Plane fit_floor_plane(const PointCloud& pc, const std::vector<int>& floor_indices,
                      const RansacConfig& cfg) {
  cfg.validate();
  if (floor_indices.size() < 3)
    throw Error(ErrorCode::TooFewPoints,
                "plane fit needs >= 3 floor points, got " + std::to_string(floor_indices.size()));

  const int n = int(floor_indices.size());
  const double cos_limit = std::cos(cfg.normal_angle_deg * M_PI / 180.0);
  Rng rng(cfg.seed);

  // Mean of the available point normals orients candidate planes before the
  // normal-consistency test.
  Vec3 mean_normal = Vec3::Zero();
  for (int i : floor_indices)
    if (pc.normal_ok(i)) mean_normal += pc.normals[i];

  auto collect_inliers = [&](const Plane& plane) {
    std::vector<int> inliers;
    for (int i : floor_indices) {
      if (std::abs(plane.signed_distance(pc.points[i])) >= cfg.inlier_threshold) continue;
      if (pc.normal_ok(i) && pc.normals[i].dot(plane.normal) <= cos_limit) continue;
      inliers.push_back(i);
    }
    return inliers;
  };

  std::vector<int> best_inliers;
  for (int it = 0; it < cfg.iterations; ++it) {
    Rng iter_rng = rng.fork(uint64_t(it));
    const int a = floor_indices[iter_rng.uniform_int(n)];
    const int b = floor_indices[iter_rng.uniform_int(n)];
    const int c = floor_indices[iter_rng.uniform_int(n)];
    if (a == b || a == c || b == c) continue;
    Vec3 nrm = (pc.points[b] - pc.points[a]).cross(pc.points[c] - pc.points[a]);
    const double len = nrm.norm();
    if (len < 1e-12) continue;
    nrm /= len;
    if (mean_normal.squaredNorm() > 0 && nrm.dot(mean_normal) < 0) nrm = -nrm;
    Plane cand{nrm, nrm.dot(pc.points[a])};
    auto inliers = collect_inliers(cand);
    if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
  }

  if (double(best_inliers.size()) < cfg.min_inlier_fraction * n || best_inliers.size() < 3)
    throw Error(ErrorCode::NoConsensus, "no plane consensus among floor points");

  Plane plane;
  if (!plane_least_squares(pc, best_inliers, plane))
    throw Error(ErrorCode::NoConsensus, "degenerate consensus set for plane refit");

  // Orient toward the camera: negative dot with the centroid view ray.
  Vec3 centroid = Vec3::Zero();
  for (int i : best_inliers) centroid += pc.points[i];
  centroid /= double(best_inliers.size());
  if (plane.normal.dot(centroid) > 0.0) {
    plane.normal = -plane.normal;
    plane.d = -plane.d;
  }
  return plane;
}

PointCloud synthesize_floor(const Plane& plane, const Aabb& extent, double spacing) {
  PointCloud out;
  if (extent.empty() || !(spacing > 0.0)) return out;

  // In-plane basis aligned with the world axis least parallel to the normal.
  int axis = 0;
  double best = std::abs(plane.normal.x());
  for (int a = 1; a < 3; ++a) {
    const double v = std::abs(plane.normal[a]);
    if (v < best) {
      best = v;
      axis = a;
    }
  }
  Vec3 e = Vec3::Zero();
  e[axis] = 1.0;
  const Vec3 u = (e - plane.normal * plane.normal.dot(e)).normalized();
  const Vec3 w = plane.normal.cross(u);
  const Vec3 origin = plane.normal * plane.d;

  // Project the eight AABB corners onto the plane to get the 2D coverage.
  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  double wmin = umin, wmax = -umin;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 p(corner & 1 ? extent.max.x() : extent.min.x(),
                 corner & 2 ? extent.max.y() : extent.min.y(),
                 corner & 4 ? extent.max.z() : extent.min.z());
    const Vec3 rel = p - origin;
    umin = std::min(umin, rel.dot(u));
    umax = std::max(umax, rel.dot(u));
    wmin = std::min(wmin, rel.dot(w));
    wmax = std::max(wmax, rel.dot(w));
  }

  const int nu = int(std::floor((umax - umin) / spacing + 1e-9)) + 1;
  const int nw = int(std::floor((wmax - wmin) / spacing + 1e-9)) + 1;
  out.points.reserve(size_t(nu) * nw);
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nw; ++j) {
      out.points.push_back(origin + (umin + i * spacing) * u + (wmin + j * spacing) * w);
      out.normals.push_back(plane.normal);
      out.normal_valid.push_back(1);
    }
  }
  return out;
}

// ============================================================================
// Intrinsics recalibration
// ============================================================================

CameraIntrinsics recalibrate_intrinsics(const PointMap& pm) {
  std::vector<double> fx_est, fy_est;
  fx_est.reserve(size_t(pm.width) * pm.height / 2);
  fy_est.reserve(fx_est.capacity());
  const double cx = 0.5 * pm.width;
  const double cy = 0.5 * pm.height;
  for (int r = 0; r < pm.height; ++r) {
    for (int c = 0; c < pm.width; ++c) {
      if (!pm.is_valid(r, c)) continue;
      const Vec3& p = pm.at(r, c);
      if (!(p.z() > 0.0)) continue;
      if (std::abs(p.x()) > 1e-6 * p.z()) fx_est.push_back((c - cx) * p.z() / p.x());
      if (std::abs(p.y()) > 1e-6 * p.z()) fy_est.push_back((r - cy) * p.z() / p.y());
    }
  }
  if (int(fx_est.size()) < 100 || int(fy_est.size()) < 100)
    throw Error(ErrorCode::InsufficientPixels, "too few pixels for focal recalibration");

  auto median = [](std::vector<double>& v) {
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    if (v.size() % 2 == 1) return v[mid];
    const double hi = v[mid];
    std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
    return 0.5 * (v[mid - 1] + hi);
  };

  CameraIntrinsics cam;
  cam.width = pm.width;
  cam.height = pm.height;
  cam.fx = median(fx_est);
  cam.fy = median(fy_est);
  cam.validate();
  return cam;
}

// ============================================================================
// Stage-1 composition
// ============================================================================

SceneBuildResult build_scene(const DepthRaster& scene_depth, const PointMap& scene_rel,
                             const PixelMask* floor_mask, const CameraIntrinsics& hint,
                             const SceneBuildConfig& cfg) {
  SceneBuildResult out;

  const PointMap metric_from_depth = backproject(scene_depth, hint);
  out.scale_shift = align_scale_shift(scene_rel, metric_from_depth, nullptr, cfg.align_ransac);

  // Metric-scale scene map: the scaled relative map.
  PointMap scaled = scene_rel;
  for (int i = 0; i < scaled.size(); ++i)
    if (scaled.valid[i]) scaled.points[i] = out.scale_shift.apply(scaled.points[i]);

  // Normals on the pixel grid, then the outlier filter over the cloud.
  PointCloud observed = estimate_gridnormals(scaled);
  OutlierFilterResult filtered =
      remove_outliers(observed, scaled.width, scaled.height, cfg.outlier_lambda);

  // Map pixel index -> filtered cloud index (for the floor mask), and
  // invalidate dropped pixels in the metric map.
  std::vector<int> pixel_of_point;
  pixel_of_point.reserve(observed.size());
  for (int i = 0; i < scaled.size(); ++i)
    if (scaled.valid[i]) pixel_of_point.push_back(i);

  std::vector<uint8_t> kept_mask(observed.size(), 0);
  for (int i : filtered.kept) kept_mask[i] = 1;
  for (size_t i = 0; i < kept_mask.size(); ++i)
    if (!kept_mask[i]) scaled.valid[pixel_of_point[i]] = 0;

  SceneScaffold& scaffold = out.scaffold;
  scaffold.points = filtered.cloud;
  scaffold.provenance.assign(filtered.cloud.size(), 0);

  // Floor fitting is optional and non-fatal.
  if (floor_mask && cfg.enable_floor) {
    std::vector<int> floor_points;
    for (size_t ci = 0; ci < filtered.kept.size(); ++ci) {
      const int pixel = pixel_of_point[filtered.kept[ci]];
      const int r = pixel / scaled.width;
      const int c = pixel % scaled.width;
      if (floor_mask->is_inside(r, c)) floor_points.push_back(int(ci));
    }
    try {
      const Plane plane = fit_floor_plane(scaffold.points, floor_points, cfg.plane_ransac);
      const Aabb extent = Aabb::of(scaffold.points.points).inflated(cfg.extent_inflation);
      const PointCloud floor = synthesize_floor(plane, extent, cfg.floor_spacing);
      scaffold.floor = plane;
      scaffold.points.append(floor);
      scaffold.provenance.resize(scaffold.points.size(), 1);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoConsensus && e.code() != ErrorCode::TooFewPoints) throw;
      scaffold.floor.reset();
    }
  }

  scaffold.cam = recalibrate_intrinsics(scaled);
  out.metric_map = std::move(scaled);
  return out;
}

}  // namespace physic
