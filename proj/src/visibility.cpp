#include "physic/visibility.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>

namespace physic {

std::vector<uint8_t> camera_facing(const MatX3& vertices,
                                   const std::vector<std::array<int, 3>>& faces,
                                   const CameraIntrinsics& cam, double max_angle_deg) {
  (void)cam;  // view rays emanate from the camera origin
  const int n = int(vertices.rows());
  MatX3 normals = MatX3::Zero(n, 3);
  for (const auto& f : faces) {
    const Vec3 a = vertices.row(f[0]).transpose();
    const Vec3 b = vertices.row(f[1]).transpose();
    const Vec3 c = vertices.row(f[2]).transpose();
    const Vec3 fn = (b - a).cross(c - a);  // magnitude = 2x area
    normals.row(f[0]) += fn.transpose();
    normals.row(f[1]) += fn.transpose();
    normals.row(f[2]) += fn.transpose();
  }

  const double cos_limit = std::cos(max_angle_deg * M_PI / 180.0);
  std::vector<uint8_t> facing(n, 0);
  for (int v = 0; v < n; ++v) {
    const Vec3 nrm = normals.row(v).transpose();
    const double len = nrm.norm();
    if (len < 1e-14) continue;
    const Vec3 to_camera = -Vec3(vertices.row(v).transpose()).normalized();
    facing[v] = nrm.dot(to_camera) / len > cos_limit ? 1 : 0;
  }
  return facing;
}

std::vector<uint8_t> object_occlusion(const MatX3& vertices, const CameraIntrinsics& cam,
                                      const PixelMask& human_mask) {
  if (human_mask.width != cam.width || human_mask.height != cam.height)
    throw Error(ErrorCode::DimensionMismatch, "mask dimensions differ from camera");
  const int n = int(vertices.rows());
  std::vector<uint8_t> occ(n, 0);
  for (int v = 0; v < n; ++v) {
    const Vec3 p = vertices.row(v).transpose();
    if (!(p.z() > 0.0)) {
      occ[v] = 1;  // behind the camera: no mask evidence
      continue;
    }
    const double u = cam.fx * p.x() / p.z() + 0.5 * cam.width;
    const double w = cam.fy * p.y() / p.z() + 0.5 * cam.height;
    const long col = std::lround(u);
    const long row = std::lround(w);
    occ[v] = human_mask.is_inside(int(row), int(col)) ? 0 : 1;
  }
  return occ;
}

namespace {

/// Per-pixel record of the closest covering face's depth/part plus the
/// closest depth among faces of any *other* part. Together these answer
/// "min covering depth over parts != q" exactly for any part q.
struct DepthPair {
  double d1 = std::numeric_limits<double>::infinity();
  int part1 = -1;
  double d2 = std::numeric_limits<double>::infinity();
  int part2 = -1;

  void insert(double d, int part) {
    if (part == part1) {
      if (d < d1) d1 = d;
    } else if (d < d1) {
      d2 = d1;
      part2 = part1;
      d1 = d;
      part1 = part;
    } else if (part == part2) {
      if (d < d2) d2 = d;
    } else if (d < d2) {
      d2 = d;
      part2 = part;
    }
  }

  double min_other(int part) const { return part == part1 ? d2 : d1; }
};

}  // namespace

std::vector<uint8_t> self_occlusion(const MatX3& vertices,
                                    const std::vector<std::array<int, 3>>& faces,
                                    const std::vector<int>& part_labels, int part_count,
                                    const CameraIntrinsics& cam, double depth_tolerance,
                                    double part_fraction) {
  const int n = int(vertices.rows());
  const int w = cam.width, h = cam.height;
  std::vector<DepthPair> zbuf(size_t(w) * h);

  // Project all vertices once (guarded; skip anything behind the camera).
  std::vector<Vec2> proj(n);
  std::vector<uint8_t> proj_ok(n, 0);
  for (int v = 0; v < n; ++v) {
    const Vec3 p = vertices.row(v).transpose();
    if (!(p.z() > 1e-9)) continue;
    proj[v] = Vec2(cam.fx * p.x() / p.z() + 0.5 * w, cam.fy * p.y() / p.z() + 0.5 * h);
    proj_ok[v] = 1;
  }

  // Rasterize with perspective-correct depth (1/z linear in screen space).
  for (const auto& f : faces) {
    if (!proj_ok[f[0]] || !proj_ok[f[1]] || !proj_ok[f[2]]) continue;
    const Vec2& a = proj[f[0]];
    const Vec2& b = proj[f[1]];
    const Vec2& c = proj[f[2]];
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (std::abs(area) < 1e-12) continue;  // degenerate in screen space

    // The part of the face: faces are part-uniform in practice; take the
    // majority label (first vertex) either way.
    const int part = part_labels[f[0]];
    const double iz0 = 1.0 / vertices(f[0], 2);
    const double iz1 = 1.0 / vertices(f[1], 2);
    const double iz2 = 1.0 / vertices(f[2], 2);

    const int cmin = std::max(0, int(std::ceil(std::min({a.x(), b.x(), c.x()}))));
    const int cmax = std::min(w - 1, int(std::floor(std::max({a.x(), b.x(), c.x()}))));
    const int rmin = std::max(0, int(std::ceil(std::min({a.y(), b.y(), c.y()}))));
    const int rmax = std::min(h - 1, int(std::floor(std::max({a.y(), b.y(), c.y()}))));

    for (int r = rmin; r <= rmax; ++r) {
      for (int col = cmin; col <= cmax; ++col) {
        const double px = col, py = r;
        const double w0 = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) / area;
        const double w1 = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double iz = w0 * iz0 + w1 * iz1 + w2 * iz2;
        if (iz <= 0.0) continue;
        zbuf[size_t(r) * w + col].insert(1.0 / iz, part);
      }
    }
  }

  // Vertex test against the closest cover from a different part.
  std::vector<int> part_total(part_count, 0);
  std::vector<int> part_hidden(part_count, 0);
  for (int v = 0; v < n; ++v) {
    const int part = part_labels[v];
    part_total[part]++;
    if (!proj_ok[v]) continue;
    const long col = std::lround(proj[v].x());
    const long row = std::lround(proj[v].y());
    if (col < 0 || col >= w || row < 0 || row >= h) continue;
    const double other = zbuf[size_t(row) * w + col].min_other(part);
    if (other < vertices(v, 2) - depth_tolerance) part_hidden[part]++;
  }

  std::vector<uint8_t> part_occ(part_count, 0);
  for (int p = 0; p < part_count; ++p) {
    if (part_total[p] == 0) continue;
    // Strictly more than the threshold fraction.
    part_occ[p] = double(part_hidden[p]) > part_fraction * double(part_total[p]) ? 1 : 0;
  }
  return part_occ;
}

std::vector<uint8_t> combine_occlusion(const std::vector<uint8_t>& vertex_obj_occ,
                                       const std::vector<uint8_t>& part_self_occ,
                                       const std::vector<int>& part_labels) {
  if (vertex_obj_occ.size() != part_labels.size())
    throw Error(ErrorCode::DimensionMismatch, "occlusion mask / labels length mismatch");
  std::vector<uint8_t> occ(vertex_obj_occ.size(), 0);
  for (size_t v = 0; v < occ.size(); ++v) {
    const int part = part_labels[v];
    const bool self_occ = part >= 0 && part < int(part_self_occ.size()) && part_self_occ[part];
    occ[v] = (vertex_obj_occ[v] || self_occ) ? 1 : 0;
  }
  return occ;
}

}  // namespace physic
