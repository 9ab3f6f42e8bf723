#include "physic/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace physic {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyScene: return "EmptyScene";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::InsufficientPixels: return "InsufficientPixels";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::LineSearchFailure: return "LineSearchFailure";
    case ErrorCode::CardinalityMismatch: return "CardinalityMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::AlignmentMismatch: return "AlignmentMismatch";
    case ErrorCode::MissingComponent: return "MissingComponent";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

void PointCloud::append(const PointCloud& other) {
  const bool any_normals = has_normals() || other.has_normals();
  if (any_normals && !has_normals()) {
    normals.assign(points.size(), Vec3::Zero());
    normal_valid.assign(points.size(), 0);
  }
  points.insert(points.end(), other.points.begin(), other.points.end());
  if (any_normals) {
    if (other.has_normals()) {
      normals.insert(normals.end(), other.normals.begin(), other.normals.end());
      normal_valid.insert(normal_valid.end(), other.normal_valid.begin(),
                          other.normal_valid.end());
    } else {
      normals.resize(points.size(), Vec3::Zero());
      normal_valid.resize(points.size(), 0);
    }
  }
}

Aabb Aabb::inflated(double factor) const {
  Aabb out;
  const Vec3 c = center();
  const Vec3 half = 0.5 * factor * extent();
  out.min = c - half;
  out.max = c + half;
  return out;
}

// ============================================================================
// Projection
// ============================================================================

Vec2 project_point(const Vec3& p, const CameraIntrinsics& cam) {
  if (!(p.z() > 0.0))
    throw Error(ErrorCode::NonPositiveDepth, "point depth must be > 0 for projection");
  return Vec2(cam.fx * p.x() / p.z() + 0.5 * cam.width,
              cam.fy * p.y() / p.z() + 0.5 * cam.height);
}

std::vector<Vec2> project(const std::vector<Vec3>& points, const CameraIntrinsics& cam) {
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(project_point(p, cam));
  return out;
}

PointMap backproject(const DepthRaster& depth, const CameraIntrinsics& cam) {
  if (depth.width != cam.width || depth.height != cam.height)
    throw Error(ErrorCode::DimensionMismatch, "depth raster and camera dimensions differ");
  PointMap pm = PointMap::invalid_map(depth.width, depth.height);
  const double cx = 0.5 * cam.width;
  const double cy = 0.5 * cam.height;
  for (int r = 0; r < depth.height; ++r) {
    for (int c = 0; c < depth.width; ++c) {
      const size_t i = size_t(r) * depth.width + c;
      if (!depth.valid[i]) continue;
      const double z = depth.values[i];
      pm.points[i] = Vec3((c - cx) * z / cam.fx, (r - cy) * z / cam.fy, z);
      pm.valid[i] = 1;
    }
  }
  return pm;
}

// ============================================================================
// Grid normals
// ============================================================================

PointCloud estimate_gridnormals(const PointMap& pm) {
  PointCloud cloud;
  const int w = pm.width, h = pm.height;

  // Picks the finite-difference neighbour along +axis, falling back to -axis
  // at borders / invalid pixels. Returns false if no valid neighbour exists.
  auto diff = [&](int r, int c, int dr, int dc, Vec3& out) {
    const Vec3& p = pm.at(r, c);
    int r2 = r + dr, c2 = c + dc;
    if (r2 >= 0 && r2 < h && c2 >= 0 && c2 < w && pm.is_valid(r2, c2)) {
      out = pm.at(r2, c2) - p;
      return true;
    }
    r2 = r - dr;
    c2 = c - dc;
    if (r2 >= 0 && r2 < h && c2 >= 0 && c2 < w && pm.is_valid(r2, c2)) {
      out = p - pm.at(r2, c2);
      return true;
    }
    return false;
  };

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!pm.is_valid(r, c)) continue;
      const Vec3& p = pm.at(r, c);
      cloud.points.push_back(p);
      cloud.normals.push_back(Vec3::Zero());
      cloud.normal_valid.push_back(0);

      Vec3 du, dv;
      if (!diff(r, c, 0, 1, du) || !diff(r, c, 1, 0, dv)) continue;
      Vec3 n = du.cross(dv);
      const double len = n.norm();
      if (len < 1e-12) continue;  // collinear stencil
      n /= len;
      if (n.dot(p) > 0.0) n = -n;  // face the camera
      cloud.normals.back() = n;
      cloud.normal_valid.back() = 1;
    }
  }
  return cloud;
}

// ============================================================================
// Chamfer distance
// ============================================================================

namespace {

double directed_sq_sum(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  double total = 0.0;
  for (const Vec3& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : to) {
      const double d = (p - q).squaredNorm();
      if (d < best) best = d;
    }
    total += best;
  }
  return total;
}

}  // namespace

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty())
    throw Error(ErrorCode::EmptySet, "chamfer requires two nonempty point sets");
  return directed_sq_sum(a, b) + directed_sq_sum(b, a);
}

// ============================================================================
// Robust loss family
// ============================================================================

double robust_rho(double x, const RobustLossSpec& spec) {
  spec.validate();
  const double y = x / spec.c;
  const double y2 = y * y;
  const double a = spec.alpha;
  if (a == 2.0) return 0.5 * y2;
  if (a == 0.0) return std::log(0.5 * y2 + 1.0);
  const double b = std::abs(a - 2.0);
  return (b / a) * (std::pow(y2 / b + 1.0, 0.5 * a) - 1.0);
}

double robust_rho_deriv(double x, const RobustLossSpec& spec) {
  spec.validate();
  const double y = x / spec.c;
  const double a = spec.alpha;
  if (a == 2.0) return y / spec.c;
  if (a == 0.0) return (y / spec.c) / (0.5 * y * y + 1.0);
  const double b = std::abs(a - 2.0);
  return (y / spec.c) * std::pow(y * y / b + 1.0, 0.5 * a - 1.0);
}

// ============================================================================
// Procrustes alignment
// ============================================================================

ProcrustesResult procrustes_align(const std::vector<Vec3>& pred,
                                  const std::vector<Vec3>& gt) {
  if (pred.size() != gt.size())
    throw Error(ErrorCode::CardinalityMismatch, "joint sets must have equal size");
  const size_t n = pred.size();
  if (n < 3)
    throw Error(ErrorCode::TooFewPoints, "procrustes alignment needs >= 3 points");

  Vec3 mean_p = Vec3::Zero(), mean_g = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mean_p += pred[i];
    mean_g += gt[i];
  }
  mean_p /= double(n);
  mean_g /= double(n);

  Mat3 cov = Mat3::Zero();
  double scale_ref = 0.0;
  for (size_t i = 0; i < n; ++i) {
    cov += (gt[i] - mean_g) * (pred[i] - mean_p).transpose();
    scale_ref += (pred[i] - mean_p).squaredNorm();
  }

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  // Rank < 2 (collinear or coincident points) leaves the rotation undetermined.
  const double tol = 1e-9 * std::max(sv(0), 1e-12) + 1e-15 * scale_ref;
  if (sv(1) <= tol)
    throw Error(ErrorCode::DegenerateConfiguration, "rank-deficient covariance");

  Mat3 flip = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) flip(2, 2) = -1.0;
  const Mat3 rot = svd.matrixU() * flip * svd.matrixV().transpose();
  const Vec3 trans = mean_g - rot * mean_p;

  double residual = 0.0;
  for (size_t i = 0; i < n; ++i) residual += (rot * pred[i] + trans - gt[i]).norm();
  residual /= double(n);

  ProcrustesResult out;
  out.rotation = rot;
  out.translation = trans;
  out.residual_mm = residual * 1000.0;
  return out;
}

}  // namespace physic
