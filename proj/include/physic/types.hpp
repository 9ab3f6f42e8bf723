#pragma once

/// Core value types shared by every module: camera model, rasters,
/// point clouds, planes, and the typed error used across the library.
///
/// Pixel convention: rasters are row-major, index = row * width + col.
/// Continuous image coordinates coincide with integer pixel indices,
/// i.e. the sample point of pixel (row r, col c) is exactly (u=c, v=r).

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace physic {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// ============================================================================
// Errors
// ============================================================================

enum class ErrorCode {
  NonPositiveDepth,
  DimensionMismatch,
  EmptySet,
  EmptyScene,
  DegenerateConfiguration,
  InsufficientOverlap,
  NoConsensus,
  TooFewPoints,
  InsufficientPixels,
  NonFiniteGradient,
  NonFiniteLoss,
  LineSearchFailure,
  CardinalityMismatch,
  ParseError,
  InvariantViolation,
  AlignmentMismatch,
  MissingComponent,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// ============================================================================
// Camera
// ============================================================================

/// Pinhole camera with principal point fixed at (width/2, height/2).
struct CameraIntrinsics {
  double fx = 0.0;  // focal length, pixels
  double fy = 0.0;
  int width = 0;  // image size, pixels
  int height = 0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
      throw Error(ErrorCode::InvariantViolation, "focal lengths must be positive");
    if (width < 1 || height < 1)
      throw Error(ErrorCode::InvariantViolation, "image dimensions must be >= 1");
  }

  double diagonal() const {
    return std::sqrt(double(width) * width + double(height) * height);
  }
};

// ============================================================================
// Rasters
// ============================================================================

/// Per-pixel metric depth with validity mask. Valid depths are finite and > 0.
struct DepthRaster {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, meters
  std::vector<uint8_t> valid;

  int size() const { return width * height; }
  bool is_valid(int r, int c) const { return valid[size_t(r) * width + c] != 0; }
  double at(int r, int c) const { return values[size_t(r) * width + c]; }

  static DepthRaster invalid_raster(int w, int h) {
    DepthRaster d;
    d.width = w;
    d.height = h;
    d.values.assign(size_t(w) * h, 0.0);
    d.valid.assign(size_t(w) * h, 0);
    return d;
  }
};

/// Pixel-aligned grid of 3D camera-frame points with validity mask.
struct PointMap {
  int width = 0;
  int height = 0;
  std::vector<Vec3> points;  // row-major
  std::vector<uint8_t> valid;

  int size() const { return width * height; }
  bool is_valid(int r, int c) const { return valid[size_t(r) * width + c] != 0; }
  const Vec3& at(int r, int c) const { return points[size_t(r) * width + c]; }
  Vec3& at(int r, int c) { return points[size_t(r) * width + c]; }

  static PointMap invalid_map(int w, int h) {
    PointMap pm;
    pm.width = w;
    pm.height = h;
    pm.points.assign(size_t(w) * h, Vec3::Zero());
    pm.valid.assign(size_t(w) * h, 0);
    return pm;
  }

  int valid_count() const {
    int n = 0;
    for (uint8_t v : valid) n += v != 0;
    return n;
  }
};

/// Binary pixel mask. inside[i] != 0 marks a pixel as belonging to the region.
struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> inside;

  bool is_inside(int r, int c) const {
    return r >= 0 && r < height && c >= 0 && c < width &&
           inside[size_t(r) * width + c] != 0;
  }

  static PixelMask filled(int w, int h, uint8_t value) {
    PixelMask m;
    m.width = w;
    m.height = h;
    m.inside.assign(size_t(w) * h, value);
    return m;
  }
};

// ============================================================================
// Point clouds and planes
// ============================================================================

/// Unordered 3D points with optional per-point unit normals.
/// `normals`/`normal_valid` are either empty or sized like `points`.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<uint8_t> normal_valid;

  size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
  bool normal_ok(size_t i) const {
    return has_normals() && normal_valid[i] != 0;
  }

  void append(const PointCloud& other);
};

/// Plane in Hessian form: n . p = d with |n| = 1.
struct Plane {
  Vec3 normal = Vec3::UnitY();
  double d = 0.0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - d; }
};

/// Axis-aligned bounding box.
struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool empty() const { return (max.array() < min.array()).any(); }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  Aabb inflated(double factor) const;

  static Aabb of(const std::vector<Vec3>& pts) {
    Aabb box;
    for (const Vec3& p : pts) box.extend(p);
    return box;
  }
};

// ============================================================================
// Small parameter records
// ============================================================================

/// Affine depth alignment: p_metric = s * p_rel + (0, 0, tz).
struct ScaleShift {
  double s = 1.0;   // unitless, > 0
  double tz = 0.0;  // meters

  Vec3 apply(const Vec3& p) const { return Vec3(s * p.x(), s * p.y(), s * p.z() + tz); }
};

/// Parameters of the general robust loss family (shape alpha, scale c).
/// alpha = 2 is the quadratic limit, alpha = -2 the Geman-McClure form.
struct RobustLossSpec {
  double alpha = -2.0;
  double c = 0.05;

  void validate() const {
    if (!(c > 0.0)) throw Error(ErrorCode::InvariantViolation, "robust loss scale c must be > 0");
  }
};

}  // namespace physic
