#pragma once

/// Generic parametric articulated body: shape blending, axis-angle
/// kinematic chain, linear blend skinning, joint regression, and the
/// analytic backward pass that maps vertex/joint gradients to parameter
/// gradients. Ships a procedural capsule humanoid so the pipeline and all
/// tests run without any licensed body asset.

#include "physic/types.hpp"

#include <map>

namespace physic {

// ============================================================================
// Template and parameters
// ============================================================================

struct BodyTemplate {
  MatX3 vertices;                      // N x 3 rest vertices, meters
  std::vector<std::array<int, 3>> faces;
  MatX3 rest_joints;                   // J x 3 rest joint positions
  std::vector<int> parents;            // parent per joint, -1 for the root
  Eigen::MatrixXd skinning;            // N x J, rows sum to 1
  std::vector<MatX3> shape_dirs;       // S matrices of N x 3 displacements
  Eigen::MatrixXd joint_regressor;     // J x N
  std::vector<int> part_labels;        // N, part id per vertex
  std::vector<std::string> part_names; // part id -> name
  std::vector<int> hand_joints;        // joint ids owned by theta_hand
  std::map<int, int> keypoint_map;     // 2D detector keypoint id -> joint id

  int vertex_count() const { return int(vertices.rows()); }
  int joint_count() const { return int(rest_joints.rows()); }
  int shape_dim() const { return int(shape_dirs.size()); }
  int part_count() const { return int(part_names.size()); }
  int root_joint() const;
  bool is_hand_joint(int j) const;

  /// Checks every structural invariant (skinning row sums, acyclic single
  /// root, labels in range, ...). Throws InvariantViolation.
  void validate() const;
};

struct BodyParams {
  Eigen::VectorXd beta;      // S shape coefficients
  std::vector<Vec3> theta;   // axis-angle per joint (body + hand)
  Vec3 trans = Vec3::Zero(); // global translation, meters

  static BodyParams zero(const BodyTemplate& tmpl);
};

/// Gradient of a scalar loss with respect to BodyParams; mirrors its layout.
struct ParamGrad {
  Eigen::VectorXd beta;
  std::vector<Vec3> theta;
  Vec3 trans = Vec3::Zero();

  static ParamGrad zero(const BodyTemplate& tmpl);
  ParamGrad& operator+=(const ParamGrad& other);
  ParamGrad& scale(double k);
  bool all_finite() const;
};

struct ContactVertexSet {
  enum class Source { Predicted, StaticPreset };
  std::vector<int> indices;
  Source source = Source::Predicted;
};

// ============================================================================
// Forward / backward
// ============================================================================

/// Forward pass output plus the intermediates the backward pass needs.
struct BodyState {
  MatX3 vertices;     // N x 3 posed vertices (world)
  MatX3 joints;       // J x 3 regressed joints from posed vertices
  MatX3 shaped;       // N x 3 shaped template (pre-pose)
  MatX3 rest_joints;  // J x 3 rest joints regressed from shaped template
  std::vector<Mat3> world_rot;  // per joint
  std::vector<Vec3> world_pos;
  std::vector<Mat3> local_rot;
};

/// Shape blend + kinematic chain + linear blend skinning + global
/// translation; joints are regressed from the posed vertices.
BodyState body_forward(const BodyTemplate& tmpl, const BodyParams& params);

/// Analytic reverse pass: folds dL/dvertices (N x 3) and optionally
/// dL/djoints (J x 3, regressed-joint gradient) into parameter gradients.
ParamGrad body_backward(const BodyTemplate& tmpl, const BodyParams& params,
                        const BodyState& state, const MatX3& d_vertices,
                        const MatX3* d_joints = nullptr);

/// Rotation matrix of an axis-angle vector (Rodrigues).
Mat3 rodrigues(const Vec3& axis_angle);

/// Derivative of the rotation matrix w.r.t. each axis-angle component.
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle);

// ============================================================================
// Synthetic humanoid and presets
// ============================================================================

namespace parts {
// Part ids of the synthetic humanoid.
enum : int {
  Head = 0, Torso, Pelvis, LeftArm, RightArm, LeftLeg, RightLeg,
  LeftFoot, RightFoot, Hands, Count
};
}  // namespace parts

/// Procedural capsule-limb humanoid: 22 body joints + 2 hand stubs,
/// ~2000 vertices, 10 parts, 2 shape dimensions (height, girth).
/// `seed` jitters the surface sampling deterministically.
BodyTemplate make_synthetic_humanoid(uint64_t seed = 0);

/// Small articulated test body (5 joints, a few dozen vertices) for cheap
/// finite-difference checks.
BodyTemplate make_toy_body();

/// Predefined static contact regions: feet, pelvis/bottom, and the back
/// side of the torso.
ContactVertexSet static_contact_preset(const BodyTemplate& tmpl);

}  // namespace physic
