#pragma once

/// Loss terms of the joint human-scene objective, each returning value and
/// analytic gradients for the optimized variables (per-human body
/// parameters and the shared scene scale). Nearest-neighbour matches and
/// active sets are computed in a separate match phase and held fixed inside
/// each evaluation, so gradients never differentiate through the matching.

#include "physic/body.hpp"
#include "physic/nn_grid.hpp"
#include "physic/types.hpp"
#include "physic/visibility.hpp"

namespace physic {

// ============================================================================
// Inputs
// ============================================================================

struct Keypoint {
  int id = 0;  // detector keypoint id (resolved through the template's map)
  double u = 0.0;
  double v = 0.0;
  double confidence = 0.0;  // in [0, 1]
};

struct Keypoints2D {
  std::vector<Keypoint> points;
};

struct LossWeights {
  double j2d = 10000.0;
  double d = 0.005;
  double c = 0.7;
  double i = 0.3;
  double reg = 45.0;
  double reg_occluded_multiplier = 3.0;
  double scale_reg = 1.0;
  double trans_reg = 0.1;
};

/// Frozen per-human observation state used by the losses.
struct HumanObservation {
  Keypoints2D keypoints;
  PixelMask mask;                 // this human's pixel mask
  std::vector<Vec3> human_points; // P_h, metric human points
  ContactVertexSet contacts;
  BodyParams init_params;
  MatX3 init_vertices;            // forward(init_params)
  Vec3 init_root = Vec3::Zero();  // regressed root at init
  VisibilityMasks vis;            // camera_facing frozen; occluded refreshed
};

struct ObjectiveContext {
  const PointCloud* scene = nullptr;        // P_s' at build scale, with normals
  const NearestPointGrid* grid = nullptr;
  CameraIntrinsics cam;
  double eps_active = 0.15;   // meters; gates the contact loss
  double eps_extract = 0.05;  // meters; contact-map extraction threshold
  RobustLossSpec rho_contact{-2.0, 0.05};
  RobustLossSpec rho_interp{-2.0, 0.05};
  double s_init = 1.0;
  bool brute_force_nn = false;  // benchmark switch: bypass the grid
  std::vector<HumanObservation> humans;
};

// ============================================================================
// Per-loss results and match structures
// ============================================================================

struct LossResult {
  double value = 0.0;
  ParamGrad grad;
  double d_scale = 0.0;  // gradient w.r.t. the scene scale
};

/// Fixed correspondence sets (vertex index, scene/human point index).
struct PairMatches {
  std::vector<int> from;
  std::vector<int> to;
};

struct DepthMatches {
  std::vector<int> cf_vertices;     // camera-facing vertex ids
  std::vector<int> vert_to_point;   // per cf vertex: nearest P_h index
  std::vector<int> point_to_vert;   // per P_h point: nearest cf vertex id
};

// ============================================================================
// Losses
// ============================================================================

/// Confidence-weighted squared reprojection error of the regressed joints
/// against 2D keypoints, in diagonal-normalized image coordinates.
LossResult loss_j2d(const BodyTemplate& tmpl, const BodyParams& params,
                    const BodyState& state, const CameraIntrinsics& cam,
                    const Keypoints2D& kp);

DepthMatches match_depth(const BodyState& state, const HumanObservation& obs);
LossResult eval_depth(const BodyTemplate& tmpl, const BodyParams& params,
                      const BodyState& state, const HumanObservation& obs,
                      const DepthMatches& matches);
/// Bidirectional Chamfer between the camera-facing vertices and P_h.
LossResult loss_depth(const BodyTemplate& tmpl, const BodyParams& params,
                      const BodyState& state, const HumanObservation& obs);

PairMatches match_contacts(const BodyState& state, const HumanObservation& obs,
                           const ObjectiveContext& ctx, double s_sc);
LossResult eval_contact(const BodyTemplate& tmpl, const BodyParams& params,
                        const BodyState& state, const ObjectiveContext& ctx,
                        const PairMatches& matches, double s_sc);
/// Robust attraction of active contact vertices to their nearest scene
/// points (active = closer than eps_active at the current scene scale).
LossResult loss_contact(const BodyTemplate& tmpl, const BodyParams& params,
                        const BodyState& state, const HumanObservation& obs,
                        const ObjectiveContext& ctx, double s_sc);

PairMatches match_interpenetration(const BodyState& state, const HumanObservation& obs,
                                   const ObjectiveContext& ctx, double s_sc);
LossResult eval_interpenetration(const BodyTemplate& tmpl, const BodyParams& params,
                                 const BodyState& state, const ObjectiveContext& ctx,
                                 const PairMatches& matches, double s_sc);
/// Robust penalty on non-occluded vertices lying on the back side of their
/// nearest scene point's normal.
LossResult loss_interpenetration(const BodyTemplate& tmpl, const BodyParams& params,
                                 const BodyState& state, const HumanObservation& obs,
                                 const ObjectiveContext& ctx, double s_sc);

/// Root-relative deviation from the initial vertices (occluded vertices
/// weighted up), plus weak scale and translation anchors.
LossResult loss_reg(const BodyTemplate& tmpl, const BodyParams& params,
                    const BodyState& state, const HumanObservation& obs,
                    const LossWeights& weights, double s_sc, double s_init);

// ============================================================================
// Total objective
// ============================================================================

struct OptimState {
  std::vector<BodyParams> humans;
  double s_sc = 1.0;

  void validate() const {
    if (humans.empty()) throw Error(ErrorCode::InvariantViolation, "no humans in state");
    if (!(s_sc > 0.0)) throw Error(ErrorCode::InvariantViolation, "scene scale must be > 0");
  }
};

struct TotalLossResult {
  double value = 0.0;
  std::vector<ParamGrad> human_grads;
  double d_scale = 0.0;
  // Individual weighted terms, for logging.
  double j2d = 0.0, d = 0.0, c = 0.0, i = 0.0, reg = 0.0;
};

/// Weighted sum of all terms over all humans with one shared scene scale.
TotalLossResult loss_total(const BodyTemplate& tmpl, const OptimState& state,
                           const ObjectiveContext& ctx, const LossWeights& weights);

// ============================================================================
// Contact extraction
// ============================================================================

struct ContactReport {
  std::vector<uint8_t> in_contact;
  std::vector<double> distances;  // exact nearest-scene distances, meters
  double threshold = 0.05;
};

/// Per-vertex binary contact map: in contact iff the exact distance to the
/// nearest scene point (at scale s_sc) is strictly below eps_extract.
ContactReport extract_contacts(const MatX3& vertices, const ObjectiveContext& ctx,
                               double s_sc);

}  // namespace physic
