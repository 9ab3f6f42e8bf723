#include "physic/objective.hpp"

#include "physic/geometry.hpp"
#include "physic/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace physic {

namespace {

/// Nearest scene point for a world-space query at scene scale s_sc.
/// Uses the precomputed grid unless the context asks for brute force.
NearestPointGrid::QueryResult nearest_scene(const ObjectiveContext& ctx, const Vec3& q,
                                            double s_sc) {
  if (!ctx.brute_force_nn) return ctx.grid->query(q, s_sc);
  NearestPointGrid::QueryResult out;
  double best = std::numeric_limits<double>::infinity();
  const auto& pts = ctx.scene->points;
  for (int i = 0; i < int(pts.size()); ++i) {
    const double d = (q - s_sc * pts[i]).squaredNorm();
    if (d < best) {
      best = d;
      out.index = i;
    }
  }
  out.distance = std::sqrt(best);
  return out;
}

}  // namespace

// ============================================================================
// 2D joint reprojection
// ============================================================================

LossResult loss_j2d(const BodyTemplate& tmpl, const BodyParams& params,
                    const BodyState& state, const CameraIntrinsics& cam,
                    const Keypoints2D& kp) {
  LossResult out;
  const double diag = cam.diagonal();
  MatX3 d_joints = MatX3::Zero(tmpl.joint_count(), 3);

  for (const Keypoint& k : kp.points) {
    if (k.confidence <= 0.0) continue;
    const auto it = tmpl.keypoint_map.find(k.id);
    if (it == tmpl.keypoint_map.end()) continue;
    const int j = it->second;
    const Vec3 p = state.joints.row(j).transpose();
    if (!(p.z() > 0.0))
      throw Error(ErrorCode::NonPositiveDepth, "regressed joint behind the camera");

    const double u = cam.fx * p.x() / p.z() + 0.5 * cam.width;
    const double v = cam.fy * p.y() / p.z() + 0.5 * cam.height;
    const double ru = (u - k.u) / diag;
    const double rv = (v - k.v) / diag;
    out.value += k.confidence * (ru * ru + rv * rv);

    const double du = 2.0 * k.confidence * ru / diag;
    const double dv = 2.0 * k.confidence * rv / diag;
    d_joints(j, 0) += du * cam.fx / p.z();
    d_joints(j, 1) += dv * cam.fy / p.z();
    d_joints(j, 2) += -du * cam.fx * p.x() / (p.z() * p.z()) -
                      dv * cam.fy * p.y() / (p.z() * p.z());
  }

  const MatX3 zeros = MatX3::Zero(tmpl.vertex_count(), 3);
  out.grad = body_backward(tmpl, params, state, zeros, &d_joints);
  return out;
}

// ============================================================================
// Depth alignment (Chamfer to the human points)
// ============================================================================

DepthMatches match_depth(const BodyState& state, const HumanObservation& obs) {
  DepthMatches m;
  for (int v = 0; v < int(state.vertices.rows()); ++v)
    if (obs.vis.camera_facing[v]) m.cf_vertices.push_back(v);
  if (m.cf_vertices.empty())
    throw Error(ErrorCode::EmptySet, "no camera-facing vertices for the depth loss");
  if (obs.human_points.empty())
    throw Error(ErrorCode::EmptySet, "no human points for the depth loss");

  BucketIndex point_index(obs.human_points);
  m.vert_to_point.resize(m.cf_vertices.size());
  std::vector<Vec3> cf_positions(m.cf_vertices.size());
  for (size_t i = 0; i < m.cf_vertices.size(); ++i) {
    cf_positions[i] = state.vertices.row(m.cf_vertices[i]).transpose();
    m.vert_to_point[i] = point_index.nearest(cf_positions[i]).first;
  }

  BucketIndex vert_index(cf_positions);
  m.point_to_vert.resize(obs.human_points.size());
  for (size_t p = 0; p < obs.human_points.size(); ++p)
    m.point_to_vert[p] = vert_index.nearest(obs.human_points[p]).first;
  return m;
}

LossResult eval_depth(const BodyTemplate& tmpl, const BodyParams& params,
                      const BodyState& state, const HumanObservation& obs,
                      const DepthMatches& matches) {
  LossResult out;
  MatX3 d_vertices = MatX3::Zero(tmpl.vertex_count(), 3);

  for (size_t i = 0; i < matches.cf_vertices.size(); ++i) {
    const int v = matches.cf_vertices[i];
    const Vec3 diff = Vec3(state.vertices.row(v).transpose()) -
                      obs.human_points[matches.vert_to_point[i]];
    out.value += diff.squaredNorm();
    d_vertices.row(v) += 2.0 * diff.transpose();
  }
  for (size_t p = 0; p < obs.human_points.size(); ++p) {
    const int v = matches.cf_vertices[matches.point_to_vert[p]];
    const Vec3 diff = Vec3(state.vertices.row(v).transpose()) - obs.human_points[p];
    out.value += diff.squaredNorm();
    d_vertices.row(v) += 2.0 * diff.transpose();
  }

  out.grad = body_backward(tmpl, params, state, d_vertices);
  return out;
}

LossResult loss_depth(const BodyTemplate& tmpl, const BodyParams& params,
                      const BodyState& state, const HumanObservation& obs) {
  return eval_depth(tmpl, params, state, obs, match_depth(state, obs));
}

// ============================================================================
// Contact attraction
// ============================================================================

PairMatches match_contacts(const BodyState& state, const HumanObservation& obs,
                           const ObjectiveContext& ctx, double s_sc) {
  PairMatches m;
  for (int v : obs.contacts.indices) {
    const Vec3 pos = state.vertices.row(v).transpose();
    const auto nn = nearest_scene(ctx, pos, s_sc);
    if (nn.index < 0) continue;
    if (nn.distance * nn.distance < ctx.eps_active * ctx.eps_active) {
      m.from.push_back(v);
      m.to.push_back(nn.index);
    }
  }
  return m;
}

LossResult eval_contact(const BodyTemplate& tmpl, const BodyParams& params,
                        const BodyState& state, const ObjectiveContext& ctx,
                        const PairMatches& matches, double s_sc) {
  LossResult out;
  MatX3 d_vertices = MatX3::Zero(tmpl.vertex_count(), 3);

  for (size_t i = 0; i < matches.from.size(); ++i) {
    const int v = matches.from[i];
    const Vec3 scene_point = ctx.scene->points[matches.to[i]];
    const Vec3 diff = Vec3(state.vertices.row(v).transpose()) - s_sc * scene_point;
    const double x = diff.squaredNorm();
    out.value += robust_rho(x, ctx.rho_contact);
    const double dr = robust_rho_deriv(x, ctx.rho_contact);
    d_vertices.row(v) += (dr * 2.0 * diff).transpose();
    out.d_scale += dr * (-2.0 * diff.dot(scene_point));
  }

  out.grad = body_backward(tmpl, params, state, d_vertices);
  return out;
}

LossResult loss_contact(const BodyTemplate& tmpl, const BodyParams& params,
                        const BodyState& state, const HumanObservation& obs,
                        const ObjectiveContext& ctx, double s_sc) {
  return eval_contact(tmpl, params, state, ctx, match_contacts(state, obs, ctx, s_sc), s_sc);
}

// ============================================================================
// Interpenetration
// ============================================================================

PairMatches match_interpenetration(const BodyState& state, const HumanObservation& obs,
                                   const ObjectiveContext& ctx, double s_sc) {
  PairMatches m;
  const bool have_occlusion = !obs.vis.occluded.empty();
  for (int v = 0; v < int(state.vertices.rows()); ++v) {
    if (have_occlusion && obs.vis.occluded[v]) continue;
    const Vec3 pos = state.vertices.row(v).transpose();
    const auto nn = nearest_scene(ctx, pos, s_sc);
    if (nn.index < 0 || !ctx.scene->normal_ok(nn.index)) continue;
    const Vec3 scene_point = s_sc * ctx.scene->points[nn.index];
    if (ctx.scene->normals[nn.index].dot(pos - scene_point) < 0.0) {
      m.from.push_back(v);
      m.to.push_back(nn.index);
    }
  }
  return m;
}

LossResult eval_interpenetration(const BodyTemplate& tmpl, const BodyParams& params,
                                 const BodyState& state, const ObjectiveContext& ctx,
                                 const PairMatches& matches, double s_sc) {
  LossResult out;
  MatX3 d_vertices = MatX3::Zero(tmpl.vertex_count(), 3);

  for (size_t i = 0; i < matches.from.size(); ++i) {
    const int v = matches.from[i];
    const Vec3 scene_point = ctx.scene->points[matches.to[i]];
    const Vec3 diff = Vec3(state.vertices.row(v).transpose()) - s_sc * scene_point;
    const double x = diff.squaredNorm();
    out.value += robust_rho(x, ctx.rho_interp);
    const double dr = robust_rho_deriv(x, ctx.rho_interp);
    d_vertices.row(v) += (dr * 2.0 * diff).transpose();
    out.d_scale += dr * (-2.0 * diff.dot(scene_point));
  }

  out.grad = body_backward(tmpl, params, state, d_vertices);
  return out;
}

LossResult loss_interpenetration(const BodyTemplate& tmpl, const BodyParams& params,
                                 const BodyState& state, const HumanObservation& obs,
                                 const ObjectiveContext& ctx, double s_sc) {
  return eval_interpenetration(tmpl, params, state, ctx,
                               match_interpenetration(state, obs, ctx, s_sc), s_sc);
}

// ============================================================================
// Regularization
// ============================================================================

LossResult loss_reg(const BodyTemplate& tmpl, const BodyParams& params,
                    const BodyState& state, const HumanObservation& obs,
                    const LossWeights& weights, double s_sc, double s_init) {
  LossResult out;
  const int root = tmpl.root_joint();
  const Vec3 cur_root = state.joints.row(root).transpose();

  MatX3 d_vertices = MatX3::Zero(tmpl.vertex_count(), 3);
  MatX3 d_joints = MatX3::Zero(tmpl.joint_count(), 3);
  Vec3 root_grad_sum = Vec3::Zero();

  const bool have_occ = !obs.vis.occluded.empty();
  for (int v = 0; v < tmpl.vertex_count(); ++v) {
    const double w = (have_occ && obs.vis.occluded[v]) ? weights.reg_occluded_multiplier : 1.0;
    const Vec3 residual = (Vec3(state.vertices.row(v).transpose()) - cur_root) -
                          (Vec3(obs.init_vertices.row(v).transpose()) - obs.init_root);
    out.value += w * residual.squaredNorm();
    const Vec3 g = 2.0 * w * residual;
    d_vertices.row(v) += g.transpose();
    root_grad_sum += g;
  }
  d_joints.row(root) -= root_grad_sum.transpose();

  out.grad = body_backward(tmpl, params, state, d_vertices, &d_joints);

  // Weak anchors on scene scale and global translation.
  out.value += weights.scale_reg * (s_sc - s_init) * (s_sc - s_init);
  out.d_scale += 2.0 * weights.scale_reg * (s_sc - s_init);
  const Vec3 dt = params.trans - obs.init_params.trans;
  out.value += weights.trans_reg * dt.squaredNorm();
  out.grad.trans += 2.0 * weights.trans_reg * dt;
  return out;
}

// ============================================================================
// Total objective
// ============================================================================

TotalLossResult loss_total(const BodyTemplate& tmpl, const OptimState& state,
                           const ObjectiveContext& ctx, const LossWeights& weights) {
  state.validate();
  if (state.humans.size() != ctx.humans.size())
    throw Error(ErrorCode::CardinalityMismatch, "state and context human counts differ");

  TotalLossResult total;
  total.human_grads.reserve(state.humans.size());

  for (size_t h = 0; h < state.humans.size(); ++h) {
    const BodyParams& params = state.humans[h];
    const HumanObservation& obs = ctx.humans[h];
    const BodyState body = body_forward(tmpl, params);

    ParamGrad grad = ParamGrad::zero(tmpl);
    auto accumulate = [&](const LossResult& r, double weight, double& slot) {
      slot += weight * r.value;
      total.value += weight * r.value;
      ParamGrad g = r.grad;
      g.scale(weight);
      grad += g;
      total.d_scale += weight * r.d_scale;
    };

    if (weights.j2d != 0.0)
      accumulate(loss_j2d(tmpl, params, body, ctx.cam, obs.keypoints), weights.j2d, total.j2d);
    if (weights.d != 0.0)
      accumulate(loss_depth(tmpl, params, body, obs), weights.d, total.d);
    if (weights.c != 0.0)
      accumulate(loss_contact(tmpl, params, body, obs, ctx, state.s_sc), weights.c, total.c);
    if (weights.i != 0.0)
      accumulate(loss_interpenetration(tmpl, params, body, obs, ctx, state.s_sc), weights.i,
                 total.i);
    if (weights.reg != 0.0)
      accumulate(loss_reg(tmpl, params, body, obs, weights, state.s_sc, ctx.s_init),
                 weights.reg, total.reg);

    total.human_grads.push_back(std::move(grad));
  }
  return total;
}

// ============================================================================
// Contact extraction
// ============================================================================

ContactReport extract_contacts(const MatX3& vertices, const ObjectiveContext& ctx,
                               double s_sc) {
  ContactReport report;
  report.threshold = ctx.eps_extract;
  const int n = int(vertices.rows());
  report.in_contact.resize(n);
  report.distances.resize(n);

  // Extraction is a one-shot output; use exact nearest neighbours.
  BucketIndex index(ctx.scene->points);
  for (int v = 0; v < n; ++v) {
    const auto [idx, sq] = index.nearest(vertices.row(v).transpose(), s_sc);
    (void)idx;
    report.distances[v] = std::sqrt(sq);
    report.in_contact[v] = report.distances[v] < ctx.eps_extract ? 1 : 0;
  }
  return report;
}

}  // namespace physic
