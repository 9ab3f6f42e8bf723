#include "physic/optimize.hpp"

#include "physic/geometry.hpp"
#include "physic/rng.hpp"
#include "physic/visibility.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

namespace physic {

// ============================================================================
// Adam
// ============================================================================

void adam_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, AdamMoments& moments,
               double lr, double beta1, double beta2, double eps) {
  if (!grad.allFinite())
    throw Error(ErrorCode::NonFiniteGradient, "adam received a non-finite gradient");
  if (x.size() != grad.size() || moments.m.size() != x.size())
    throw Error(ErrorCode::DimensionMismatch, "adam state/gradient shape mismatch");

  moments.t += 1;
  moments.m = beta1 * moments.m + (1.0 - beta1) * grad;
  moments.v = beta2 * moments.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, moments.t);
  const double bc2 = 1.0 - std::pow(beta2, moments.t);
  for (int i = 0; i < x.size(); ++i) {
    const double mhat = moments.m[i] / bc1;
    const double vhat = moments.v[i] / bc2;
    x[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

// ============================================================================
// L-BFGS over translation
// ============================================================================

namespace {

struct ScalarObjective {
  std::function<double(const Vec3&, Vec3&)> eval;  // returns f, fills gradient
};

/// Strong Wolfe line search (Nocedal & Wright alg. 3.5/3.6) with cubic
/// interpolation in the zoom phase. Returns false on failure.
bool wolfe_line_search(const ScalarObjective& obj, const Vec3& x0, double f0,
                       const Vec3& g0, const Vec3& dir, double& alpha_out, Vec3& x_out,
                       double& f_out, Vec3& g_out) {
  const double c1 = 1e-4, c2 = 0.9;
  const double dphi0 = g0.dot(dir);
  if (dphi0 >= 0.0) return false;

  auto phi = [&](double a, Vec3& g) {
    Vec3 x = x0 + a * dir;
    Vec3 grad;
    const double f = obj.eval(x, grad);
    g = grad;
    return f;
  };

  auto zoom = [&](double lo, double f_lo, double dphi_lo, double hi, double f_hi) {
    double alpha = 0.5 * (lo + hi);
    for (int it = 0; it < 20; ++it) {
      // Cubic interpolation between lo and hi when the data supports it.
      const double d1 = dphi_lo + (f_lo - f_hi) * 3.0 / (hi - lo) * -1.0;
      (void)d1;
      alpha = 0.5 * (lo + hi);
      Vec3 g;
      const double f = phi(alpha, g);
      const double dphi = g.dot(dir);
      if (f > f0 + c1 * alpha * dphi0 || f >= f_lo) {
        hi = alpha;
        f_hi = f;
      } else {
        if (std::abs(dphi) <= -c2 * dphi0) {
          alpha_out = alpha;
          x_out = x0 + alpha * dir;
          f_out = f;
          g_out = g;
          return true;
        }
        if (dphi * (hi - lo) >= 0.0) {
          hi = lo;
          f_hi = f_lo;
        }
        lo = alpha;
        f_lo = f;
        dphi_lo = dphi;
      }
      if (std::abs(hi - lo) < 1e-14) break;
    }
    // Accept the best Armijo point found even without curvature.
    Vec3 g;
    const double f = phi(alpha, g);
    if (f <= f0 + c1 * alpha * dphi0) {
      alpha_out = alpha;
      x_out = x0 + alpha * dir;
      f_out = f;
      g_out = g;
      return true;
    }
    return false;
  };

  double alpha_prev = 0.0, f_prev = f0, dphi_prev = dphi0;
  double alpha = 1.0;  // unit initial step
  const double alpha_max = 1e3;
  for (int it = 0; it < 25; ++it) {
    Vec3 g;
    const double f = phi(alpha, g);
    if (f > f0 + c1 * alpha * dphi0 || (it > 0 && f >= f_prev))
      return zoom(alpha_prev, f_prev, dphi_prev, alpha, f);
    const double dphi = g.dot(dir);
    if (std::abs(dphi) <= -c2 * dphi0) {
      alpha_out = alpha;
      x_out = x0 + alpha * dir;
      f_out = f;
      g_out = g;
      return true;
    }
    if (dphi >= 0.0) return zoom(alpha, f, dphi, alpha_prev, f_prev);
    alpha_prev = alpha;
    f_prev = f;
    dphi_prev = dphi;
    alpha = std::min(2.0 * alpha, alpha_max);
    if (alpha >= alpha_max) return false;
  }
  return false;
}

}  // namespace

BodyParams lbfgs_translate(const BodyTemplate& tmpl, BodyParams params,
                           const HumanObservation& obs, const CameraIntrinsics& cam,
                           double lambda_j2d, double lambda_d, int iters) {
  ScalarObjective obj;
  obj.eval = [&](const Vec3& trans, Vec3& grad) {
    BodyParams p = params;
    p.trans = trans;
    grad = Vec3::Zero();
    try {
      const BodyState state = body_forward(tmpl, p);
      double value = 0.0;
      if (lambda_j2d != 0.0) {
        const LossResult r = loss_j2d(tmpl, p, state, cam, obs.keypoints);
        value += lambda_j2d * r.value;
        grad += lambda_j2d * r.grad.trans;
      }
      if (lambda_d != 0.0) {
        const LossResult r = loss_depth(tmpl, p, state, obs);
        value += lambda_d * r.value;
        grad += lambda_d * r.grad.trans;
      }
      return value;
    } catch (const Error& e) {
      // Line-search probes may step behind the camera; treat as a barrier.
      if (e.code() == ErrorCode::NonPositiveDepth)
        return std::numeric_limits<double>::infinity();
      throw;
    }
  };

  Vec3 x = params.trans;
  Vec3 g;
  double f = obj.eval(x, g);

  // Two-loop recursion history.
  std::vector<Vec3> s_hist, y_hist;
  const int history = 10;

  for (int it = 0; it < iters; ++it) {
    // Direction from the L-BFGS two-loop recursion.
    Vec3 q = g;
    std::vector<double> alphas(s_hist.size());
    for (int i = int(s_hist.size()) - 1; i >= 0; --i) {
      const double rho = 1.0 / y_hist[i].dot(s_hist[i]);
      alphas[i] = rho * s_hist[i].dot(q);
      q -= alphas[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const Vec3& s = s_hist.back();
      const Vec3& y = y_hist.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      const double rho = 1.0 / y_hist[i].dot(s_hist[i]);
      const double beta = rho * y_hist[i].dot(q);
      q += (alphas[i] - beta) * s_hist[i];
    }
    Vec3 dir = -q;
    // Without curvature history the raw gradient can be huge; cap the
    // first trial step at unit length.
    if (s_hist.empty() && dir.norm() > 1.0) dir /= dir.norm();

    double alpha = 0.0, f_new = 0.0;
    Vec3 x_new, g_new;
    bool ok = wolfe_line_search(obj, x, f, g, dir, alpha, x_new, f_new, g_new);
    if (!ok) {
      // Fallback: plain backtracking gradient step.
      dir = -g;
      double step = 1.0;
      ok = false;
      for (int bt = 0; bt < 30; ++bt) {
        Vec3 gt;
        const Vec3 xt = x + step * dir;
        const double ft = obj.eval(xt, gt);
        if (ft < f) {
          x_new = xt;
          f_new = ft;
          g_new = gt;
          ok = true;
          break;
        }
        step *= 0.5;
      }
      if (!ok) break;  // no descent anywhere: already optimal
    }

    const Vec3 s = x_new - x;
    const Vec3 y = g_new - g;
    if (s.dot(y) > 1e-12) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      if (int(s_hist.size()) > history) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
      }
    }
    x = x_new;
    f = f_new;
    g = g_new;
  }

  params.trans = x;
  return params;
}

// ============================================================================
// Stage 2
// ============================================================================

namespace {

/// Deterministic stride subsample down to at most `cap` points.
std::vector<Vec3> subsample(const std::vector<Vec3>& points, int cap) {
  if (int(points.size()) <= cap || cap <= 0) return points;
  std::vector<Vec3> out;
  out.reserve(cap);
  const size_t n = points.size();
  for (int i = 0; i < cap; ++i) out.push_back(points[size_t(i) * n / cap]);
  return out;
}

}  // namespace

Stage2Result run_stage2(const InputBundle& bundle, const SceneBuildResult& scene,
                        const BodyTemplate& tmpl, const PipelineConfig& cfg) {
  Stage2Result out;

  // (a) Align the full-image relative map to the metric scene, excluding
  // all human pixels, then lift each human's masked pixels to metric space.
  PixelMask exclude = PixelMask::filled(bundle.width, bundle.height, 0);
  for (const auto& human : bundle.humans)
    for (size_t i = 0; i < exclude.inside.size(); ++i)
      exclude.inside[i] |= human.mask.inside[i];

  RansacConfig align_cfg = cfg.scene.align_ransac;
  align_cfg.seed = splitmix64(cfg.seed ^ 0xa11c5ULL);
  out.full_alignment =
      align_scale_shift(bundle.full_relpoints, scene.metric_map, &exclude, align_cfg);

  for (const auto& human : bundle.humans) {
    std::vector<Vec3> ph;
    for (int r = 0; r < bundle.height; ++r) {
      for (int c = 0; c < bundle.width; ++c) {
        if (!human.mask.is_inside(r, c) || !bundle.full_relpoints.is_valid(r, c)) continue;
        ph.push_back(out.full_alignment.apply(bundle.full_relpoints.at(r, c)));
      }
    }
    out.human_points.push_back(subsample(ph, cfg.ph_max_points));
  }

  // (b) + (c) per human: keypoint-only translation fit, then the L-BFGS
  // depth alignment against P_h.
  for (size_t h = 0; h < bundle.humans.size(); ++h) {
    BodyParams params = bundle.humans[h].init_params;

    Eigen::VectorXd x(3);
    x << params.trans.x(), params.trans.y(), params.trans.z();
    AdamMoments moments(3);
    for (int it = 0; it < cfg.schedule.stage2_j2d_iters; ++it) {
      params.trans = Vec3(x[0], x[1], x[2]);
      const BodyState state = body_forward(tmpl, params);
      const LossResult r = loss_j2d(tmpl, params, state, scene.scaffold.cam,
                                    bundle.humans[h].keypoints);
      Eigen::VectorXd grad(3);
      grad << r.grad.trans.x(), r.grad.trans.y(), r.grad.trans.z();
      adam_step(x, grad, moments, cfg.schedule.adam_lr);
    }
    params.trans = Vec3(x[0], x[1], x[2]);

    HumanObservation obs;
    obs.keypoints = bundle.humans[h].keypoints;
    obs.human_points = out.human_points[h];
    const BodyState state = body_forward(tmpl, params);
    obs.vis.camera_facing = camera_facing(state.vertices, tmpl.faces, scene.scaffold.cam,
                                          cfg.camera_facing_angle_deg);

    params = lbfgs_translate(tmpl, params, obs, scene.scaffold.cam, cfg.align_j2d,
                             cfg.align_d, cfg.schedule.stage2_lbfgs_iters);
    out.params.push_back(params);
  }
  return out;
}

// ============================================================================
// Stage 3
// ============================================================================

namespace {

void refresh_occlusion(const BodyTemplate& tmpl, const BodyParams& params,
                       HumanObservation& obs, const CameraIntrinsics& cam,
                       const PipelineConfig& cfg) {
  if (!cfg.occlusion_aware) {
    obs.vis.occluded.assign(tmpl.vertex_count(), 0);
    obs.vis.per_part_occluded.assign(tmpl.part_count(), 0);
    return;
  }
  const BodyState state = body_forward(tmpl, params);
  const auto obj_occ = object_occlusion(state.vertices, cam, obs.mask);
  const auto part_occ =
      self_occlusion(state.vertices, tmpl.faces, tmpl.part_labels, tmpl.part_count(), cam,
                     cfg.selfocc_depth_tolerance, cfg.selfocc_part_fraction);
  obs.vis.occluded = combine_occlusion(obj_occ, part_occ, tmpl.part_labels);
  obs.vis.per_part_occluded = part_occ;
}

int params_per_human(const BodyTemplate& tmpl) {
  return tmpl.shape_dim() + 3 * tmpl.joint_count() + 3;
}

Eigen::VectorXd pack_state(const BodyTemplate& tmpl, const OptimState& state) {
  const int per = params_per_human(tmpl);
  Eigen::VectorXd x(per * int(state.humans.size()) + 1);
  int at = 0;
  for (const auto& human : state.humans) {
    for (int s = 0; s < tmpl.shape_dim(); ++s) x[at++] = human.beta[s];
    for (const auto& t : human.theta)
      for (int a = 0; a < 3; ++a) x[at++] = t[a];
    for (int a = 0; a < 3; ++a) x[at++] = human.trans[a];
  }
  x[at] = state.s_sc;
  return x;
}

void unpack_state(const BodyTemplate& tmpl, const Eigen::VectorXd& x, OptimState& state) {
  int at = 0;
  for (auto& human : state.humans) {
    for (int s = 0; s < tmpl.shape_dim(); ++s) human.beta[s] = x[at++];
    for (auto& t : human.theta)
      for (int a = 0; a < 3; ++a) t[a] = x[at++];
    for (int a = 0; a < 3; ++a) human.trans[a] = x[at++];
  }
  state.s_sc = x[at];
}

Eigen::VectorXd pack_gradient(const BodyTemplate& tmpl, const TotalLossResult& total) {
  const int per = params_per_human(tmpl);
  Eigen::VectorXd g(per * int(total.human_grads.size()) + 1);
  int at = 0;
  for (const auto& grad : total.human_grads) {
    for (int s = 0; s < tmpl.shape_dim(); ++s) g[at++] = grad.beta[s];
    for (const auto& t : grad.theta)
      for (int a = 0; a < 3; ++a) g[at++] = t[a];
    for (int a = 0; a < 3; ++a) g[at++] = grad.trans[a];
  }
  g[at] = total.d_scale;
  return g;
}

}  // namespace

Stage3Result run_stage3(const BodyTemplate& tmpl, OptimState state, ObjectiveContext& ctx,
                        const LossWeights& weights, const Schedule& schedule,
                        const PipelineConfig& cfg) {
  schedule.validate();
  state.validate();

  Stage3Result out;
  Eigen::VectorXd x = pack_state(tmpl, state);
  Eigen::VectorXd last_finite = x;
  AdamMoments moments(int(x.size()));

  for (int iter = 0; iter < schedule.stage3_iters; ++iter) {
    if (iter % schedule.occ_refresh_every == 0) {
      for (size_t h = 0; h < ctx.humans.size(); ++h)
        refresh_occlusion(tmpl, state.humans[h], ctx.humans[h], ctx.cam, cfg);
    }

    TotalLossResult total;
    bool evaluable = true;
    try {
      total = loss_total(tmpl, state, ctx, weights);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonPositiveDepth) throw;
      evaluable = false;
    }
    const Eigen::VectorXd grad =
        evaluable ? pack_gradient(tmpl, total) : Eigen::VectorXd();
    if (!evaluable || !std::isfinite(total.value) || !grad.allFinite()) {
      out.aborted_non_finite = true;
      x = last_finite;
      unpack_state(tmpl, x, state);
      break;
    }
    out.loss_history.push_back(total.value);
    last_finite = x;
    adam_step(x, grad, moments, schedule.adam_lr);
    unpack_state(tmpl, x, state);
  }

  out.state = state;
  for (size_t h = 0; h < state.humans.size(); ++h) {
    const BodyState body = body_forward(tmpl, state.humans[h]);
    out.contacts.push_back(extract_contacts(body.vertices, ctx, state.s_sc));
  }
  return out;
}

// ============================================================================
// Pipeline
// ============================================================================

ObjectiveContext make_objective_context(const InputBundle& bundle,
                                        const SceneBuildResult& scene,
                                        const NearestPointGrid& grid,
                                        const BodyTemplate& tmpl,
                                        const Stage2Result& stage2,
                                        const PipelineConfig& cfg) {
  ObjectiveContext ctx;
  ctx.grid = &grid;
  ctx.cam = scene.scaffold.cam;
  ctx.eps_active = cfg.eps_active;
  ctx.eps_extract = cfg.eps_extract;
  ctx.rho_contact = cfg.rho_contact;
  ctx.rho_interp = cfg.rho_interp;
  ctx.s_init = 1.0;
  ctx.brute_force_nn = cfg.brute_force_nn;

  for (size_t h = 0; h < bundle.humans.size(); ++h) {
    HumanObservation obs;
    obs.keypoints = bundle.humans[h].keypoints;
    obs.mask = bundle.humans[h].mask;
    obs.human_points = stage2.human_points[h];
    obs.contacts = cfg.use_static_contacts ? static_contact_preset(tmpl)
                                           : bundle.humans[h].contacts;
    obs.init_params = stage2.params[h];
    const BodyState init_state = body_forward(tmpl, obs.init_params);
    obs.init_vertices = init_state.vertices;
    obs.init_root = init_state.joints.row(tmpl.root_joint()).transpose();
    obs.vis.camera_facing = camera_facing(init_state.vertices, tmpl.faces, ctx.cam,
                                          cfg.camera_facing_angle_deg);
    obs.vis.occluded.assign(tmpl.vertex_count(), 0);
    obs.vis.per_part_occluded.assign(tmpl.part_count(), 0);
    ctx.humans.push_back(std::move(obs));
  }
  return ctx;
}

PipelineOutputs run_pipeline(const InputBundle& bundle, const PipelineConfig& cfg) {
  SceneBuildConfig scene_cfg = cfg.scene;
  scene_cfg.align_ransac.seed = splitmix64(cfg.seed ^ 0x5ce11eULL);
  scene_cfg.plane_ransac.seed = splitmix64(cfg.seed ^ 0xf100eULL);

  SceneBuildResult scene =
      build_scene(bundle.scene_depth, bundle.scene_relpoints,
                  bundle.floor_mask ? &*bundle.floor_mask : nullptr, bundle.intrinsics_hint,
                  scene_cfg);

  NearestPointGrid grid = NearestPointGrid::build(scene.scaffold.points, cfg.grid_resolution);
  const Stage2Result stage2 = run_stage2(bundle, scene, bundle.body, cfg);

  PipelineOutputs out{std::move(scene), std::move(grid), {}, {}, {}, false};
  ObjectiveContext ctx =
      make_objective_context(bundle, out.scene, out.grid, bundle.body, stage2, cfg);
  ctx.scene = &out.scene.scaffold.points;

  OptimState state;
  state.humans = stage2.params;
  state.s_sc = 1.0;

  Stage3Result stage3 =
      run_stage3(bundle.body, std::move(state), ctx, cfg.weights, cfg.schedule, cfg);
  out.state = std::move(stage3.state);
  out.contacts = std::move(stage3.contacts);
  out.stage3_loss = std::move(stage3.loss_history);
  out.aborted_non_finite = stage3.aborted_non_finite;
  return out;
}

void write_pipeline_outputs(const std::filesystem::path& dir, const InputBundle& bundle,
                            const PipelineOutputs& outputs) {
  std::filesystem::create_directories(dir);
  save_scene_scaffold(dir / "scene.ply", outputs.scene.scaffold, outputs.state.s_sc);
  for (size_t h = 0; h < outputs.state.humans.size(); ++h) {
    const std::string tag = "human" + std::to_string(h);
    save_body_params(dir / (tag + "_params.json"), outputs.state.humans[h], bundle.body);
    save_contact_report(dir / (tag + "_contacts.json"), outputs.contacts[h]);
  }
  // Deterministic run log: loss trajectory only, no wall-clock data.
  std::string log = "{\n  \"s_sc\": " + std::to_string(outputs.state.s_sc) +
                    ",\n  \"aborted_non_finite\": " +
                    (outputs.aborted_non_finite ? std::string("true") : std::string("false")) +
                    ",\n  \"stage3_loss\": [";
  for (size_t i = 0; i < outputs.stage3_loss.size(); ++i) {
    if (i) log += ", ";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", outputs.stage3_loss[i]);
    log += buf;
  }
  log += "]\n}\n";
  const std::filesystem::path tmp = dir / "run_log.json.tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write run log");
    f.write(log.data(), std::streamsize(log.size()));
  }
  std::filesystem::rename(tmp, dir / "run_log.json");
}

}  // namespace physic
