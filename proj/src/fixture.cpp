#include "physic/fixture.hpp"

#include "physic/geometry.hpp"
#include "physic/rng.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace physic {

// ============================================================================
// Analytic scene geometry
// ============================================================================

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Hit {
  double depth = kInf;
  int surface = -1;  // 0 floor, 1 wall, 2+k box k
};

Hit ray_hit(const SceneGeometry& geo, const Vec3& dir) {
  Hit hit;
  // Floor plane y = floor_y (camera at origin, +y down).
  if (dir.y() > 1e-12) {
    const double t = geo.floor_y / dir.y();
    if (t > 0 && t < hit.depth) hit = {t, 0};
  }
  // Back wall z = wall_z.
  {
    const double t = geo.wall_z;  // dir.z == 1
    if (t > 0 && t < hit.depth) hit = {t, 1};
  }
  // Boxes (slab method).
  for (size_t b = 0; b < geo.boxes.size(); ++b) {
    const Aabb& box = geo.boxes[b];
    double t0 = 0.0, t1 = kInf;
    bool ok = true;
    for (int a = 0; a < 3 && ok; ++a) {
      if (std::abs(dir[a]) < 1e-12) {
        if (0.0 < box.min[a] || 0.0 > box.max[a]) ok = false;
        continue;
      }
      double ta = box.min[a] / dir[a];
      double tb = box.max[a] / dir[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) ok = false;
    }
    if (ok && t0 > 1e-9 && t0 < hit.depth) hit = {t0, 2 + int(b)};
  }
  return hit;
}

double box_surface_distance(const Aabb& box, const Vec3& p) {
  const Vec3 clamped = p.cwiseMax(box.min).cwiseMin(box.max);
  const double outside = (p - clamped).norm();
  if (outside > 0.0) return outside;
  // Inside: distance to the closest face.
  double best = kInf;
  for (int a = 0; a < 3; ++a)
    best = std::min({best, p[a] - box.min[a], box.max[a] - p[a]});
  return best;
}

}  // namespace

double ray_depth(const SceneGeometry& geo, const Vec3& dir) { return ray_hit(geo, dir).depth; }

double surface_distance(const SceneGeometry& geo, const Vec3& p) {
  double best = std::abs(p.y() - geo.floor_y);
  best = std::min(best, std::abs(p.z() - geo.wall_z));
  for (const Aabb& box : geo.boxes) best = std::min(best, box_surface_distance(box, p));
  return best;
}

DepthRaster render_scene_depth(const SceneGeometry& geo, const CameraIntrinsics& cam) {
  DepthRaster out = DepthRaster::invalid_raster(cam.width, cam.height);
  for (int r = 0; r < cam.height; ++r) {
    for (int c = 0; c < cam.width; ++c) {
      const Vec3 dir((c - 0.5 * cam.width) / cam.fx, (r - 0.5 * cam.height) / cam.fy, 1.0);
      const double depth = ray_depth(geo, dir);
      if (std::isfinite(depth)) {
        out.values[size_t(r) * cam.width + c] = depth;
        out.valid[size_t(r) * cam.width + c] = 1;
      }
    }
  }
  return out;
}

std::vector<double> render_mesh_depth(const MatX3& vertices,
                                      const std::vector<std::array<int, 3>>& faces,
                                      const CameraIntrinsics& cam) {
  const int w = cam.width, h = cam.height;
  std::vector<double> depth(size_t(w) * h, kInf);

  const int n = int(vertices.rows());
  std::vector<Vec2> proj(n);
  std::vector<uint8_t> ok(n, 0);
  for (int v = 0; v < n; ++v) {
    const double z = vertices(v, 2);
    if (!(z > 1e-9)) continue;
    proj[v] = Vec2(cam.fx * vertices(v, 0) / z + 0.5 * w, cam.fy * vertices(v, 1) / z + 0.5 * h);
    ok[v] = 1;
  }

  for (const auto& f : faces) {
    if (!ok[f[0]] || !ok[f[1]] || !ok[f[2]]) continue;
    const Vec2 &a = proj[f[0]], &b = proj[f[1]], &c = proj[f[2]];
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (std::abs(area) < 1e-12) continue;
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
        double& slot = depth[size_t(r) * w + col];
        slot = std::min(slot, 1.0 / iz);
      }
    }
  }
  return depth;
}

// ============================================================================
// Fixture synthesis
// ============================================================================

FixtureKind fixture_kind_from_string(const std::string& name) {
  if (name == "standing") return FixtureKind::Standing;
  if (name == "seated") return FixtureKind::Seated;
  if (name == "occluded-lower") return FixtureKind::OccludedLower;
  if (name == "multi-human") return FixtureKind::MultiHuman;
  throw Error(ErrorCode::ParseError, "unknown fixture kind '" + name + "'");
}

std::string fixture_kind_name(FixtureKind kind) {
  switch (kind) {
    case FixtureKind::Standing: return "standing";
    case FixtureKind::Seated: return "seated";
    case FixtureKind::OccludedLower: return "occluded-lower";
    case FixtureKind::MultiHuman: return "multi-human";
  }
  return "?";
}

namespace {

Vec3 axis_angle_of(const Mat3& rot) {
  const Eigen::AngleAxisd aa(rot);
  return aa.angle() * aa.axis();
}

/// GT pose for one human. The template is y-up facing +Z; the root
/// rotation flips it into the y-down camera frame facing the camera.
BodyParams make_gt_params(const BodyTemplate& tmpl, FixtureKind kind, double yaw, Rng& rng) {
  BodyParams params = BodyParams::zero(tmpl);
  const Mat3 flip = Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
  const Mat3 spin = Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
  params.theta[0] = axis_angle_of(flip * spin);

  // Arms down from the T-pose.
  params.theta[16] = Vec3(0, 0, -1.1);  // l_shoulder
  params.theta[17] = Vec3(0, 0, 1.1);   // r_shoulder

  if (kind == FixtureKind::Seated) {
    params.theta[1] = Vec3(-M_PI / 2, 0, 0);  // hips flex forward
    params.theta[2] = Vec3(-M_PI / 2, 0, 0);
    params.theta[4] = Vec3(M_PI / 2, 0, 0);  // knees back down
    params.theta[5] = Vec3(M_PI / 2, 0, 0);
  }

  // Small natural variation.
  params.theta[9] += Vec3(0.05 * rng.normal(), 0.05 * rng.normal(), 0.0);
  params.beta[0] = 0.3 * rng.normal();
  params.beta[1] = 0.3 * rng.normal();
  return params;
}

BodyParams perturb_params(const BodyParams& gt, const BodyTemplate& tmpl, Rng& rng) {
  BodyParams init = gt;
  // Translation offset of fixed 0.3 m magnitude in a random direction.
  Vec3 dir(rng.normal(), rng.normal(), rng.normal());
  if (dir.norm() < 1e-9) dir = Vec3::UnitX();
  init.trans += 0.3 * dir.normalized();
  // Per-joint axis-angle noise up to 0.15 rad per component, root excluded
  // so the body keeps its overall orientation.
  for (int j = 0; j < tmpl.joint_count(); ++j) {
    if (tmpl.parents[j] < 0) continue;
    for (int a = 0; a < 3; ++a) init.theta[j][a] += rng.uniform(-0.15, 0.15);
  }
  init.beta += 0.2 * Eigen::Vector2d(rng.normal(), rng.normal()).head(tmpl.shape_dim());
  return init;
}

struct PlacedHuman {
  BodyParams params;
  BodyState state;
};

/// Positions the posed body so its lowest vertices rest on the floor and
/// the root lands at (x0, z0).
PlacedHuman place_on_floor(const BodyTemplate& tmpl, BodyParams params,
                           const SceneGeometry& geo, double x0, double z0) {
  params.trans = Vec3::Zero();
  BodyState state = body_forward(tmpl, params);
  const double max_y = state.vertices.col(1).maxCoeff();
  const int root = tmpl.root_joint();
  params.trans = Vec3(x0 - state.joints(root, 0), geo.floor_y - max_y,
                      z0 - state.joints(root, 2));
  state = body_forward(tmpl, params);
  return {params, state};
}

}  // namespace

SynthFixture synth_fixture(FixtureKind kind, uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0xf17e5ULL));
  SynthFixture fx;

  CameraIntrinsics cam;
  cam.width = 512;
  cam.height = 384;
  cam.fx = cam.fy = 460.0;

  fx.bundle.width = cam.width;
  fx.bundle.height = cam.height;
  fx.bundle.intrinsics_hint = cam;
  fx.bundle.body = make_synthetic_humanoid(seed);
  const BodyTemplate& tmpl = fx.bundle.body;

  SceneGeometry geo;
  geo.floor_y = 1.4;
  geo.wall_z = 6.0;

  // ---- Humans and scene props ------------------------------------------
  std::vector<PlacedHuman> humans;
  if (kind == FixtureKind::MultiHuman) {
    const double xs[3] = {-1.1, 0.0, 1.1};
    const double zs[3] = {3.6, 4.2, 3.6};
    for (int i = 0; i < 3; ++i) {
      BodyParams gt = make_gt_params(tmpl, FixtureKind::Standing,
                                     rng.uniform(-0.3, 0.3), rng);
      humans.push_back(place_on_floor(tmpl, gt, geo, xs[i], zs[i]));
    }
  } else {
    BodyParams gt = make_gt_params(tmpl, kind, rng.uniform(-0.25, 0.25), rng);
    humans.push_back(place_on_floor(tmpl, gt, geo, 0.0, 3.6));
  }

  // Decor box off to the side (gives the scene some non-floor structure).
  {
    Aabb decor;
    decor.min = Vec3(1.1, 0.95, 4.2);
    decor.max = Vec3(1.9, geo.floor_y, 5.0);
    geo.boxes.push_back(decor);
  }

  if (kind == FixtureKind::Seated) {
    // Seat fitted under the pelvis: top touches the lowest pelvis vertex.
    const PlacedHuman& h = humans[0];
    double seat_top = -kInf;
    for (int v = 0; v < tmpl.vertex_count(); ++v)
      if (tmpl.part_labels[v] == parts::Pelvis)
        seat_top = std::max(seat_top, h.state.vertices(v, 1));
    const int root = tmpl.root_joint();
    Aabb seat;
    seat.min = Vec3(h.state.joints(root, 0) - 0.35, seat_top,
                    h.state.joints(root, 2) - 0.25);
    seat.max = Vec3(h.state.joints(root, 0) + 0.35, geo.floor_y,
                    h.state.joints(root, 2) + 0.45);
    geo.boxes.push_back(seat);
  }

  if (kind == FixtureKind::OccludedLower) {
    // Occluder between the camera and the legs, just above the knees.
    const PlacedHuman& h = humans[0];
    const double knee_y = std::min(h.state.joints(4, 1), h.state.joints(5, 1));
    const int root = tmpl.root_joint();
    Aabb occluder;
    occluder.min = Vec3(h.state.joints(root, 0) - 0.7, knee_y - 0.06,
                        h.state.joints(root, 2) - 1.15);
    occluder.max = Vec3(h.state.joints(root, 0) + 0.7, geo.floor_y,
                        h.state.joints(root, 2) - 0.8);
    geo.boxes.push_back(occluder);
  }

  // ---- Renders -----------------------------------------------------------
  const DepthRaster scene_depth_clean = render_scene_depth(geo, cam);
  std::vector<std::vector<double>> human_depths;
  for (const auto& h : humans)
    human_depths.push_back(render_mesh_depth(h.state.vertices, tmpl.faces, cam));

  // Noisy metric depth D_s with sparse outliers.
  fx.bundle.scene_depth = scene_depth_clean;
  for (int i = 0; i < fx.bundle.scene_depth.size(); ++i) {
    if (!fx.bundle.scene_depth.valid[i]) continue;
    fx.bundle.scene_depth.values[i] += 0.002 * rng.normal();
    if (rng.uniform() < 0.01)
      fx.bundle.scene_depth.values[i] += rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? -1 : 1);
  }

  // Relative scene point map: exact scene points, small noise, inverse
  // affine with a seed-dependent scale/shift.
  const double s1 = rng.uniform(0.4, 0.8), t1 = rng.uniform(-0.3, 0.4);
  const double s2 = rng.uniform(0.5, 0.9), t2 = rng.uniform(-0.4, 0.3);

  PointMap scene_rel = PointMap::invalid_map(cam.width, cam.height);
  PointMap full_rel = PointMap::invalid_map(cam.width, cam.height);
  for (int r = 0; r < cam.height; ++r) {
    for (int c = 0; c < cam.width; ++c) {
      const size_t i = size_t(r) * cam.width + c;
      const Vec3 dir((c - 0.5 * cam.width) / cam.fx, (r - 0.5 * cam.height) / cam.fy, 1.0);
      const double zs = scene_depth_clean.valid[i] ? scene_depth_clean.values[i] : kInf;
      if (std::isfinite(zs) && rng.uniform() >= 0.005) {
        Vec3 p = dir * zs + Vec3(0.001 * rng.normal(), 0.001 * rng.normal(),
                                 0.001 * rng.normal());
        scene_rel.points[i] = Vec3(p.x() / s1, p.y() / s1, (p.z() - t1) / s1);
        scene_rel.valid[i] = 1;
      }
      double zf = zs;
      for (const auto& hd : human_depths) zf = std::min(zf, hd[i]);
      if (std::isfinite(zf) && rng.uniform() >= 0.005) {
        Vec3 p = dir * zf + Vec3(0.001 * rng.normal(), 0.001 * rng.normal(),
                                 0.001 * rng.normal());
        full_rel.points[i] = Vec3(p.x() / s2, p.y() / s2, (p.z() - t2) / s2);
        full_rel.valid[i] = 1;
      }
    }
  }
  fx.bundle.scene_relpoints = scene_rel;
  fx.bundle.full_relpoints = full_rel;

  // Floor mask from the scene-only render.
  PixelMask floor_mask = PixelMask::filled(cam.width, cam.height, 0);
  for (int r = 0; r < cam.height; ++r) {
    for (int c = 0; c < cam.width; ++c) {
      const Vec3 dir((c - 0.5 * cam.width) / cam.fx, (r - 0.5 * cam.height) / cam.fy, 1.0);
      if (ray_hit(geo, dir).surface == 0)
        floor_mask.inside[size_t(r) * cam.width + c] = 1;
    }
  }
  fx.bundle.floor_mask = floor_mask;

  // ---- Per-human inputs and ground truth ---------------------------------
  for (size_t h = 0; h < humans.size(); ++h) {
    HumanInputs inputs;

    // Mask: pixels where this human is the frontmost surface.
    inputs.mask = PixelMask::filled(cam.width, cam.height, 0);
    for (size_t i = 0; i < inputs.mask.inside.size(); ++i) {
      const double own = human_depths[h][i];
      if (!std::isfinite(own)) continue;
      double blocker = scene_depth_clean.valid[i] ? scene_depth_clean.values[i] : kInf;
      for (size_t o = 0; o < humans.size(); ++o)
        if (o != h) blocker = std::min(blocker, human_depths[o][i]);
      if (own < blocker) inputs.mask.inside[i] = 1;
    }

    // Keypoints: exact projections of the GT regressed joints.
    const bool lower_hidden = kind == FixtureKind::OccludedLower;
    for (const auto& [kp_id, joint] : tmpl.keypoint_map) {
      Keypoint k;
      k.id = kp_id;
      const Vec3 p = humans[h].state.joints.row(joint).transpose();
      if (!(p.z() > 0)) continue;
      k.u = cam.fx * p.x() / p.z() + 0.5 * cam.width;
      k.v = cam.fy * p.y() / p.z() + 0.5 * cam.height;
      const bool in_image = k.u >= 0 && k.u < cam.width && k.v >= 0 && k.v < cam.height;
      const bool hidden_id = lower_hidden && (kp_id == 13 || kp_id == 14 || kp_id == 15 ||
                                              kp_id == 16);
      k.confidence = (in_image && !hidden_id) ? 1.0 : 0.0;
      inputs.keypoints.points.push_back(k);
    }

    inputs.init_params = perturb_params(humans[h].params, tmpl, rng);

    // Ground-truth contacts by the eps_c rule against the analytic geometry.
    ContactReport gt_contacts;
    gt_contacts.threshold = fx.gt.eps_extract;
    gt_contacts.in_contact.resize(tmpl.vertex_count());
    gt_contacts.distances.resize(tmpl.vertex_count());
    ContactVertexSet predicted;
    predicted.source = ContactVertexSet::Source::Predicted;
    for (int v = 0; v < tmpl.vertex_count(); ++v) {
      const double d = surface_distance(geo, humans[h].state.vertices.row(v).transpose());
      gt_contacts.distances[v] = d;
      gt_contacts.in_contact[v] = d < fx.gt.eps_extract ? 1 : 0;
      if (gt_contacts.in_contact[v]) predicted.indices.push_back(v);
    }
    inputs.contacts = predicted;

    fx.bundle.humans.push_back(std::move(inputs));
    fx.gt.params.push_back(humans[h].params);
    fx.gt.contacts.push_back(std::move(gt_contacts));
  }

  fx.gt.geometry = geo;
  fx.gt.floor = Plane{Vec3(0, -1, 0), -geo.floor_y};
  return fx;
}

void save_fixture(const std::filesystem::path& dir, const SynthFixture& fixture) {
  save_bundle(dir, fixture.bundle);
  const auto gt_dir = dir / "gt";
  std::filesystem::create_directories(gt_dir);
  for (size_t h = 0; h < fixture.gt.params.size(); ++h) {
    const std::string tag = "human" + std::to_string(h);
    save_body_params(gt_dir / (tag + "_params.json"), fixture.gt.params[h], fixture.bundle.body);
    save_contact_report(gt_dir / (tag + "_contacts.json"), fixture.gt.contacts[h]);
  }
  // Scene geometry sidecar so the ground truth is self-describing.
  nlohmann::json geo;
  geo["floor_y"] = fixture.gt.geometry.floor_y;
  geo["wall_z"] = fixture.gt.geometry.wall_z;
  geo["eps_extract"] = fixture.gt.eps_extract;
  nlohmann::json boxes = nlohmann::json::array();
  for (const Aabb& box : fixture.gt.geometry.boxes)
    boxes.push_back({box.min.x(), box.min.y(), box.min.z(), box.max.x(), box.max.y(),
                     box.max.z()});
  geo["boxes"] = boxes;
  const std::string text = geo.dump(2) + "\n";
  const auto tmp = gt_dir / "geometry.json.tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write fixture geometry");
    f.write(text.data(), std::streamsize(text.size()));
  }
  std::filesystem::rename(tmp, gt_dir / "geometry.json");
}

FixtureGroundTruth load_fixture_gt(const std::filesystem::path& dir,
                                   const BodyTemplate& tmpl) {
  FixtureGroundTruth gt;
  const auto gt_dir = dir / "gt";
  for (size_t h = 0;; ++h) {
    const std::string tag = "human" + std::to_string(h);
    const auto params_path = gt_dir / (tag + "_params.json");
    if (!std::filesystem::exists(params_path)) break;
    gt.params.push_back(load_body_params(params_path, tmpl));
    gt.contacts.push_back(load_contact_report(gt_dir / (tag + "_contacts.json")));
  }
  if (gt.params.empty())
    throw Error(ErrorCode::MissingComponent, "no ground truth under " + gt_dir.string());

  std::ifstream f(gt_dir / "geometry.json");
  if (f) {
    nlohmann::json geo;
    try {
      f >> geo;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("fixture geometry: ") + e.what());
    }
    gt.geometry.floor_y = geo.value("floor_y", gt.geometry.floor_y);
    gt.geometry.wall_z = geo.value("wall_z", gt.geometry.wall_z);
    gt.eps_extract = geo.value("eps_extract", gt.eps_extract);
    if (geo.contains("boxes")) {
      for (const auto& b : geo.at("boxes")) {
        Aabb box;
        box.min = Vec3(b.at(0), b.at(1), b.at(2));
        box.max = Vec3(b.at(3), b.at(4), b.at(5));
        gt.geometry.boxes.push_back(box);
      }
    }
  }
  gt.floor = Plane{Vec3(0, -1, 0), -gt.geometry.floor_y};
  return gt;
}

}  // namespace physic
