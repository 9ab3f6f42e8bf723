#include "physic/body.hpp"

#include "physic/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace physic {

// ============================================================================
// Template plumbing
// ============================================================================

int BodyTemplate::root_joint() const {
  for (int j = 0; j < joint_count(); ++j)
    if (parents[j] < 0) return j;
  throw Error(ErrorCode::InvariantViolation, "kinematic tree has no root");
}

bool BodyTemplate::is_hand_joint(int j) const {
  return std::find(hand_joints.begin(), hand_joints.end(), j) != hand_joints.end();
}

void BodyTemplate::validate() const {
  const int n = vertex_count();
  const int nj = joint_count();
  if (n < 1 || nj < 1)
    throw Error(ErrorCode::InvariantViolation, "template needs vertices and joints");
  if (int(parents.size()) != nj)
    throw Error(ErrorCode::InvariantViolation, "parents size != joint count");
  if (skinning.rows() != n || skinning.cols() != nj)
    throw Error(ErrorCode::InvariantViolation, "skinning must be N x J");
  if (joint_regressor.rows() != nj || joint_regressor.cols() != n)
    throw Error(ErrorCode::InvariantViolation, "joint regressor must be J x N");
  if (int(part_labels.size()) != n)
    throw Error(ErrorCode::InvariantViolation, "every vertex needs a part label");

  int roots = 0;
  for (int j = 0; j < nj; ++j) {
    if (parents[j] < 0) {
      ++roots;
      continue;
    }
    if (parents[j] >= nj)
      throw Error(ErrorCode::InvariantViolation, "parent index out of range");
    // Walk to the root; a cycle would loop longer than the joint count.
    int hops = 0;
    for (int a = j; a >= 0; a = parents[a]) {
      if (++hops > nj)
        throw Error(ErrorCode::InvariantViolation, "kinematic tree has a cycle");
    }
  }
  if (roots != 1)
    throw Error(ErrorCode::InvariantViolation, "kinematic tree must have a single root");

  for (int v = 0; v < n; ++v) {
    const double sum = skinning.row(v).sum();
    if (std::abs(sum - 1.0) > 1e-6)
      throw Error(ErrorCode::InvariantViolation,
                  "skinning row " + std::to_string(v) + " sums to " + std::to_string(sum));
    if (part_labels[v] < 0 || part_labels[v] >= std::max(part_count(), 1))
      throw Error(ErrorCode::InvariantViolation, "part label out of range");
  }
  for (const auto& f : faces)
    for (int idx : f)
      if (idx < 0 || idx >= n)
        throw Error(ErrorCode::InvariantViolation, "face index out of range");
  for (int j : hand_joints)
    if (j < 0 || j >= nj)
      throw Error(ErrorCode::InvariantViolation, "hand joint index out of range");
  for (const auto& [kp, j] : keypoint_map)
    if (j < 0 || j >= nj)
      throw Error(ErrorCode::InvariantViolation, "keypoint map joint out of range");
  for (const auto& dirs : shape_dirs)
    if (dirs.rows() != n)
      throw Error(ErrorCode::InvariantViolation, "shape basis must be N x 3 per dim");
}

BodyParams BodyParams::zero(const BodyTemplate& tmpl) {
  BodyParams p;
  p.beta = Eigen::VectorXd::Zero(tmpl.shape_dim());
  p.theta.assign(tmpl.joint_count(), Vec3::Zero());
  p.trans = Vec3::Zero();
  return p;
}

ParamGrad ParamGrad::zero(const BodyTemplate& tmpl) {
  ParamGrad g;
  g.beta = Eigen::VectorXd::Zero(tmpl.shape_dim());
  g.theta.assign(tmpl.joint_count(), Vec3::Zero());
  g.trans = Vec3::Zero();
  return g;
}

ParamGrad& ParamGrad::operator+=(const ParamGrad& other) {
  beta += other.beta;
  for (size_t j = 0; j < theta.size(); ++j) theta[j] += other.theta[j];
  trans += other.trans;
  return *this;
}

ParamGrad& ParamGrad::scale(double k) {
  beta *= k;
  for (auto& t : theta) t *= k;
  trans *= k;
  return *this;
}

bool ParamGrad::all_finite() const {
  if (!beta.allFinite() || !trans.allFinite()) return false;
  for (const auto& t : theta)
    if (!t.allFinite()) return false;
  return true;
}

// ============================================================================
// Rodrigues
// ============================================================================

Mat3 rodrigues(const Vec3& v) {
  const double theta = v.norm();
  Mat3 skew;
  skew << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  if (theta < 1e-8) return Mat3::Identity() + skew;
  const Mat3 k = skew / theta;
  return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * (k * k);
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& v) {
  std::array<Mat3, 3> out;
  const double theta2 = v.squaredNorm();
  if (theta2 < 1e-14) {
    for (int i = 0; i < 3; ++i) {
      Vec3 e = Vec3::Zero();
      e[i] = 1.0;
      Mat3 skew;
      skew << 0, -e.z(), e.y(), e.z(), 0, -e.x(), -e.y(), e.x(), 0;
      out[i] = skew;
    }
    return out;
  }
  // Gallego & Yezzi: dR/dv_i = (v_i [v]x + [v x (I - R) e_i]x) / |v|^2 * R.
  const Mat3 r = rodrigues(v);
  Mat3 vskew;
  vskew << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  const Mat3 eye_minus_r = Mat3::Identity() - r;
  for (int i = 0; i < 3; ++i) {
    const Vec3 w = v.cross(eye_minus_r.col(i));
    Mat3 wskew;
    wskew << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    out[i] = ((v[i] * vskew + wskew) / theta2) * r;
  }
  return out;
}

// ============================================================================
// Forward / backward
// ============================================================================

namespace {

std::vector<int> topological_order(const std::vector<int>& parents) {
  const int nj = int(parents.size());
  std::vector<int> order;
  order.reserve(nj);
  std::vector<uint8_t> done(nj, 0);
  while (int(order.size()) < nj) {
    bool progressed = false;
    for (int j = 0; j < nj; ++j) {
      if (done[j]) continue;
      if (parents[j] < 0 || done[parents[j]]) {
        order.push_back(j);
        done[j] = 1;
        progressed = true;
      }
    }
    if (!progressed)
      throw Error(ErrorCode::InvariantViolation, "kinematic tree is not a tree");
  }
  return order;
}

}  // namespace

BodyState body_forward(const BodyTemplate& tmpl, const BodyParams& params) {
  const int n = tmpl.vertex_count();
  const int nj = tmpl.joint_count();
  if (params.beta.size() != tmpl.shape_dim() || int(params.theta.size()) != nj)
    throw Error(ErrorCode::DimensionMismatch, "params do not match template dimensions");

  BodyState st;
  st.shaped = tmpl.vertices;
  for (int s = 0; s < tmpl.shape_dim(); ++s) st.shaped += params.beta[s] * tmpl.shape_dirs[s];

  st.rest_joints = tmpl.joint_regressor * st.shaped;

  st.local_rot.resize(nj);
  st.world_rot.resize(nj);
  st.world_pos.resize(nj);
  const std::vector<int> order = topological_order(tmpl.parents);
  for (int j : order) {
    st.local_rot[j] = rodrigues(params.theta[j]);
    const int p = tmpl.parents[j];
    if (p < 0) {
      st.world_rot[j] = st.local_rot[j];
      st.world_pos[j] = st.rest_joints.row(j).transpose();
    } else {
      st.world_rot[j] = st.world_rot[p] * st.local_rot[j];
      st.world_pos[j] =
          st.world_rot[p] * (st.rest_joints.row(j) - st.rest_joints.row(p)).transpose() +
          st.world_pos[p];
    }
  }

  st.vertices.resize(n, 3);
  for (int v = 0; v < n; ++v) {
    const Vec3 sv = st.shaped.row(v).transpose();
    Vec3 acc = Vec3::Zero();
    for (int j = 0; j < nj; ++j) {
      const double w = tmpl.skinning(v, j);
      if (w == 0.0) continue;
      acc += w * (st.world_rot[j] * (sv - st.rest_joints.row(j).transpose()) + st.world_pos[j]);
    }
    st.vertices.row(v) = (acc + params.trans).transpose();
  }

  st.joints = tmpl.joint_regressor * st.vertices;
  return st;
}

ParamGrad body_backward(const BodyTemplate& tmpl, const BodyParams& params,
                        const BodyState& st, const MatX3& d_vertices,
                        const MatX3* d_joints) {
  const int n = tmpl.vertex_count();
  const int nj = tmpl.joint_count();
  if (d_vertices.rows() != n)
    throw Error(ErrorCode::DimensionMismatch, "vertex gradient has wrong row count");

  // Fold regressed-joint gradients into vertex gradients (J = W_reg * V).
  MatX3 dv = d_vertices;
  if (d_joints) dv += tmpl.joint_regressor.transpose() * (*d_joints);

  ParamGrad grad = ParamGrad::zero(tmpl);

  // --- Skinning layer ---------------------------------------------------
  std::vector<Mat3> d_world_rot(nj, Mat3::Zero());
  std::vector<Vec3> d_world_pos(nj, Vec3::Zero());
  MatX3 d_shaped = MatX3::Zero(n, 3);
  MatX3 d_rest = MatX3::Zero(nj, 3);

  for (int v = 0; v < n; ++v) {
    const Vec3 g = dv.row(v).transpose();
    grad.trans += g;
    const Vec3 sv = st.shaped.row(v).transpose();
    Vec3 ds = Vec3::Zero();
    for (int j = 0; j < nj; ++j) {
      const double w = tmpl.skinning(v, j);
      if (w == 0.0) continue;
      const Vec3 rel = sv - st.rest_joints.row(j).transpose();
      d_world_rot[j] += (w * g) * rel.transpose();
      d_world_pos[j] += w * g;
      ds += w * (st.world_rot[j].transpose() * g);
    }
    d_shaped.row(v) = ds.transpose();
  }
  for (int j = 0; j < nj; ++j)
    d_rest.row(j) -= (st.world_rot[j].transpose() * d_world_pos[j]).transpose();

  // --- Kinematic chain, reverse topological order ------------------------
  std::vector<int> order = topological_order(tmpl.parents);
  std::reverse(order.begin(), order.end());
  for (int j : order) {
    const int p = tmpl.parents[j];
    Mat3 d_local_rot;
    Vec3 d_local_pos;
    if (p < 0) {
      d_local_rot = d_world_rot[j];
      d_local_pos = d_world_pos[j];
      d_rest.row(j) += d_local_pos.transpose();
    } else {
      const Vec3 t_loc = (st.rest_joints.row(j) - st.rest_joints.row(p)).transpose();
      d_world_rot[p] += d_world_rot[j] * st.local_rot[j].transpose() +
                        d_world_pos[j] * t_loc.transpose();
      d_world_pos[p] += d_world_pos[j];
      d_local_rot = st.world_rot[p].transpose() * d_world_rot[j];
      d_local_pos = st.world_rot[p].transpose() * d_world_pos[j];
      d_rest.row(j) += d_local_pos.transpose();
      d_rest.row(p) -= d_local_pos.transpose();
    }
    const auto jac = rodrigues_jacobian(params.theta[j]);
    for (int i = 0; i < 3; ++i)
      grad.theta[j][i] = (d_local_rot.array() * jac[i].array()).sum();
  }

  // --- Shape layer --------------------------------------------------------
  // Rest joints are regressed from the shaped template.
  d_shaped += tmpl.joint_regressor.transpose() * d_rest;
  for (int s = 0; s < tmpl.shape_dim(); ++s)
    grad.beta[s] = (d_shaped.array() * tmpl.shape_dirs[s].array()).sum();

  return grad;
}

// ============================================================================
// Capsule mesh synthesis
// ============================================================================

namespace {

struct CapsuleSpec {
  int joint_a = 0;       // rotating joint of the segment
  int joint_b = 0;       // child joint toward which weights blend
  Vec3 a, b;             // segment endpoints
  double radius = 0.05;
  int part = 0;
  int rings = 8;
  int segments = 12;
};

void append_capsule(const CapsuleSpec& cap, Rng& rng, int joint_count,
                    std::vector<Vec3>& verts, std::vector<std::array<int, 3>>& faces,
                    std::vector<Eigen::VectorXd>& weights, std::vector<int>& parts) {
  const int base = int(verts.size());
  const Vec3 axis = cap.b - cap.a;
  const double len = axis.norm();
  const Vec3 dir = len > 1e-12 ? Vec3(axis / len) : Vec3::UnitY();

  // Orthonormal frame (u, w, dir), right handed.
  Vec3 u = std::abs(dir.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  u = (u - dir * dir.dot(u)).normalized();
  const Vec3 w = dir.cross(u);

  auto blend = [&](double t) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(joint_count);
    const double wb = cap.joint_a == cap.joint_b
                          ? 0.0
                          : std::clamp((t - 0.55) / 0.9, 0.0, 0.5);
    row[cap.joint_a] = 1.0 - wb;
    row[cap.joint_b] += wb;
    return row;
  };

  const double jitter = 0.03 * rng.uniform();  // tiny fixed angular offset per capsule
  for (int r = 0; r < cap.rings; ++r) {
    const double t = cap.rings > 1 ? double(r) / (cap.rings - 1) : 0.5;
    const Vec3 center = cap.a + t * axis;
    for (int s = 0; s < cap.segments; ++s) {
      const double phi = 2.0 * M_PI * (double(s) / cap.segments) + jitter;
      verts.push_back(center + cap.radius * (std::cos(phi) * u + std::sin(phi) * w));
      weights.push_back(blend(t));
      parts.push_back(cap.part);
    }
  }
  // Side quads, outward winding.
  for (int r = 0; r + 1 < cap.rings; ++r) {
    for (int s = 0; s < cap.segments; ++s) {
      const int s1 = (s + 1) % cap.segments;
      const int l0 = base + r * cap.segments + s;
      const int l1 = base + r * cap.segments + s1;
      const int u0 = base + (r + 1) * cap.segments + s;
      const int u1 = base + (r + 1) * cap.segments + s1;
      faces.push_back({l0, l1, u1});
      faces.push_back({l0, u1, u0});
    }
  }
  // Apex caps.
  const int apex_a = int(verts.size());
  verts.push_back(cap.a - cap.radius * dir);
  weights.push_back(blend(0.0));
  parts.push_back(cap.part);
  const int apex_b = int(verts.size());
  verts.push_back(cap.b + cap.radius * dir);
  weights.push_back(blend(1.0));
  parts.push_back(cap.part);
  for (int s = 0; s < cap.segments; ++s) {
    const int s1 = (s + 1) % cap.segments;
    faces.push_back({apex_a, base + s1, base + s});
    const int top = base + (cap.rings - 1) * cap.segments;
    faces.push_back({apex_b, top + s, top + s1});
  }
}

Eigen::MatrixXd regressor_from_neighbours(const std::vector<Vec3>& verts,
                                          const MatX3& joints, int k) {
  const int n = int(verts.size());
  const int nj = int(joints.rows());
  Eigen::MatrixXd reg = Eigen::MatrixXd::Zero(nj, n);
  for (int j = 0; j < nj; ++j) {
    const Vec3 target = joints.row(j).transpose();
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
      const double da = (verts[a] - target).squaredNorm();
      const double db = (verts[b] - target).squaredNorm();
      return da < db || (da == db && a < b);
    });
    // Min-norm affine combination of the k nearest vertices that
    // reproduces the joint position exactly.
    Eigen::MatrixXd c(4, k);
    for (int i = 0; i < k; ++i) {
      c.block<3, 1>(0, i) = verts[idx[i]];
      c(3, i) = 1.0;
    }
    Eigen::Vector4d b;
    b << target, 1.0;
    Eigen::VectorXd w = c.completeOrthogonalDecomposition().solve(b);
    for (int i = 0; i < k; ++i) reg(j, idx[i]) = w[i];
  }
  return reg;
}

BodyTemplate assemble_template(const std::vector<CapsuleSpec>& capsules,
                               const MatX3& joints, const std::vector<int>& parents,
                               const std::vector<std::string>& part_names,
                               const std::vector<int>& hand_joints,
                               const std::map<int, int>& keypoint_map, uint64_t seed,
                               int regressor_k) {
  Rng rng(seed ^ 0xb0d7ULL);
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::vector<Eigen::VectorXd> weights;
  std::vector<int> parts;
  for (const auto& cap : capsules)
    append_capsule(cap, rng, int(joints.rows()), verts, faces, weights, parts);

  BodyTemplate tmpl;
  const int n = int(verts.size());
  tmpl.vertices.resize(n, 3);
  for (int v = 0; v < n; ++v) tmpl.vertices.row(v) = verts[v].transpose();
  tmpl.faces = faces;
  tmpl.rest_joints = joints;
  tmpl.parents = parents;
  tmpl.skinning.resize(n, joints.rows());
  for (int v = 0; v < n; ++v) tmpl.skinning.row(v) = weights[v].transpose();
  tmpl.joint_regressor = regressor_from_neighbours(verts, joints, regressor_k);
  tmpl.part_labels = parts;
  tmpl.part_names = part_names;
  tmpl.hand_joints = hand_joints;
  tmpl.keypoint_map = keypoint_map;
  return tmpl;
}

}  // namespace

BodyTemplate make_synthetic_humanoid(uint64_t seed) {
  // Canonical frame: y up, facing +Z, feet near y = 0.
  MatX3 joints(24, 3);
  joints << 0.00, 0.95, 0.00,   //  0 pelvis
      0.09, 0.91, 0.00,         //  1 l_hip
      -0.09, 0.91, 0.00,        //  2 r_hip
      0.00, 1.05, 0.00,         //  3 spine1
      0.10, 0.52, 0.00,         //  4 l_knee
      -0.10, 0.52, 0.00,        //  5 r_knee
      0.00, 1.15, 0.00,         //  6 spine2
      0.10, 0.10, 0.00,         //  7 l_ankle
      -0.10, 0.10, 0.00,        //  8 r_ankle
      0.00, 1.25, 0.00,         //  9 spine3
      0.10, 0.045, 0.13,        // 10 l_foot
      -0.10, 0.045, 0.13,       // 11 r_foot
      0.00, 1.42, 0.00,         // 12 neck
      0.07, 1.38, 0.00,         // 13 l_collar
      -0.07, 1.38, 0.00,        // 14 r_collar
      0.00, 1.53, 0.00,         // 15 head
      0.18, 1.38, 0.00,         // 16 l_shoulder
      -0.18, 1.38, 0.00,        // 17 r_shoulder
      0.45, 1.38, 0.00,         // 18 l_elbow
      -0.45, 1.38, 0.00,        // 19 r_elbow
      0.70, 1.38, 0.00,         // 20 l_wrist
      -0.70, 1.38, 0.00,        // 21 r_wrist
      0.78, 1.38, 0.00,         // 22 l_hand
      -0.78, 1.38, 0.00;        // 23 r_hand

  const std::vector<int> parents = {-1, 0, 0,  0,  1,  2,  3,  4,  5,  6,  7,  8,
                                    9,  9, 9,  12, 13, 14, 16, 17, 18, 19, 20, 21};

  auto J = [&](int j) { return Vec3(joints.row(j).transpose()); };
  std::vector<CapsuleSpec> caps;
  auto add = [&](int ja, int jb, double r, int part) {
    CapsuleSpec c;
    c.joint_a = ja;
    c.joint_b = jb;
    c.a = J(ja);
    c.b = J(jb);
    c.radius = r;
    c.part = part;
    caps.push_back(c);
  };
  add(0, 3, 0.115, parts::Pelvis);
  add(3, 6, 0.120, parts::Torso);
  add(6, 9, 0.125, parts::Torso);
  add(9, 12, 0.110, parts::Torso);
  add(12, 15, 0.060, parts::Head);
  {  // cranium above the head joint
    CapsuleSpec c;
    c.joint_a = 15;
    c.joint_b = 15;
    c.a = J(15);
    c.b = J(15) + Vec3(0, 0.14, 0);
    c.radius = 0.085;
    c.part = parts::Head;
    caps.push_back(c);
  }
  add(1, 4, 0.070, parts::LeftLeg);
  add(4, 7, 0.055, parts::LeftLeg);
  add(2, 5, 0.070, parts::RightLeg);
  add(5, 8, 0.055, parts::RightLeg);
  add(7, 10, 0.040, parts::LeftFoot);
  add(8, 11, 0.040, parts::RightFoot);
  add(16, 18, 0.045, parts::LeftArm);
  add(18, 20, 0.038, parts::LeftArm);
  add(17, 19, 0.045, parts::RightArm);
  add(19, 21, 0.038, parts::RightArm);
  add(20, 22, 0.033, parts::Hands);
  add(21, 23, 0.033, parts::Hands);

  const std::vector<std::string> part_names = {"head",     "torso",    "pelvis",
                                               "left_arm", "right_arm", "left_leg",
                                               "right_leg", "left_foot", "right_foot",
                                               "hands"};
  const std::vector<int> hand_joints = {22, 23};
  // COCO-17 ids -> model joints (eyes/ears omitted).
  const std::map<int, int> keypoint_map = {{0, 15}, {5, 16},  {6, 17}, {7, 18},
                                           {8, 19}, {9, 20},  {10, 21}, {11, 1},
                                           {12, 2}, {13, 4},  {14, 5},  {15, 7},
                                           {16, 8}};

  BodyTemplate tmpl = assemble_template(caps, joints, parents, part_names, hand_joints,
                                        keypoint_map, seed, 16);

  // Shape basis. Dim 0: height, scaling y away from the ground plane.
  // Dim 1: girth, pushing vertices radially from the vertical centre line.
  const int n = tmpl.vertex_count();
  MatX3 d_height = MatX3::Zero(n, 3);
  MatX3 d_girth = MatX3::Zero(n, 3);
  for (int v = 0; v < n; ++v) {
    d_height(v, 1) = 0.10 * tmpl.vertices(v, 1);
    d_girth(v, 0) = 0.06 * tmpl.vertices(v, 0);
    d_girth(v, 2) = 0.06 * tmpl.vertices(v, 2);
  }
  tmpl.shape_dirs = {d_height, d_girth};

  tmpl.validate();
  return tmpl;
}

BodyTemplate make_toy_body() {
  MatX3 joints(5, 3);
  joints << 0.0, 0.0, 0.0,  // root
      0.0, 0.25, 0.0,       // spine
      0.0, 0.50, 0.0,       // neck
      0.20, 0.50, 0.0,      // l_arm
      -0.20, 0.50, 0.0;     // r_arm
  const std::vector<int> parents = {-1, 0, 1, 2, 2};

  auto J = [&](int j) { return Vec3(joints.row(j).transpose()); };
  std::vector<CapsuleSpec> caps;
  auto add = [&](int ja, int jb, double r, int part) {
    CapsuleSpec c;
    c.joint_a = ja;
    c.joint_b = jb;
    c.a = J(ja);
    c.b = J(jb);
    c.radius = r;
    c.part = part;
    c.rings = 3;
    c.segments = 6;
    caps.push_back(c);
  };
  add(0, 1, 0.07, 0);
  add(1, 2, 0.07, 1);
  add(2, 3, 0.04, 2);
  add(2, 4, 0.04, 3);

  const std::vector<std::string> part_names = {"lower", "upper", "l_arm", "r_arm"};
  const std::map<int, int> keypoint_map = {{0, 2}, {1, 3}, {2, 4}, {3, 0}};
  BodyTemplate tmpl = assemble_template(caps, joints, parents, part_names, {},
                                        keypoint_map, 7, 12);

  const int n = tmpl.vertex_count();
  MatX3 d_height = MatX3::Zero(n, 3);
  for (int v = 0; v < n; ++v) d_height(v, 1) = 0.10 * tmpl.vertices(v, 1);
  tmpl.shape_dirs = {d_height};
  tmpl.validate();
  return tmpl;
}

ContactVertexSet static_contact_preset(const BodyTemplate& tmpl) {
  ContactVertexSet out;
  out.source = ContactVertexSet::Source::StaticPreset;

  // Resolve regions by part name so the preset works for any template that
  // follows the naming convention of the shipped humanoid.
  auto part_matches = [&](int id, const char* token) {
    return id >= 0 && id < tmpl.part_count() &&
           tmpl.part_names[id].find(token) != std::string::npos;
  };

  // Back: torso vertices on the -Z side of the torso's centre (the
  // canonical template faces +Z).
  double torso_z_sum = 0.0;
  int torso_count = 0;
  for (int v = 0; v < tmpl.vertex_count(); ++v) {
    if (part_matches(tmpl.part_labels[v], "torso")) {
      torso_z_sum += tmpl.vertices(v, 2);
      ++torso_count;
    }
  }
  const double torso_z_mid = torso_count > 0 ? torso_z_sum / torso_count : 0.0;

  for (int v = 0; v < tmpl.vertex_count(); ++v) {
    const int part = tmpl.part_labels[v];
    const bool foot = part_matches(part, "foot");
    const bool bottom = part_matches(part, "pelvis") || part_matches(part, "bottom");
    const bool back = part_matches(part, "torso") && tmpl.vertices(v, 2) < torso_z_mid - 0.02;
    if (foot || bottom || back) out.indices.push_back(v);
  }
  return out;
}

}  // namespace physic
