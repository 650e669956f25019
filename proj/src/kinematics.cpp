#include "wbmr/kinematics.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "wbmr/errors.hpp"
#include "wbmr/rng.hpp"

namespace wbmr {

using nlohmann::ordered_json;

// ── skeleton construction ─────────────────────────────────────────────────

namespace {

struct JointSpec {
  const char* name;
  int parent;
  Vec3 offset;
};

// Body, head and left hand; the right hand is produced by mirroring x.
// Proportions are desk-grade anthropometry: leg ~0.9 m, arm ~0.55 m,
// finger segments 2-4 cm.
const std::array<JointSpec, kNumJoints>& joint_table() {
  static const std::array<JointSpec, kNumJoints> table = {{
      {"pelvis", -1, {0, 0, 0}},
      {"left_hip", 0, {0.09, -0.06, 0}},
      {"right_hip", 0, {-0.09, -0.06, 0}},
      {"spine1", 0, {0, 0.11, 0}},
      {"left_knee", 1, {0.015, -0.40, 0}},
      {"right_knee", 2, {-0.015, -0.40, 0}},
      {"spine2", 3, {0, 0.12, 0}},
      {"left_ankle", 4, {0, -0.42, 0}},
      {"right_ankle", 5, {0, -0.42, 0}},
      {"spine3", 6, {0, 0.12, 0}},
      {"left_foot", 7, {0.01, -0.05, 0.12}},
      {"right_foot", 8, {-0.01, -0.05, 0.12}},
      {"neck", 9, {0, 0.10, 0}},
      {"left_collar", 9, {0.045, 0.06, 0}},
      {"right_collar", 9, {-0.045, 0.06, 0}},
      {"head", 12, {0, 0.10, 0}},
      {"left_shoulder", 13, {0.10, 0.02, 0}},
      {"right_shoulder", 14, {-0.10, 0.02, 0}},
      {"left_elbow", 16, {0.28, 0, 0}},
      {"right_elbow", 17, {-0.28, 0, 0}},
      {"left_wrist", 18, {0.27, 0, 0}},
      {"right_wrist", 19, {-0.27, 0, 0}},
      {"jaw", 15, {0, 0.01, 0.09}},
      {"left_eye", 15, {0.031, 0.055, 0.08}},
      {"right_eye", 15, {-0.031, 0.055, 0.08}},
      // left hand: index, middle, pinky, ring, thumb; base/mid/tip each
      {"left_index1", 20, {0.095, 0.003, 0.028}},
      {"left_index2", 25, {0.038, 0, 0.004}},
      {"left_index3", 26, {0.026, 0, 0.002}},
      {"left_middle1", 20, {0.098, 0.004, 0.006}},
      {"left_middle2", 28, {0.040, 0, 0}},
      {"left_middle3", 29, {0.028, 0, 0}},
      {"left_pinky1", 20, {0.086, 0.001, -0.034}},
      {"left_pinky2", 31, {0.030, 0, -0.006}},
      {"left_pinky3", 32, {0.022, 0, -0.004}},
      {"left_ring1", 20, {0.094, 0.002, -0.016}},
      {"left_ring2", 34, {0.036, 0, -0.003}},
      {"left_ring3", 35, {0.026, 0, -0.002}},
      {"left_thumb1", 20, {0.030, -0.008, 0.040}},
      {"left_thumb2", 37, {0.033, -0.003, 0.022}},
      {"left_thumb3", 38, {0.028, -0.002, 0.014}},
      // right hand mirrors the left
      {"right_index1", 21, {-0.095, 0.003, 0.028}},
      {"right_index2", 40, {-0.038, 0, 0.004}},
      {"right_index3", 41, {-0.026, 0, 0.002}},
      {"right_middle1", 21, {-0.098, 0.004, 0.006}},
      {"right_middle2", 43, {-0.040, 0, 0}},
      {"right_middle3", 44, {-0.028, 0, 0}},
      {"right_pinky1", 21, {-0.086, 0.001, -0.034}},
      {"right_pinky2", 46, {-0.030, 0, -0.006}},
      {"right_pinky3", 47, {-0.022, 0, -0.004}},
      {"right_ring1", 21, {-0.094, 0.002, -0.016}},
      {"right_ring2", 49, {-0.036, 0, -0.003}},
      {"right_ring3", 50, {-0.026, 0, -0.002}},
      {"right_thumb1", 21, {-0.030, -0.008, 0.040}},
      {"right_thumb2", 52, {-0.033, -0.003, 0.022}},
      {"right_thumb3", 53, {-0.028, -0.002, 0.014}},
  }};
  return table;
}

constexpr uint64_t kShapeBasisSeed = 77081334ULL;
constexpr double kMaxBoneLengthChange = 0.12;  // at |beta_i| <= 2

}  // namespace

const std::array<const char*, kNumJoints>& joint_names() {
  static const std::array<const char*, kNumJoints> names = [] {
    std::array<const char*, kNumJoints> n{};
    for (int j = 0; j < kNumJoints; ++j) n[j] = joint_table()[j].name;
    return n;
  }();
  return names;
}

SkeletonModel SkeletonModel::canonical() {
  SkeletonModel s;
  const auto& table = joint_table();
  for (int j = 0; j < kNumJoints; ++j) {
    s.parents[j] = table[j].parent;
    s.rest_offsets[j] = table[j].offset;
  }
  s.fingertips = {27, 30, 33, 36, 39, 42, 45, 48, 51, 54};

  // Seeded random shape directions, scaled so the worst case over
  // |beta_i| <= 2 moves each offset by at most kMaxBoneLengthChange of its
  // length. The root keeps a zero basis.
  Rng rng(kShapeBasisSeed);
  for (int j = 0; j < kNumJoints; ++j) {
    Eigen::Matrix<double, 3, kNumShapeCoeffs> basis;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < kNumShapeCoeffs; ++c) basis(r, c) = rng.gaussian();
    if (j == 0) {
      s.shape_basis[j].setZero();
      continue;
    }
    double worst = 0;
    for (int c = 0; c < kNumShapeCoeffs; ++c) worst += 2.0 * basis.col(c).norm();
    const double scale = kMaxBoneLengthChange * s.rest_offsets[j].norm() / worst;
    s.shape_basis[j] = basis * scale;
  }
  s.validate();
  return s;
}

std::vector<std::pair<int, int>> SkeletonModel::bones() const {
  std::vector<std::pair<int, int>> b;
  b.reserve(kNumBones);
  for (int j = 1; j < kNumJoints; ++j) b.emplace_back(parents[j], j);
  return b;
}

std::array<Vec3, kNumJoints> SkeletonModel::shaped_offsets(const VecX& beta) const {
  if (beta.size() != kNumShapeCoeffs) {
    throw ConfigError("shape vector must have 10 coefficients");
  }
  std::array<Vec3, kNumJoints> out;
  for (int j = 0; j < kNumJoints; ++j) out[j] = rest_offsets[j] + shape_basis[j] * beta;
  return out;
}

std::array<Vec3, kNumJoints> SkeletonModel::rest_positions(const VecX& beta) const {
  const auto offs = shaped_offsets(beta);
  std::array<Vec3, kNumJoints> pos;
  pos[0] = Vec3::Zero();
  for (int j = 1; j < kNumJoints; ++j) pos[j] = pos[parents[j]] + offs[j];
  return pos;
}

void SkeletonModel::validate() const {
  if (parents[0] != -1) throw ConfigError("skeleton: joint 0 must be the root");
  std::array<bool, kNumJoints> has_child{};
  for (int j = 1; j < kNumJoints; ++j) {
    if (parents[j] < 0 || parents[j] >= j) {
      throw ConfigError("skeleton: parents must satisfy parents[j] < j");
    }
    has_child[parents[j]] = true;
  }
  if (static_cast<int>(fingertips.size()) != 10) {
    throw ConfigError("skeleton: expected 10 fingertip joints");
  }
  for (int f : fingertips) {
    if (f < 0 || f >= kNumJoints || has_child[f]) {
      throw ConfigError("skeleton: fingertips must be leaf joints");
    }
  }
}

// ── skeleton serialization ────────────────────────────────────────────────

std::string SkeletonModel::to_json_string() const {
  ordered_json j;
  j["parents"] = parents;
  auto& offs = j["rest_offsets"] = ordered_json::array();
  for (const auto& o : rest_offsets) offs.push_back({o.x(), o.y(), o.z()});
  j["fingertips"] = fingertips;
  auto& basis = j["shape_basis"] = ordered_json::array();
  for (const auto& b : shape_basis) {
    ordered_json rows = ordered_json::array();
    for (int r = 0; r < 3; ++r) {
      ordered_json row = ordered_json::array();
      for (int c = 0; c < kNumShapeCoeffs; ++c) row.push_back(b(r, c));
      rows.push_back(std::move(row));
    }
    basis.push_back(std::move(rows));
  }
  return j.dump(2) + "\n";
}

void SkeletonModel::save_json(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open skeleton file for writing: " + path);
  f << to_json_string();
  if (!f) throw IoError("failed writing skeleton file: " + path);
}

SkeletonModel SkeletonModel::load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open skeleton file: " + path);
  ordered_json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed skeleton json (" + path + "): " + e.what());
  }
  SkeletonModel s;
  try {
    const auto& parents = j.at("parents");
    const auto& offs = j.at("rest_offsets");
    const auto& basis = j.at("shape_basis");
    if (parents.size() != kNumJoints || offs.size() != kNumJoints ||
        basis.size() != kNumJoints) {
      throw ConfigError("skeleton json: expected 55 joints");
    }
    for (int k = 0; k < kNumJoints; ++k) {
      s.parents[k] = parents[k].get<int>();
      for (int d = 0; d < 3; ++d) s.rest_offsets[k][d] = offs[k][d].get<double>();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < kNumShapeCoeffs; ++c)
          s.shape_basis[k](r, c) = basis[k][r][c].get<double>();
    }
    s.fingertips = j.at("fingertips").get<std::vector<int>>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("skeleton json missing fields (" + path + "): " + e.what());
  }
  s.validate();
  return s;
}

// ── forward kinematics ────────────────────────────────────────────────────

MatX3 forward_kinematics(const SkeletonModel& skel,
                         const std::array<Mat3, kNumJoints>& pose,
                         const VecX& beta, const RootTransform& root, FkCache* cache) {
  const auto offs = skel.shaped_offsets(beta);
  std::array<Mat3, kNumJoints> global;
  MatX3 joints(kNumJoints, 3);

  global[0] = root.R * pose[0];
  joints.row(0) = root.t.transpose();
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = skel.parents[j];
    global[j].noalias() = global[p] * pose[j];
    joints.row(j) = joints.row(p) + (global[p] * offs[j]).transpose();
  }
  if (cache) {
    cache->local = pose;
    cache->global = global;
    cache->offsets = offs;
    cache->joints = joints;
    cache->root_R = root.R;
  }
  return joints;
}

FkGrads forward_kinematics_backward(const SkeletonModel& skel, const FkCache& cache,
                                    const MatX3& d_joints) {
  FkGrads g;
  std::array<Vec3, kNumJoints> g_pos;
  std::array<Mat3, kNumJoints> g_rot;
  for (int j = 0; j < kNumJoints; ++j) {
    g_pos[j] = d_joints.row(j).transpose();
    g_rot[j].setZero();
  }
  for (int j = kNumJoints - 1; j >= 1; --j) {
    const int p = skel.parents[j];
    // position recursion: pos_j = pos_p + global_p * off_j
    g_pos[p] += g_pos[j];
    g_rot[p].noalias() += g_pos[j] * cache.offsets[j].transpose();
    const Vec3 d_off = cache.global[p].transpose() * g_pos[j];
    g.d_beta.noalias() += skel.shape_basis[j].transpose() * d_off;
    // rotation recursion: global_j = global_p * local_j
    g_rot[p].noalias() += g_rot[j] * cache.local[j].transpose();
    g.d_pose[j].noalias() = cache.global[p].transpose() * g_rot[j];
  }
  // global_0 = root_R * local_0, pos_0 = root_t
  g.d_pose[0].noalias() = cache.root_R.transpose() * g_rot[0];
  g.d_root_R.noalias() = g_rot[0] * cache.local[0].transpose();
  g.d_root_t = g_pos[0];
  return g;
}

// ── vertex proxy ──────────────────────────────────────────────────────────

MatX3 regress_vertices(const SkeletonModel& skel, const MatX3& joints) {
  MatX3 verts(kNumVertices, 3);
  verts.topRows(kNumJoints) = joints;
  for (int j = 1; j < kNumJoints; ++j) {
    verts.row(kNumJoints + j - 1) = 0.5 * (joints.row(skel.parents[j]) + joints.row(j));
  }
  return verts;
}

MatX3 regress_vertices_backward(const SkeletonModel& skel, const MatX3& d_verts) {
  MatX3 d_joints = d_verts.topRows(kNumJoints);
  for (int j = 1; j < kNumJoints; ++j) {
    const auto g = 0.5 * d_verts.row(kNumJoints + j - 1);
    d_joints.row(skel.parents[j]) += g;
    d_joints.row(j) += g;
  }
  return d_joints;
}

std::vector<int> hand_joint_indices() {
  std::vector<int> idx;
  for (int j = kLeftHandStart; j < kLeftHandStart + kHandJointCount; ++j) idx.push_back(j);
  for (int j = kRightHandStart; j < kRightHandStart + kHandJointCount; ++j) idx.push_back(j);
  return idx;
}

std::vector<int> hand_vertex_rows(const SkeletonModel& skel) {
  std::vector<int> rows = hand_joint_indices();
  for (int tip : skel.fingertips) {
    rows.push_back(kNumJoints + tip - 1);  // midpoint of the terminal segment
  }
  return rows;
}

// ── camera ────────────────────────────────────────────────────────────────

void CameraModel::validate(double tol) const {
  for (size_t i = 0; i < frames.size(); ++i) {
    if (!is_rotation(frames[i].R, tol)) {
      throw ConfigError("camera extrinsics at frame " + std::to_string(i) +
                        " are not orthonormal");
    }
  }
  if (K.fx <= 0 || K.fy <= 0 || K.width <= 0 || K.height <= 0) {
    throw ConfigError("camera intrinsics must be positive");
  }
}

CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 f = (target - eye).normalized();
  Vec3 xc = f.cross(up);
  const double n = xc.norm();
  if (n < 1e-9) {
    throw GimbalDegenerateError("look_at: view direction parallel to up vector");
  }
  xc /= n;
  const Vec3 yc = f.cross(xc);
  CameraPose pose;
  pose.R.row(0) = xc.transpose();
  pose.R.row(1) = yc.transpose();
  pose.R.row(2) = f.transpose();
  pose.t = -pose.R * eye;
  return pose;
}

void project(const CameraIntrinsics& K, const CameraPose& pose, const MatX3& points_world,
             MatX2* pixels, std::vector<bool>* in_front) {
  const Eigen::Index n = points_world.rows();
  MatX3 cam = (points_world * pose.R.transpose()).rowwise() + pose.t.transpose();
  project_camera_points(K, cam, pixels, in_front);
  (void)n;
}

void project_camera_points(const CameraIntrinsics& K, const MatX3& points_cam,
                           MatX2* pixels, std::vector<bool>* in_front) {
  const Eigen::Index n = points_cam.rows();
  pixels->resize(n, 2);
  if (in_front) in_front->assign(n, true);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = points_cam(i, 2);
    const bool front = z > kMinDepth;
    if (in_front) (*in_front)[i] = front;
    const double ze = front ? z : kMinDepth;
    (*pixels)(i, 0) = K.fx * points_cam(i, 0) / ze + K.cx;
    (*pixels)(i, 1) = K.fy * points_cam(i, 1) / ze + K.cy;
  }
}

MatX3 project_camera_points_backward(const CameraIntrinsics& K, const MatX3& points_cam,
                                     const MatX2& d_pixels) {
  MatX3 g = MatX3::Zero(points_cam.rows(), 3);
  for (Eigen::Index i = 0; i < points_cam.rows(); ++i) {
    const double z = points_cam(i, 2);
    if (z <= kMinDepth) continue;  // clamped branch: no useful signal
    const double gu = d_pixels(i, 0), gv = d_pixels(i, 1);
    g(i, 0) = K.fx / z * gu;
    g(i, 1) = K.fy / z * gv;
    g(i, 2) = -(K.fx * points_cam(i, 0) * gu + K.fy * points_cam(i, 1) * gv) / (z * z);
  }
  return g;
}

Vec3 camera_angular_velocity(const CameraPose& a, const CameraPose& b, double fps) {
  // cam-to-world C = R^T; C_b = C_a * exp(skew(w) / fps), w in a's basis.
  return logmap(a.R * b.R.transpose()) * fps;
}

}  // namespace wbmr
