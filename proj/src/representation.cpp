#include "wbmr/representation.hpp"

#include <fstream>

#include "json.hpp"
#include "wbmr/errors.hpp"
#include "wbmr/geometry.hpp"

namespace wbmr {

using nlohmann::ordered_json;

namespace {
constexpr double kGimbalTol = 1e-6;

Vec3 camera_view_axis_world(const CameraPose& cam) {
  return cam.R.row(2).transpose();  // camera z in world coordinates
}
}  // namespace

GravityFrame make_gravity_frame(const CameraPose& cam, const Vec3& gravity,
                                const Mat3* fallback_reference) {
  GravityFrame gv;
  gv.gravity = gravity.normalized();
  const Vec3 up = -gv.gravity;
  const Vec3 view = camera_view_axis_world(cam);
  Vec3 fwd = view - view.dot(up) * up;
  const double n = fwd.norm();
  if (n < kGimbalTol) {
    if (fallback_reference) {
      gv.reference = *fallback_reference;
      return gv;
    }
    throw GimbalDegenerateError(
        "gravity frame: camera view axis is parallel to gravity and no fallback given");
  }
  fwd /= n;
  gv.reference.col(0) = up.cross(fwd);
  gv.reference.col(1) = up;
  gv.reference.col(2) = fwd;
  return gv;
}

GravityFrame make_gravity_frame(const CameraModel& cam, const Vec3& gravity) {
  for (const auto& pose : cam.frames) {
    const Vec3 up = -gravity.normalized();
    const Vec3 view = camera_view_axis_world(pose);
    if ((view - view.dot(up) * up).norm() >= kGimbalTol) {
      return make_gravity_frame(pose, gravity);
    }
  }
  throw GimbalDegenerateError("gravity frame: every camera frame looks along gravity");
}

Rot6 camera_to_gravity_view(const Rot6& cam_orient, const CameraPose& cam,
                            const GravityFrame& gv) {
  const Mat3 r_world = cam.R.transpose() * rot6d_to_matrix(cam_orient);
  return matrix_to_rot6d(gv.reference.transpose() * r_world);
}

Rot6 gravity_view_to_camera(const Rot6& gv_orient, const CameraPose& cam,
                            const GravityFrame& gv) {
  return matrix_to_rot6d(cam.R * gv.reference * rot6d_to_matrix(gv_orient));
}

std::vector<RootTransform> integrate_trajectory(const MotionSequence& seq,
                                                const RootTransform& initial) {
  const int T = seq.length();
  std::vector<RootTransform> out(T);
  if (T == 0) return out;
  const Mat3 r_ref = initial.R * rot6d_to_matrix(seq.frames[0].gv_orient).transpose();
  out[0].R = initial.R;
  out[0].t = initial.t;
  for (int t = 1; t < T; ++t) {
    out[t].R = r_ref * rot6d_to_matrix(seq.frames[t].gv_orient);
    out[t].t = out[t - 1].t + out[t - 1].R * seq.frames[t - 1].root_velocity;
  }
  return out;
}

std::vector<RootTransform> canonical_roots(const MotionSequence& seq) {
  RootTransform initial;
  if (seq.length() > 0) initial.R = rot6d_to_matrix(seq.frames[0].gv_orient);
  return integrate_trajectory(seq, initial);
}

std::array<Mat3, kNumJoints> decode_pose(const MotionState& state) {
  std::array<Mat3, kNumJoints> pose;
  for (int j = 0; j < kNumJoints; ++j) pose[j] = rot6d_to_matrix(state.pose[j]);
  return pose;
}

std::vector<MatX3> joint_trajectory(const MotionSequence& seq, const SkeletonModel& skel) {
  const auto roots = canonical_roots(seq);
  std::vector<MatX3> joints(seq.length());
  for (int t = 0; t < seq.length(); ++t) {
    joints[t] = forward_kinematics(skel, decode_pose(seq.frames[t]), seq.betas, roots[t]);
  }
  return joints;
}

MotionSequence derive_ground_truth_state(const WorldMotion& world, const CameraModel& cam,
                                         const GravityFrame& gv, const SkeletonModel& skel,
                                         double contact_speed_threshold) {
  const int T = world.length();
  if (static_cast<int>(world.root.size()) != T) {
    throw ConfigError("world motion: pose and root lengths differ");
  }
  if (static_cast<int>(cam.frames.size()) < T) {
    throw ConfigError("world motion: camera trajectory shorter than the clip");
  }

  MotionSequence seq;
  seq.fps = world.fps;
  seq.betas = world.betas;
  seq.frames.resize(T);

  for (int t = 0; t < T; ++t) {
    MotionState& st = seq.frames[t];
    const Mat3& r_w = world.root[t].R;
    const Vec3& p_w = world.root[t].t;
    st.gv_orient = matrix_to_rot6d(gv.reference.transpose() * r_w);
    for (int j = 0; j < kNumJoints; ++j) st.pose[j] = matrix_to_rot6d(world.pose[t][j]);
    st.shape = world.betas;
    st.cam_orient = matrix_to_rot6d(cam.frames[t].R * r_w);
    st.cam_translation = cam.frames[t].R * p_w + cam.frames[t].t;
    if (t + 1 < T) {
      st.root_velocity = r_w.transpose() * (world.root[t + 1].t - p_w);
    }
  }
  if (T >= 2) seq.frames[T - 1].root_velocity = seq.frames[T - 2].root_velocity;

  // Contact labels from end-effector world speeds.
  std::vector<MatX3> joints(T);
  for (int t = 0; t < T; ++t) {
    joints[t] = forward_kinematics(skel, world.pose[t], world.betas, world.root[t]);
  }
  for (int t = 0; t < T; ++t) {
    const int a = (t + 1 < T) ? t : std::max(0, t - 1);
    const int b = (t + 1 < T) ? t + 1 : t;
    for (int c = 0; c < kNumContacts; ++c) {
      const int j = kContactJoints[c];
      const double speed = (joints[b].row(j) - joints[a].row(j)).norm();
      seq.frames[t].contacts[c] = speed < contact_speed_threshold ? 1.0 : 0.0;
    }
  }
  return seq;
}

// ── serialization ─────────────────────────────────────────────────────────

namespace {
ordered_json vec_to_json(const Eigen::Ref<const VecX>& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VecX json_to_vec(const ordered_json& a, int expected, const char* what) {
  if (static_cast<int>(a.size()) != expected) {
    throw IoError(std::string("motion json: bad length for ") + what);
  }
  VecX v(expected);
  for (int i = 0; i < expected; ++i) v[i] = a[i].get<double>();
  return v;
}
}  // namespace

void save_motion(const MotionSequence& seq, const std::string& path) {
  ordered_json j;
  j["fps"] = seq.fps;
  j["betas"] = vec_to_json(seq.betas);
  auto& frames = j["frames"] = ordered_json::array();
  for (const auto& st : seq.frames) {
    ordered_json f;
    // Stored in the state's native 6D encoding so that save -> load is
    // lossless and re-saving a loaded file reproduces it byte for byte.
    ordered_json pose = ordered_json::array();
    for (int k = 0; k < kNumJoints; ++k) {
      const Rot6& r = st.pose[k];
      pose.push_back({r[0], r[1], r[2], r[3], r[4], r[5]});
    }
    f["pose6d"] = std::move(pose);
    f["gv_orient6d"] = vec_to_json(st.gv_orient);
    f["root_vel"] = vec_to_json(st.root_velocity);
    f["cam_orient6d"] = vec_to_json(st.cam_orient);
    f["cam_trans"] = vec_to_json(st.cam_translation);
    f["contacts"] = vec_to_json(st.contacts);
    frames.push_back(std::move(f));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open motion file for writing: " + path);
  out << j.dump() << "\n";
  if (!out) throw IoError("failed writing motion file: " + path);
}

MotionSequence load_motion(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open motion file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed motion json (" + path + "): " + e.what());
  }
  MotionSequence seq;
  try {
    seq.fps = j.at("fps").get<double>();
    seq.betas = json_to_vec(j.at("betas"), kNumShapeCoeffs, "betas");
    for (const auto& f : j.at("frames")) {
      MotionState st;
      const auto& pose = f.at("pose6d");
      if (pose.size() != kNumJoints) throw IoError("motion json: pose6d must have 55 rows");
      for (int k = 0; k < kNumJoints; ++k) {
        if (pose[k].size() != 6) throw IoError("motion json: pose6d rows must have 6 entries");
        for (int c = 0; c < 6; ++c) st.pose[k][c] = pose[k][c].get<double>();
      }
      st.gv_orient = json_to_vec(f.at("gv_orient6d"), 6, "gv_orient6d");
      st.root_velocity = json_to_vec(f.at("root_vel"), 3, "root_vel");
      st.cam_orient = json_to_vec(f.at("cam_orient6d"), 6, "cam_orient6d");
      st.cam_translation = json_to_vec(f.at("cam_trans"), 3, "cam_trans");
      st.contacts = json_to_vec(f.at("contacts"), kNumContacts, "contacts");
      st.shape = seq.betas;
      seq.frames.push_back(std::move(st));
    }
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("motion json missing fields (" + path + "): " + e.what());
  }
  return seq;
}

}  // namespace wbmr
