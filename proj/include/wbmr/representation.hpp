#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wbmr/common.hpp"
#include "wbmr/kinematics.hpp"

namespace wbmr {

// ── per-frame motion state ────────────────────────────────────────────────
// The trajectory lives in a gravity-view frame: a per-clip reference whose
// vertical axis opposes gravity and whose heading comes from the camera.
// Camera-frame orientation/translation are carried alongside so image
// alignment survives the decoupling.
struct MotionState {
  Rot6 gv_orient = Rot6::Zero();       // root orientation in the gravity-view frame
  Vec3 root_velocity = Vec3::Zero();   // meters/frame, in the root's own frame
  std::array<Rot6, kNumJoints> pose{}; // per-joint local rotations
  VecX shape = VecX::Zero(kNumShapeCoeffs);
  Rot6 cam_orient = Rot6::Zero();      // root orientation in the camera frame
  Vec3 cam_translation = Vec3::Zero(); // root position in the camera frame
  Eigen::Matrix<double, kNumContacts, 1> contacts =
      Eigen::Matrix<double, kNumContacts, 1>::Zero();
};

struct MotionSequence {
  double fps = 30.0;
  VecX betas = VecX::Zero(kNumShapeCoeffs);  // one shape per clip
  std::vector<MotionState> frames;

  int length() const { return static_cast<int>(frames.size()); }
};

// ── gravity-view reference ────────────────────────────────────────────────

struct GravityFrame {
  Vec3 gravity = Vec3(0, -1, 0);      // unit, world frame
  Mat3 reference = Mat3::Identity();  // gravity-view -> world
};

// Build the per-clip reference from one camera pose: up opposes gravity and
// the heading is the camera's view axis projected onto the horizontal plane.
// When the view axis is parallel to gravity the heading is undefined; the
// fallback yaw is used if provided, otherwise GimbalDegenerateError.
GravityFrame make_gravity_frame(const CameraPose& cam, const Vec3& gravity,
                                const Mat3* fallback_reference = nullptr);

// As above, but scanning a camera trajectory for the first frame with a
// well-defined heading.
GravityFrame make_gravity_frame(const CameraModel& cam, const Vec3& gravity);

// Re-expression of the root orientation between camera and gravity-view
// frames, holding world motion fixed.
Rot6 camera_to_gravity_view(const Rot6& cam_orient, const CameraPose& cam,
                            const GravityFrame& gv);
Rot6 gravity_view_to_camera(const Rot6& gv_orient, const CameraPose& cam,
                            const GravityFrame& gv);

// ── trajectories ──────────────────────────────────────────────────────────

// Accumulate per-frame root-local velocities into world root transforms.
// The initial transform anchors the heading: world rotation at frame t is
// R_ref * decode(gv_orient_t) with R_ref = initial.R * decode(gv_orient_0)^-1.
std::vector<RootTransform> integrate_trajectory(const MotionSequence& seq,
                                                const RootTransform& initial);

// Canonical realization used by losses and metrics: anchor chosen so
// R_ref = I and the root starts at the origin.
std::vector<RootTransform> canonical_roots(const MotionSequence& seq);

// World joint positions of every frame under the canonical anchor.
std::vector<MatX3> joint_trajectory(const MotionSequence& seq, const SkeletonModel& skel);

// Per-frame local pose rotations decoded from the state.
std::array<Mat3, kNumJoints> decode_pose(const MotionState& state);

// ── ground-truth derivation ───────────────────────────────────────────────

// A clip expressed directly in world coordinates.
struct WorldMotion {
  double fps = 30.0;
  VecX betas = VecX::Zero(kNumShapeCoeffs);
  std::vector<std::array<Mat3, kNumJoints>> pose;  // local joint rotations
  std::vector<RootTransform> root;                 // world root transforms

  int length() const { return static_cast<int>(pose.size()); }
};

inline constexpr double kContactSpeedThreshold = 0.002;  // meters/frame

// Express a world clip in the coupled state representation. Contacts are
// labeled 1 where an end effector's world speed stays under the threshold.
MotionSequence derive_ground_truth_state(const WorldMotion& world, const CameraModel& cam,
                                         const GravityFrame& gv, const SkeletonModel& skel,
                                         double contact_speed_threshold = kContactSpeedThreshold);

// ── serialization ─────────────────────────────────────────────────────────

void save_motion(const MotionSequence& seq, const std::string& path);
MotionSequence load_motion(const std::string& path);

}  // namespace wbmr
