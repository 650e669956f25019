#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "wbmr/common.hpp"
#include "wbmr/geometry.hpp"

namespace wbmr {

// ── skeleton ──────────────────────────────────────────────────────────────

// Articulated 55-joint tree with per-joint rest offsets and a linear shape
// basis that perturbs the offsets as offset_j(beta) = rest_j + basis_j * beta.
struct SkeletonModel {
  std::array<int, kNumJoints> parents{};                    // parents[0] == -1
  std::array<Vec3, kNumJoints> rest_offsets{};              // from parent, meters
  std::array<Eigen::Matrix<double, 3, kNumShapeCoeffs>, kNumJoints> shape_basis{};
  std::vector<int> fingertips;                              // 10 leaf joints

  // Bones as (parent, child), ordered by child index.
  std::vector<std::pair<int, int>> bones() const;

  std::array<Vec3, kNumJoints> shaped_offsets(const VecX& beta) const;

  // Joint positions with identity pose and the given shape, root at origin.
  std::array<Vec3, kNumJoints> rest_positions(const VecX& beta) const;

  void validate() const;  // throws ConfigError on malformed trees

  static SkeletonModel canonical();            // procedural reference skeleton
  static SkeletonModel load_json(const std::string& path);
  void save_json(const std::string& path) const;
  std::string to_json_string() const;
};

const std::array<const char*, kNumJoints>& joint_names();

// ── forward kinematics ────────────────────────────────────────────────────

struct RootTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

// Saved forward state so the backward pass can avoid recomputation.
struct FkCache {
  std::array<Mat3, kNumJoints> local;     // pose rotations as given
  std::array<Mat3, kNumJoints> global;    // accumulated world rotations
  std::array<Vec3, kNumJoints> offsets;   // shaped offsets used
  MatX3 joints;                           // 55 x 3 world positions
  Mat3 root_R;
};

// World joint positions. The root's world rotation composes the root
// transform with pose[0]; its position equals root.t exactly.
MatX3 forward_kinematics(const SkeletonModel& skel,
                         const std::array<Mat3, kNumJoints>& pose,
                         const VecX& beta, const RootTransform& root,
                         FkCache* cache = nullptr);

struct FkGrads {
  std::array<Mat3, kNumJoints> d_pose{};
  Mat3 d_root_R = Mat3::Zero();
  Vec3 d_root_t = Vec3::Zero();
  VecX d_beta = VecX::Zero(kNumShapeCoeffs);
};

// Reverse accumulation of dL/d(joint positions) through the kinematic chain.
FkGrads forward_kinematics_backward(const SkeletonModel& skel, const FkCache& cache,
                                    const MatX3& d_joints);

// ── vertex proxy ──────────────────────────────────────────────────────────

// Surface stand-in: all joints followed by every bone midpoint (109 x 3).
MatX3 regress_vertices(const SkeletonModel& skel, const MatX3& joints);

// Pull vertex gradients back onto joints.
MatX3 regress_vertices_backward(const SkeletonModel& skel, const MatX3& d_verts);

// Row indices of the hand evaluation subset within the vertex proxy:
// all 30 hand joints plus the midpoints of the terminal finger segments.
std::vector<int> hand_vertex_rows(const SkeletonModel& skel);
std::vector<int> hand_joint_indices();

// ── camera ────────────────────────────────────────────────────────────────

struct CameraIntrinsics {
  double fx = 800, fy = 800, cx = 640, cy = 360;
  int width = 1280, height = 720;
};

struct CameraPose {
  Mat3 R = Mat3::Identity();  // world -> camera
  Vec3 t = Vec3::Zero();
};

struct CameraModel {
  CameraIntrinsics K;
  std::vector<CameraPose> frames;

  void validate(double tol = 1e-6) const;  // rotations must be orthonormal
};

// Extrinsic looking from `eye` toward `target`; image v grows along -up.
CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

inline constexpr double kMinDepth = 1e-4;

// Pinhole projection of world points. Points with camera depth <= kMinDepth
// are flagged not-in-front and projected with the depth clamped so the
// output stays finite.
void project(const CameraIntrinsics& K, const CameraPose& pose, const MatX3& points_world,
             MatX2* pixels, std::vector<bool>* in_front);

// Projection of camera-frame points, with reverse-mode derivative; used on
// the loss path where points are already in the camera frame.
void project_camera_points(const CameraIntrinsics& K, const MatX3& points_cam,
                           MatX2* pixels, std::vector<bool>* in_front);
MatX3 project_camera_points_backward(const CameraIntrinsics& K, const MatX3& points_cam,
                                     const MatX2& d_pixels);

// Rotational rate of the camera between consecutive frames, expressed in the
// frame-a camera basis, radians/second.
Vec3 camera_angular_velocity(const CameraPose& a, const CameraPose& b, double fps);

}  // namespace wbmr
