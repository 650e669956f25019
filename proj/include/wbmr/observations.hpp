#pragma once

#include <string>
#include <vector>

#include "wbmr/augmentation.hpp"
#include "wbmr/common.hpp"
#include "wbmr/kinematics.hpp"
#include "wbmr/representation.hpp"
#include "wbmr/rng.hpp"

namespace wbmr {

// ── keypoint layouts ──────────────────────────────────────────────────────
//
// Body (25): the pelvis-through-wrist chain plus the jaw and both eyes used
// as head markers — skeleton joints 0..24 in order.
// Hand (21): the wrist, then for each finger its three joints followed by a
// distal marker at the midpoint of the last finger segment.

inline constexpr int kHandKeypointWrist = 0;

// 3D marker positions for the two layouts, given the 55 world joints.
MatX3 body_keypoint_positions(const MatX3& joints);
MatX3 hand_keypoint_positions(const MatX3& joints, int side);  // 0 = left, 1 = right

// For each of the 21 hand keypoints, the joints whose positions average to
// that keypoint (one joint, or two for the distal markers).
struct HandKeypointSource {
  int a, b;  // b < 0 means the keypoint is joint a directly
};
const std::vector<HandKeypointSource>& hand_keypoint_sources(int side);

// ── observation synthesis ─────────────────────────────────────────────────

struct NoiseConfig {
  double kp_sigma = 0.0;        // Gaussian pixel noise on detections
  double conf_sigma = 4.0;      // confidence decay scale, pixels
  double feature_sigma = 0.05;  // noise on the synthetic crop features
  int feature_dim = 32;
  uint64_t feature_seed = 0x0b5f00d;  // seed of the fixed feature projection
};

// Dimensionless detection-box summary: box center offset from the principal
// point and box size, each divided by the focal length. All-zero means the
// box is masked.
Vec3 build_box_token(const PixelBox& box, const CameraIntrinsics& K);

struct HandObservation {
  Keypoints2D kp;                    // 21 points, full-image pixels
  std::vector<char> valid_kp;        // confident and inside the crop
  VecX features;
  PixelBox box;
  Vec3 box_token = Vec3::Zero();
  int visible = 0;                   // the per-frame hand flag
};

struct FrameObservation {
  Keypoints2D body;                  // 25 points, full-image pixels
  std::vector<char> valid_kp;
  VecX features;
  PixelBox box;
  Vec3 box_token = Vec3::Zero();
  Vec3 cam_ang_vel = Vec3::Zero();   // rad/s, camera frame
  HandObservation left, right;
};

struct ObservationClip {
  double fps = 30.0;
  CameraIntrinsics K;
  CropRect crop;
  bool blur = false;
  std::vector<FrameObservation> frames;

  int length() const { return static_cast<int>(frames.size()); }
};

// Noise-free projected detections for every frame — the input the cropping
// stage works from. Points behind the camera get confidence 0.
ClipKeypoints project_clean_keypoints(const WorldMotion& world, const CameraModel& cam,
                                      const SkeletonModel& skel);

// Full synthetic detector stand-in for one clip and one view:
//   detections   = projected joints + Gaussian pixel noise,
//   confidence   = exp(-|noise| / conf_sigma), or U(0, 0.3) outside the crop,
//   features     = fixed seeded linear map of the normalized detection
//                  layout, plus noise (stronger when the view is blur-flagged),
//   boxes        = fitted around confident in-crop detections, 10% padding,
//   hand flags   = re-evaluated from the noisy detections inside the crop.
// Masked hands have their features, box and validity flags cleared.
// Deterministic given (inputs, seed).
ObservationClip synthesize_observations(const WorldMotion& world, const CameraModel& cam,
                                        const SkeletonModel& skel, const CropSpec& view,
                                        const CloseupConfig& crop_cfg, const NoiseConfig& noise,
                                        uint64_t seed);

// Coordinates mapped to [-1, 1] across the crop window.
Vec2 normalize_to_crop(const Vec2& pixel, const CropRect& rect);

// Re-applies the masking rules implied by the stored flags: invalid hands
// get zeroed features/boxes and all-false point validity. Guarantees
// downstream results cannot depend on masked fields.
void apply_masking(ObservationClip& clip);

void save_observations(const ObservationClip& clip, const std::string& path);
ObservationClip load_observations(const std::string& path);

}  // namespace wbmr
