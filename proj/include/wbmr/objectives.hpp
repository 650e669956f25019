#pragma once

#include <map>
#include <string>
#include <vector>

#include "wbmr/kinematics.hpp"
#include "wbmr/model.hpp"
#include "wbmr/observations.hpp"
#include "wbmr/representation.hpp"

namespace wbmr {

// Training objective suite.
//
// Unit conventions, fixed so that unit default weights are meaningful:
//   * rotation terms        — radians (geodesic angle),
//   * joint/vertex terms    — millimeters,
//   * trajectory terms      — radians / native meters,
//   * reprojection term     — pixels,
//   * contact term          — nats (binary cross-entropy),
//   * temporal terms        — millimeters per transition.

struct LossWeights {
  double w_pose = 1.0;
  double w_joints3d = 1.0;
  double w_verts = 0.5;
  double w_shape = 1.0;
  double w_traj = 1.0;
  double w_contact = 0.1;
  // Hand rotation and hand 3D-joint terms are additionally multiplied by
  // this emphasis factor (it is not a weight of its own term).
  double w_hand_pose_multiplier = 2.0;
  double w_tip = 0.0;
  double w_vis = 1.0;
  double w_temporal = 0.1;
  int stage = 1;

  static LossWeights stage_one();
  static LossWeights stage_two();  // multiplier 4, fingertip term active
  void validate() const;           // all weights must be >= 0
};

struct LossBreakdown {
  double total = 0.0;
  // Raw term values (no weights, no hand multiplier)...
  std::map<std::string, double> terms;
  // ...and the weighted contributions that sum to `total`.
  std::map<std::string, double> contributions;
  // Set when the reprojection term had no supported observation at all; the
  // term is then exactly zero with an exactly zero gradient.
  bool vis_no_evidence = false;
};

// ── standalone terms (position-space oracles) ─────────────────────────────

// Raw L1 sum over the distal joint subset, all frames, in millimeters.
// Joints outside `tips` never contribute.
double fingertip_loss(const std::vector<MatX3>& pred, const std::vector<MatX3>& target,
                      const std::vector<int>& tips);

struct ReprojectionResult {
  double loss = 0.0;        // pixels, weight-normalized
  double weight_sum = 0.0;  // effective support after behind-camera zeroing
  bool no_evidence = true;  // weight_sum == 0
};

// Weight-normalized L1 between projected camera-frame points and detections:
//   loss = (1/Σw) Σ_i w_i ‖Π(P_i) − x̂_i‖₁.
// Points whose camera depth is not positive have their weight forced to
// zero. With empty support the loss is defined as 0 and `d_points` (scaled
// by d_loss) is exactly zero.
ReprojectionResult visibility_reprojection_loss(const CameraIntrinsics& K, const MatX3& points_cam,
                                                const MatX2& detected, const VecX& weights,
                                                MatX3* d_points = nullptr, double d_loss = 1.0);

// Motion smoothness penalty, millimeters:
//   joints part — mean over transitions of Σ_j ‖J_{t+1,j} − J_{t,j}‖₁,
//   root part   — mean over interior frames of ‖r_{t+2} − 2 r_{t+1} + r_t‖₁.
// The root part is omitted when T < 3. Constant sequences score 0; linear
// root motion zeroes the root part.
double temporal_regularizer(const std::vector<MatX3>& joints, const MatX3& roots,
                            double* joints_part = nullptr, double* root_part = nullptr);

// ── integrated objective ──────────────────────────────────────────────────

// Complete training objective for one clip. Evaluates:
//   * geodesic rotation error on every pose joint and on the orientation
//     trajectory terms, L1 on velocities/translations/shape, BCE on contact
//     logits (hand rotation and hand 3D-joint terms carry the multiplier);
//   * 3D joint / vertex-proxy errors in the camera-oriented, root-centered
//     frame (root = decoded camera orientation at zero translation);
//   * the fingertip term above, renormalized per tip and frame so its
//     millimeter scale is window-length independent, and the reprojection
//     term;
//   * the temporal penalty on the integrated gravity-view world motion.
// `obs` supplies detections for the reprojection term; pass nullptr to skip
// it. When `grads` is given, d(total)/d(model outputs) is accumulated into
// it (the caller provides zeroed storage via ModelOutputGrads::zeros_like).
LossBreakdown compute_losses(const ModelOutput& pred, const MotionSequence& target,
                             const ObservationClip* obs, const SkeletonModel& skel,
                             const LossWeights& weights, ModelOutputGrads* grads = nullptr);

}  // namespace wbmr
