#pragma once

#include <string>
#include <vector>

#include "wbmr/common.hpp"
#include "wbmr/kinematics.hpp"
#include "wbmr/representation.hpp"

namespace wbmr {

// ── similarity alignment ──────────────────────────────────────────────────

struct SimilarityTransform {
  double scale = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  MatX3 apply(const MatX3& points) const;  // rowwise scale * R * p + t
};

// Least-squares similarity alignment of `source` onto `target` (matched
// N x 3 point sets): the returned transform minimizes the mean squared
// distance over every choice of uniform scale, proper rotation and
// translation. Throws DegenerateAlignmentError when the problem does not
// determine a rotation (fewer than three points, coincident points, or a
// collinear configuration).
SimilarityTransform procrustes_align(const MatX3& source, const MatX3& target);

// Mean point distance in millimeters after procrustes_align(pred -> gt).
double procrustes_error_mm(const MatX3& pred, const MatX3& gt);

// ── position metrics ──────────────────────────────────────────────────────

enum class MetricSubset { kAll, kHands };

struct SubsetMetrics {
  double pa_pve = 0.0;    // vertex error after per-frame similarity alignment, mm
  double pve = 0.0;       // vertex error after removing the pelvis translation, mm
  double pa_mpjpe = 0.0;  // joint error after per-frame similarity alignment, mm
};

// Matched point trajectories the position metrics run on: per-frame joint
// sets (kNumJoints x 3) and vertex-proxy sets (kNumVertices x 3) in any
// common world frame. All four trajectories must share one length.
struct PositionInputs {
  std::vector<MatX3> pred_joints;
  std::vector<MatX3> gt_joints;
  std::vector<MatX3> pred_verts;
  std::vector<MatX3> gt_verts;

  int length() const { return static_cast<int>(pred_joints.size()); }
};

// Per-frame mean point errors, averaged over frames. The unaligned vertex
// error removes each sequence's own pelvis translation first, so it is blind
// to global position but keeps orientation error. Aligned variants fit one
// similarity transform per frame on the evaluated point set; the hands
// subset aligns each hand separately and reports the pooled error over both.
SubsetMetrics position_metrics(const PositionInputs& in, const SkeletonModel& skel,
                               MetricSubset subset);

// Convenience overload: realizes both states in the canonical world frame
// and regresses the vertex proxy before measuring.
SubsetMetrics position_metrics(const MotionSequence& pred, const MotionSequence& gt,
                               const SkeletonModel& skel, MetricSubset subset);

// ── temporal metrics ──────────────────────────────────────────────────────

// Per-frame time derivative of a point trajectory: central differences on
// interior frames, one-sided at the ends. Output has the input's length;
// higher derivatives are taken by composing the operator.
std::vector<MatX3> time_derivative(const std::vector<MatX3>& x, double fps);

struct TemporalMetrics {
  double mpjve = 0.0;   // mean velocity error vs ground truth, mm/s
  double accel = 0.0;   // mean acceleration error vs ground truth, m/s^2
  double jitter = 0.0;  // mean third-derivative magnitude of the prediction, m/s^3
};

// First/second/third-order derivative metrics over matched joint
// trajectories. Velocity and acceleration are errors against the ground
// truth; jitter measures the prediction alone. Requires at least four
// frames, matching lengths and a positive frame rate.
TemporalMetrics temporal_metrics(const std::vector<MatX3>& pred_joints,
                                 const std::vector<MatX3>& gt_joints, double fps);

// ── report ────────────────────────────────────────────────────────────────

struct MetricsReport {
  SubsetMetrics all;
  SubsetMetrics hands;
  double mpjve = 0.0;
  double accel = 0.0;
  double jitter = 0.0;
  double fps = 0.0;

  std::string to_json_string() const;

  // One spreadsheet row per evaluated clip.
  static std::string csv_header();
  std::string csv_row(const std::string& clip_id) const;
};

// Full evaluation of a predicted state sequence against ground truth:
// position metrics for the whole proxy and the hands subset, plus temporal
// metrics on the joint trajectory. Frame rates must agree.
MetricsReport evaluate_motion(const MotionSequence& pred, const MotionSequence& gt,
                              const SkeletonModel& skel);

}  // namespace wbmr
