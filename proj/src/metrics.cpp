#include "wbmr/metrics.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "wbmr/errors.hpp"

namespace wbmr {

namespace {

constexpr double kMm = 1000.0;

double mean_row_distance(const MatX3& a, const MatX3& b) {
  double sum = 0.0;
  for (int i = 0; i < a.rows(); ++i) sum += (a.row(i) - b.row(i)).norm();
  return sum / static_cast<double>(a.rows());
}

MatX3 take_rows(const MatX3& m, const std::vector<int>& rows) {
  MatX3 out(static_cast<int>(rows.size()), 3);
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<int>(i)) = m.row(rows[i]);
  return out;
}

// Joint a vertex-proxy row articulates with; midpoint rows are stored by
// their bone's child joint.
int row_joint(int row) { return row < kNumJoints ? row : row - kNumJoints + 1; }

bool in_hand(int joint, int start) { return joint >= start && joint < start + kHandJointCount; }

std::vector<int> side_rows(const std::vector<int>& rows, int hand_start) {
  std::vector<int> out;
  for (int r : rows) {
    if (in_hand(row_joint(r), hand_start)) out.push_back(r);
  }
  return out;
}

// Pooled per-point error with each listed group aligned independently.
double grouped_procrustes_error_mm(const MatX3& pred, const MatX3& gt,
                                   const std::vector<std::vector<int>>& groups) {
  double sum = 0.0;
  int count = 0;
  for (const auto& rows : groups) {
    const MatX3 p = take_rows(pred, rows);
    const MatX3 g = take_rows(gt, rows);
    const MatX3 aligned = procrustes_align(p, g).apply(p);
    for (int i = 0; i < aligned.rows(); ++i) sum += (aligned.row(i) - g.row(i)).norm();
    count += static_cast<int>(rows.size());
  }
  return kMm * sum / static_cast<double>(count);
}

void check_point_trajectory(const std::vector<MatX3>& x, int rows, const char* what) {
  for (const auto& frame : x) {
    if (frame.rows() != rows) {
      throw ConfigError(std::string(what) + ": every frame must carry " + std::to_string(rows) +
                        " points");
    }
  }
}

std::string format_value(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

// ── similarity alignment ──────────────────────────────────────────────────

MatX3 SimilarityTransform::apply(const MatX3& points) const {
  MatX3 out = scale * (points * R.transpose());
  out.rowwise() += t.transpose();
  return out;
}

SimilarityTransform procrustes_align(const MatX3& source, const MatX3& target) {
  if (source.rows() != target.rows()) {
    throw ConfigError("alignment needs matched point sets");
  }
  const int n = static_cast<int>(source.rows());
  if (n < 3) {
    throw DegenerateAlignmentError("alignment needs at least three points");
  }
  const Eigen::RowVector3d mu_s = source.colwise().mean();
  const Eigen::RowVector3d mu_t = target.colwise().mean();
  const MatX3 xs = source.rowwise() - mu_s;
  const MatX3 xt = target.rowwise() - mu_t;
  const double var_s = xs.squaredNorm() / n;

  const Mat3 cov = (xt.transpose() * xs) / n;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  // A rotation is pinned down only when the paired spread covers two
  // directions; coincident or collinear configurations leave it free.
  if (var_s <= 0.0 || d(0) <= 0.0 || d(1) <= 1e-9 * d(0)) {
    throw DegenerateAlignmentError("point configuration does not determine a rotation");
  }

  Vec3 signs = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    signs(2) = -1.0;  // keep the rotation proper by flipping the weakest axis
  }
  SimilarityTransform out;
  out.R = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
  out.scale = d.dot(signs) / var_s;
  out.t = mu_t.transpose() - out.scale * out.R * mu_s.transpose();
  return out;
}

double procrustes_error_mm(const MatX3& pred, const MatX3& gt) {
  const MatX3 aligned = procrustes_align(pred, gt).apply(pred);
  return kMm * mean_row_distance(aligned, gt);
}

// ── position metrics ──────────────────────────────────────────────────────

SubsetMetrics position_metrics(const PositionInputs& in, const SkeletonModel& skel,
                               MetricSubset subset) {
  const int T = in.length();
  if (T == 0 || static_cast<int>(in.gt_joints.size()) != T ||
      static_cast<int>(in.pred_verts.size()) != T ||
      static_cast<int>(in.gt_verts.size()) != T) {
    throw ConfigError("position metrics need four equally long non-empty trajectories");
  }
  check_point_trajectory(in.pred_joints, kNumJoints, "predicted joints");
  check_point_trajectory(in.gt_joints, kNumJoints, "ground-truth joints");
  check_point_trajectory(in.pred_verts, kNumVertices, "predicted vertices");
  check_point_trajectory(in.gt_verts, kNumVertices, "ground-truth vertices");

  std::vector<std::vector<int>> joint_groups;
  std::vector<std::vector<int>> vert_groups;
  std::vector<int> pve_rows;
  if (subset == MetricSubset::kAll) {
    std::vector<int> all_joints(kNumJoints);
    for (int j = 0; j < kNumJoints; ++j) all_joints[j] = j;
    std::vector<int> all_verts(kNumVertices);
    for (int v = 0; v < kNumVertices; ++v) all_verts[v] = v;
    joint_groups = {all_joints};
    vert_groups = {all_verts};
    pve_rows = all_verts;
  } else {
    // Each hand is aligned on its own; errors are pooled over both hands.
    const std::vector<int> joints = hand_joint_indices();
    const std::vector<int> verts = hand_vertex_rows(skel);
    joint_groups = {side_rows(joints, kLeftHandStart), side_rows(joints, kRightHandStart)};
    vert_groups = {side_rows(verts, kLeftHandStart), side_rows(verts, kRightHandStart)};
    pve_rows = verts;
  }

  SubsetMetrics out;
  for (int t = 0; t < T; ++t) {
    // Unaligned error: remove each side's own pelvis translation, keeping
    // global orientation error visible.
    MatX3 pv = in.pred_verts[t];
    pv.rowwise() -= in.pred_joints[t].row(0);
    MatX3 gv = in.gt_verts[t];
    gv.rowwise() -= in.gt_joints[t].row(0);
    double pve_sum = 0.0;
    for (int r : pve_rows) pve_sum += (pv.row(r) - gv.row(r)).norm();
    out.pve += kMm * pve_sum / static_cast<double>(pve_rows.size());

    out.pa_pve += grouped_procrustes_error_mm(in.pred_verts[t], in.gt_verts[t], vert_groups);
    out.pa_mpjpe += grouped_procrustes_error_mm(in.pred_joints[t], in.gt_joints[t], joint_groups);
  }
  out.pve /= T;
  out.pa_pve /= T;
  out.pa_mpjpe /= T;
  return out;
}

namespace {

PositionInputs realize_position_inputs(const MotionSequence& pred, const MotionSequence& gt,
                                       const SkeletonModel& skel) {
  if (pred.length() != gt.length()) {
    throw ConfigError("prediction and ground truth lengths differ");
  }
  PositionInputs in;
  in.pred_joints = joint_trajectory(pred, skel);
  in.gt_joints = joint_trajectory(gt, skel);
  in.pred_verts.reserve(pred.length());
  in.gt_verts.reserve(gt.length());
  for (int t = 0; t < pred.length(); ++t) {
    in.pred_verts.push_back(regress_vertices(skel, in.pred_joints[t]));
    in.gt_verts.push_back(regress_vertices(skel, in.gt_joints[t]));
  }
  return in;
}

}  // namespace

SubsetMetrics position_metrics(const MotionSequence& pred, const MotionSequence& gt,
                               const SkeletonModel& skel, MetricSubset subset) {
  return position_metrics(realize_position_inputs(pred, gt, skel), skel, subset);
}

// ── temporal metrics ──────────────────────────────────────────────────────

std::vector<MatX3> time_derivative(const std::vector<MatX3>& x, double fps) {
  if (fps <= 0.0) throw ConfigError("frame rate must be positive");
  const int T = static_cast<int>(x.size());
  if (T < 2) throw ConfigError("derivative needs at least two frames");
  check_point_trajectory(x, static_cast<int>(x[0].rows()), "trajectory");

  std::vector<MatX3> d(T);
  d[0] = (x[1] - x[0]) * fps;
  d[T - 1] = (x[T - 1] - x[T - 2]) * fps;
  for (int t = 1; t + 1 < T; ++t) d[t] = (x[t + 1] - x[t - 1]) * (0.5 * fps);
  return d;
}

namespace {

double mean_trajectory_distance(const std::vector<MatX3>& a, const std::vector<MatX3>& b) {
  double sum = 0.0;
  for (size_t t = 0; t < a.size(); ++t) sum += mean_row_distance(a[t], b[t]);
  return sum / static_cast<double>(a.size());
}

double mean_trajectory_norm(const std::vector<MatX3>& a) {
  double sum = 0.0;
  long count = 0;
  for (const auto& frame : a) {
    for (int i = 0; i < frame.rows(); ++i) sum += frame.row(i).norm();
    count += frame.rows();
  }
  return sum / static_cast<double>(count);
}

}  // namespace

TemporalMetrics temporal_metrics(const std::vector<MatX3>& pred_joints,
                                 const std::vector<MatX3>& gt_joints, double fps) {
  if (pred_joints.size() != gt_joints.size()) {
    throw ConfigError("temporal metrics need equally long trajectories");
  }
  const int T = static_cast<int>(pred_joints.size());
  if (T < 4) {
    throw ConfigError("temporal metrics are undefined for clips shorter than four frames");
  }
  if (!pred_joints.empty() && pred_joints[0].rows() != gt_joints[0].rows()) {
    throw ConfigError("temporal metrics need matching point counts");
  }
  check_point_trajectory(gt_joints, static_cast<int>(gt_joints[0].rows()), "ground truth");

  const std::vector<MatX3> vp = time_derivative(pred_joints, fps);
  const std::vector<MatX3> vg = time_derivative(gt_joints, fps);
  const std::vector<MatX3> ap = time_derivative(vp, fps);
  const std::vector<MatX3> ag = time_derivative(vg, fps);
  const std::vector<MatX3> jp = time_derivative(ap, fps);

  TemporalMetrics out;
  out.mpjve = kMm * mean_trajectory_distance(vp, vg);
  out.accel = mean_trajectory_distance(ap, ag);
  out.jitter = mean_trajectory_norm(jp);
  return out;
}

// ── report ────────────────────────────────────────────────────────────────

std::string MetricsReport::to_json_string() const {
  auto subset = [](const SubsetMetrics& s) {
    return nlohmann::ordered_json{
        {"pa_pve_mm", s.pa_pve}, {"pve_mm", s.pve}, {"pa_mpjpe_mm", s.pa_mpjpe}};
  };
  nlohmann::ordered_json j;
  j["all"] = subset(all);
  j["hands"] = subset(hands);
  j["mpjve_mm_per_s"] = mpjve;
  j["accel_m_per_s2"] = accel;
  j["jitter_m_per_s3"] = jitter;
  j["fps"] = fps;
  return j.dump(2);
}

std::string MetricsReport::csv_header() {
  return "clip,all_pa_pve_mm,all_pve_mm,all_pa_mpjpe_mm,"
         "hands_pa_pve_mm,hands_pve_mm,hands_pa_mpjpe_mm,"
         "mpjve_mm_per_s,accel_m_per_s2,jitter_m_per_s3,fps";
}

std::string MetricsReport::csv_row(const std::string& clip_id) const {
  std::ostringstream os;
  os << clip_id;
  for (double v : {all.pa_pve, all.pve, all.pa_mpjpe, hands.pa_pve, hands.pve, hands.pa_mpjpe,
                   mpjve, accel, jitter, fps}) {
    os << ',' << format_value(v);
  }
  return os.str();
}

MetricsReport evaluate_motion(const MotionSequence& pred, const MotionSequence& gt,
                              const SkeletonModel& skel) {
  if (std::abs(pred.fps - gt.fps) > 1e-9) {
    throw ConfigError("prediction and ground truth frame rates differ");
  }
  const PositionInputs in = realize_position_inputs(pred, gt, skel);

  MetricsReport report;
  report.all = position_metrics(in, skel, MetricSubset::kAll);
  report.hands = position_metrics(in, skel, MetricSubset::kHands);
  const TemporalMetrics tm = temporal_metrics(in.pred_joints, in.gt_joints, gt.fps);
  report.mpjve = tm.mpjve;
  report.accel = tm.accel;
  report.jitter = tm.jitter;
  report.fps = gt.fps;
  return report;
}

}  // namespace wbmr
