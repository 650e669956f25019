#include "wbmr/objectives.hpp"

#include <cmath>

#include "wbmr/errors.hpp"
#include "wbmr/geometry.hpp"

namespace wbmr {

namespace {

constexpr double kMm = 1000.0;  // meters -> millimeters
constexpr int kBodyPoseJoints = kLeftHandStart;            // 25
constexpr int kHandPoseJoints = kNumJoints - kLeftHandStart;  // 30
constexpr int kReprojRows = kBodyKeypoints + 2 * kHandKeypoints;  // per frame

template <typename Derived>
double l1(const Eigen::MatrixBase<Derived>& m) {
  return m.array().abs().sum();
}

// Elementwise subgradient of |x|; zero at zero.
template <typename Derived>
auto sgn(const Eigen::MatrixBase<Derived>& m) {
  return m.array().sign().matrix();
}

// Numerically safe binary cross-entropy from a logit.
double bce(double logit, double y) {
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

double sigmoid1(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ── LossWeights ───────────────────────────────────────────────────────────

LossWeights LossWeights::stage_one() { return LossWeights{}; }

LossWeights LossWeights::stage_two() {
  LossWeights w;
  w.stage = 2;
  w.w_hand_pose_multiplier = 4.0;
  w.w_tip = 1.0;
  return w;
}

void LossWeights::validate() const {
  const double all[] = {w_pose, w_joints3d, w_verts,  w_shape,
                        w_traj, w_contact,  w_hand_pose_multiplier,
                        w_tip,  w_vis,      w_temporal};
  for (double v : all)
    if (!(v >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (stage != 1 && stage != 2) throw ConfigError("loss stage must be 1 or 2");
}

// ── standalone terms ──────────────────────────────────────────────────────

double fingertip_loss(const std::vector<MatX3>& pred, const std::vector<MatX3>& target,
                      const std::vector<int>& tips) {
  if (pred.size() != target.size())
    throw ConfigError("fingertip loss needs equal-length sequences");
  double sum = 0.0;
  for (size_t t = 0; t < pred.size(); ++t)
    for (int j : tips) sum += (pred[t].row(j) - target[t].row(j)).cwiseAbs().sum();
  return kMm * sum;
}

ReprojectionResult visibility_reprojection_loss(const CameraIntrinsics& K, const MatX3& points_cam,
                                                const MatX2& detected, const VecX& weights,
                                                MatX3* d_points, double d_loss) {
  const int n = static_cast<int>(points_cam.rows());
  if (detected.rows() != n || weights.size() != n)
    throw ConfigError("reprojection inputs must have matching row counts");
  if (d_points != nullptr) *d_points = MatX3::Zero(n, 3);

  MatX2 px;
  std::vector<bool> in_front;
  project_camera_points(K, points_cam, &px, &in_front);

  VecX w = weights;
  for (int i = 0; i < n; ++i)
    if (!in_front[i]) w[i] = 0.0;

  ReprojectionResult res;
  res.weight_sum = w.sum();
  if (res.weight_sum <= 0.0) return res;  // loss 0, no evidence, zero grads

  res.no_evidence = false;
  const MatX2 diff = px - detected;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += w[i] * diff.row(i).cwiseAbs().sum();
  res.loss = sum / res.weight_sum;

  if (d_points != nullptr) {
    MatX2 d_px(n, 2);
    for (int i = 0; i < n; ++i)
      d_px.row(i) = (w[i] * d_loss / res.weight_sum) * sgn(diff.row(i));
    *d_points = project_camera_points_backward(K, points_cam, d_px);
  }
  return res;
}

double temporal_regularizer(const std::vector<MatX3>& joints, const MatX3& roots,
                            double* joints_part, double* root_part) {
  const int T = static_cast<int>(joints.size());
  if (roots.rows() != T) throw ConfigError("temporal regularizer input lengths differ");

  double jp = 0.0;
  if (T >= 2) {
    for (int t = 0; t + 1 < T; ++t) jp += l1(joints[t + 1] - joints[t]);
    jp *= kMm / (T - 1);
  }
  double rp = 0.0;
  if (T >= 3) {
    for (int t = 0; t + 2 < T; ++t)
      rp += (roots.row(t + 2) - 2.0 * roots.row(t + 1) + roots.row(t)).cwiseAbs().sum();
    rp *= kMm / (T - 2);
  }
  if (joints_part != nullptr) *joints_part = jp;
  if (root_part != nullptr) *root_part = rp;
  return jp + rp;
}

// ── integrated objective ──────────────────────────────────────────────────

LossBreakdown compute_losses(const ModelOutput& pred, const MotionSequence& target,
                             const ObservationClip* obs, const SkeletonModel& skel,
                             const LossWeights& w, ModelOutputGrads* grads) {
  w.validate();
  const int T = pred.length();
  if (target.length() != T) throw ConfigError("prediction/target length mismatch");
  if (obs != nullptr && obs->length() != T)
    throw ConfigError("observation/prediction length mismatch");
  if (T == 0) throw ConfigError("cannot score an empty clip");

  const double mult = w.w_hand_pose_multiplier;
  const bool with_grads = grads != nullptr;

  // Decoded rotations for every orientation quantity, both sides.
  std::vector<std::array<Mat3, kNumJoints>> Rp(T), Rt(T);
  std::vector<Mat3> gv_p(T), gv_t(T), cam_p(T), cam_t(T);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < kNumJoints; ++j) {
      Rp[t][j] = rot6d_to_matrix(pred.theta.block<6, 1>(6 * j, t));
      Rt[t][j] = rot6d_to_matrix(target.frames[t].pose[j]);
    }
    gv_p[t] = rot6d_to_matrix(pred.gv_orient.col(t));
    gv_t[t] = rot6d_to_matrix(target.frames[t].gv_orient);
    cam_p[t] = rot6d_to_matrix(pred.cam_orient.col(t));
    cam_t[t] = rot6d_to_matrix(target.frames[t].cam_orient);
  }

  // Rotation-matrix and joint-position gradient accumulators.
  std::vector<std::array<Mat3, kNumJoints>> d_Rp;
  std::vector<Mat3> d_gv(T, Mat3::Zero()), d_cam(T, Mat3::Zero());
  std::vector<MatX3> d_J(T, MatX3::Zero(kNumJoints, 3));
  if (with_grads) {
    d_Rp.resize(T);
    for (auto& a : d_Rp) a.fill(Mat3::Zero());
  }

  LossBreakdown out;

  // Pose rotations, split body/hand so the emphasis factor is visible.
  double pose_body = 0.0, pose_hand = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < kNumJoints; ++j) {
      const bool hand = j >= kLeftHandStart;
      const double ang = geodesic_angle(Rp[t][j], Rt[t][j]);
      (hand ? pose_hand : pose_body) += ang;
      if (with_grads) {
        const double count = hand ? kHandPoseJoints : kBodyPoseJoints;
        const double coef = w.w_pose * (hand ? mult : 1.0) / (T * count);
        geodesic_angle_backward(Rp[t][j], Rt[t][j], coef, &d_Rp[t][j], nullptr);
      }
    }
  }
  pose_body /= T * kBodyPoseJoints;
  pose_hand /= T * kHandPoseJoints;

  // Camera-oriented, root-centered joints for both sides.
  std::vector<FkCache> cache(T);
  std::vector<MatX3> Jp(T), Jt(T);
  for (int t = 0; t < T; ++t) {
    Jp[t] = forward_kinematics(skel, Rp[t], pred.beta_avg, {cam_p[t], Vec3::Zero()}, &cache[t]);
    Jt[t] = forward_kinematics(skel, Rt[t], target.betas, {cam_t[t], Vec3::Zero()});
  }

  // 3D joints, body/hand split, millimeters.
  double j3_body = 0.0, j3_hand = 0.0;
  for (int t = 0; t < T; ++t) {
    const MatX3 diff = Jp[t] - Jt[t];
    j3_body += l1(diff.topRows(kBodyPoseJoints));
    j3_hand += l1(diff.bottomRows(kHandPoseJoints));
    if (with_grads) {
      const double cb = w.w_joints3d * kMm / (T * kBodyPoseJoints);
      const double ch = w.w_joints3d * mult * kMm / (T * kHandPoseJoints);
      d_J[t].topRows(kBodyPoseJoints) += cb * sgn(diff.topRows(kBodyPoseJoints));
      d_J[t].bottomRows(kHandPoseJoints) += ch * sgn(diff.bottomRows(kHandPoseJoints));
    }
  }
  j3_body *= kMm / (T * kBodyPoseJoints);
  j3_hand *= kMm / (T * kHandPoseJoints);

  // Vertex proxy, millimeters (uniform — no hand emphasis here).
  double verts = 0.0;
  int n_verts = 0;
  for (int t = 0; t < T; ++t) {
    const MatX3 Vp = regress_vertices(skel, Jp[t]);
    const MatX3 Vt = regress_vertices(skel, Jt[t]);
    n_verts = static_cast<int>(Vp.rows());
    verts += l1(Vp - Vt);
    if (with_grads) {
      const MatX3 d_V = (w.w_verts * kMm / (double(T) * n_verts)) * sgn(Vp - Vt);
      d_J[t] += regress_vertices_backward(skel, d_V);
    }
  }
  verts *= kMm / (double(T) * n_verts);

  // Fingertip emphasis. The standalone oracle is a raw sum; inside the
  // composite objective the term is normalized per tip and frame so its
  // scale matches the other millimeter terms regardless of window length.
  double tip = 0.0;
  const int n_tips = static_cast<int>(skel.fingertips.size());
  const double tip_norm = kMm / (double(T) * n_tips);
  for (int t = 0; t < T; ++t) {
    for (int j : skel.fingertips) {
      const Eigen::RowVector3d diff = Jp[t].row(j) - Jt[t].row(j);
      tip += diff.cwiseAbs().sum();
      if (with_grads) d_J[t].row(j) += (w.w_tip * tip_norm) * sgn(diff);
    }
  }
  tip *= tip_norm;

  // Trajectory terms.
  double traj_gv = 0.0, traj_vel = 0.0, traj_cam_r = 0.0, traj_cam_t = 0.0;
  for (int t = 0; t < T; ++t) {
    traj_gv += geodesic_angle(gv_p[t], gv_t[t]);
    traj_cam_r += geodesic_angle(cam_p[t], cam_t[t]);
    const Vec3 dv = pred.root_vel.col(t) - target.frames[t].root_velocity;
    const Vec3 dtau = pred.cam_trans.col(t) - target.frames[t].cam_translation;
    traj_vel += dv.cwiseAbs().sum();
    traj_cam_t += dtau.cwiseAbs().sum();
    if (with_grads) {
      geodesic_angle_backward(gv_p[t], gv_t[t], w.w_traj / T, &d_gv[t], nullptr);
      geodesic_angle_backward(cam_p[t], cam_t[t], w.w_traj / T, &d_cam[t], nullptr);
      grads->root_vel.col(t) += (w.w_traj / T) * sgn(dv);
      grads->cam_trans.col(t) += (w.w_traj / T) * sgn(dtau);
    }
  }
  traj_gv /= T;
  traj_vel /= T;
  traj_cam_r /= T;
  traj_cam_t /= T;

  // Shape.
  const VecX dbeta = pred.beta_avg - target.betas;
  const double shape = dbeta.cwiseAbs().sum() / kNumShapeCoeffs;
  if (with_grads) grads->beta_avg += (w.w_shape / kNumShapeCoeffs) * sgn(dbeta);

  // Contacts: binary cross-entropy on the logits.
  double contact = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < kNumContacts; ++c) {
      const double logit = pred.contact_logits(c, t);
      const double y = target.frames[t].contacts[c];
      contact += bce(logit, y);
      if (with_grads)
        grads->contact_logits(c, t) +=
            (w.w_contact / (T * kNumContacts)) * (sigmoid1(logit) - y);
    }
  }
  contact /= T * kNumContacts;

  // Visibility-weighted reprojection against the stored detections.
  double reproj = 0.0;
  if (obs != nullptr) {
    MatX3 P(T * kReprojRows, 3);
    MatX2 X(T * kReprojRows, 2);
    VecX Wt(T * kReprojRows);
    for (int t = 0; t < T; ++t) {
      const int r0 = t * kReprojRows;
      const Eigen::RowVector3d tau = pred.cam_trans.col(t).transpose();
      const FrameObservation& fr = obs->frames[t];
      const bool body_ok =
          fr.body.points.rows() == kBodyKeypoints && fr.body.conf.size() == kBodyKeypoints;
      for (int j = 0; j < kBodyKeypoints; ++j) {
        P.row(r0 + j) = Jp[t].row(j) + tau;
        if (body_ok)
          X.row(r0 + j) = fr.body.points.row(j);
        else
          X.row(r0 + j).setZero();
        const double c = body_ok ? fr.body.conf[j] : 0.0;
        Wt[r0 + j] = c >= kConfidenceThreshold ? c : 0.0;
      }
      for (int side = 0; side < 2; ++side) {
        const HandObservation& h = side == 0 ? fr.left : fr.right;
        const bool hand_ok =
            h.kp.points.rows() == kHandKeypoints && h.kp.conf.size() == kHandKeypoints;
        const auto& sources = hand_keypoint_sources(side);
        const int base = r0 + kBodyKeypoints + side * kHandKeypoints;
        for (int k = 0; k < kHandKeypoints; ++k) {
          const HandKeypointSource& s = sources[k];
          Eigen::RowVector3d pt = Jp[t].row(s.a);
          if (s.b >= 0) pt = 0.5 * (pt + Jp[t].row(s.b));
          P.row(base + k) = pt + tau;
          if (hand_ok)
            X.row(base + k) = h.kp.points.row(k);
          else
            X.row(base + k).setZero();
          const double c = hand_ok ? h.kp.conf[k] : 0.0;
          Wt[base + k] = (h.visible && c >= kConfidenceThreshold) ? c : 0.0;
        }
      }
    }
    MatX3 dP;
    const ReprojectionResult res = visibility_reprojection_loss(
        obs->K, P, X, Wt, with_grads ? &dP : nullptr, w.w_vis);
    reproj = res.loss;
    out.vis_no_evidence = res.no_evidence;
    if (with_grads && !res.no_evidence) {
      for (int t = 0; t < T; ++t) {
        const int r0 = t * kReprojRows;
        for (int j = 0; j < kBodyKeypoints; ++j) {
          d_J[t].row(j) += dP.row(r0 + j);
          grads->cam_trans.col(t) += dP.row(r0 + j).transpose();
        }
        for (int side = 0; side < 2; ++side) {
          const auto& sources = hand_keypoint_sources(side);
          const int base = r0 + kBodyKeypoints + side * kHandKeypoints;
          for (int k = 0; k < kHandKeypoints; ++k) {
            const HandKeypointSource& s = sources[k];
            const Eigen::RowVector3d g = dP.row(base + k);
            if (s.b < 0) {
              d_J[t].row(s.a) += g;
            } else {
              d_J[t].row(s.a) += 0.5 * g;
              d_J[t].row(s.b) += 0.5 * g;
            }
            grads->cam_trans.col(t) += g.transpose();
          }
        }
      }
    }
  }

  // Temporal smoothness on the integrated gravity-view world motion. The
  // world joints are the camera-oriented ones re-rooted:
  //   Jw_t = Jp_t * M_t^T + p_t,   M_t = gv_t * cam_t^T,
  //   p_0 = 0, p_{t+1} = p_t + gv_t * v_t.
  double temporal_joints = 0.0, temporal_root = 0.0;
  {
    std::vector<Mat3> M(T);
    std::vector<MatX3> Jw(T);
    MatX3 p = MatX3::Zero(T, 3);
    for (int t = 0; t < T; ++t) {
      M[t] = gv_p[t] * cam_p[t].transpose();
      Jw[t] = Jp[t] * M[t].transpose();
      Jw[t].rowwise() += p.row(t);
      if (t + 1 < T)
        p.row(t + 1) = p.row(t) + (gv_p[t] * pred.root_vel.col(t)).transpose();
    }
    std::vector<MatX3> d_Jw(T, MatX3::Zero(kNumJoints, 3));
    MatX3 d_p = MatX3::Zero(T, 3);

    if (T >= 2) {
      const double cj = w.w_temporal * kMm / (T - 1);
      for (int t = 0; t + 1 < T; ++t) {
        const MatX3 diff = Jw[t + 1] - Jw[t];
        temporal_joints += l1(diff);
        if (with_grads) {
          const MatX3 s = cj * sgn(diff);
          d_Jw[t + 1] += s;
          d_Jw[t] -= s;
        }
      }
      temporal_joints *= kMm / (T - 1);
    }
    if (T >= 3) {
      const double cr = w.w_temporal * kMm / (T - 2);
      for (int t = 0; t + 2 < T; ++t) {
        const Eigen::RowVector3d acc = p.row(t + 2) - 2.0 * p.row(t + 1) + p.row(t);
        temporal_root += acc.cwiseAbs().sum();
        if (with_grads) {
          const Eigen::RowVector3d s = cr * sgn(acc);
          d_p.row(t + 2) += s;
          d_p.row(t + 1) -= 2.0 * s;
          d_p.row(t) += s;
        }
      }
      temporal_root *= kMm / (T - 2);
    }

    if (with_grads) {
      for (int t = 0; t < T; ++t) {
        d_J[t] += d_Jw[t] * M[t];
        const Mat3 d_M = d_Jw[t].transpose() * Jp[t];
        d_gv[t] += d_M * cam_p[t];
        d_cam[t] += d_M.transpose() * gv_p[t];
        d_p.row(t) += d_Jw[t].colwise().sum();
      }
      Vec3 carry = Vec3::Zero();
      for (int t = T - 1; t >= 1; --t) {
        carry += d_p.row(t).transpose();
        grads->root_vel.col(t - 1) += gv_p[t - 1].transpose() * carry;
        d_gv[t - 1] += carry * pred.root_vel.col(t - 1).transpose();
      }
    }
  }

  // Pull joint-position gradients through the kinematic chain, then all
  // rotation-matrix gradients through the 6D decoder.
  if (with_grads) {
    for (int t = 0; t < T; ++t) {
      const FkGrads fk = forward_kinematics_backward(skel, cache[t], d_J[t]);
      for (int j = 0; j < kNumJoints; ++j) d_Rp[t][j] += fk.d_pose[j];
      d_cam[t] += fk.d_root_R;
      grads->beta_avg += fk.d_beta;
      for (int j = 0; j < kNumJoints; ++j)
        grads->theta.block<6, 1>(6 * j, t) +=
            rot6d_to_matrix_backward(pred.theta.block<6, 1>(6 * j, t), d_Rp[t][j]);
      grads->gv_orient.col(t) += rot6d_to_matrix_backward(pred.gv_orient.col(t), d_gv[t]);
      grads->cam_orient.col(t) += rot6d_to_matrix_backward(pred.cam_orient.col(t), d_cam[t]);
    }
  }

  // Assemble the report.
  auto put = [&out](const std::string& name, double raw, double weighted) {
    out.terms[name] = raw;
    out.contributions[name] = weighted;
    out.total += weighted;
  };
  put("pose_body", pose_body, w.w_pose * pose_body);
  put("pose_hand", pose_hand, w.w_pose * mult * pose_hand);
  put("joints3d_body", j3_body, w.w_joints3d * j3_body);
  put("joints3d_hand", j3_hand, w.w_joints3d * mult * j3_hand);
  put("verts", verts, w.w_verts * verts);
  put("shape", shape, w.w_shape * shape);
  put("traj_gv_orient", traj_gv, w.w_traj * traj_gv);
  put("traj_root_vel", traj_vel, w.w_traj * traj_vel);
  put("traj_cam_orient", traj_cam_r, w.w_traj * traj_cam_r);
  put("traj_cam_trans", traj_cam_t, w.w_traj * traj_cam_t);
  put("contact", contact, w.w_contact * contact);
  put("fingertip", tip, w.w_tip * tip);
  if (obs != nullptr) put("reprojection", reproj, w.w_vis * reproj);
  put("temporal_joints", temporal_joints, w.w_temporal * temporal_joints);
  put("temporal_root", temporal_root, w.w_temporal * temporal_root);
  return out;
}

}  // namespace wbmr
