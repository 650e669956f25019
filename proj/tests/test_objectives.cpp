#include "doctest.h"

#include <cmath>

#include "wbmr/errors.hpp"
#include "wbmr/geometry.hpp"
#include "wbmr/objectives.hpp"
#include "wbmr/observations.hpp"
#include "wbmr/rng.hpp"

using namespace wbmr;

namespace {

CameraIntrinsics desk_intrinsics() { return CameraIntrinsics{500, 500, 256, 256, 512, 512}; }

WorldMotion standing_motion(int T) {
  WorldMotion w;
  w.fps = 30.0;
  w.betas = VecX::Zero(kNumShapeCoeffs);
  w.pose.resize(T);
  w.root.resize(T);
  for (int t = 0; t < T; ++t) {
    w.pose[t].fill(Mat3::Identity());
    const double a = 0.25 * std::sin(0.4 * t);
    w.pose[t][16] = expmap(Vec3(0, 0, -1.3 + a));
    w.pose[t][17] = expmap(Vec3(0, 0, 1.3 - a));
    w.pose[t][18] = expmap(Vec3(0.3 * std::sin(0.5 * t), 0, 0));
    w.root[t] = {expmap(Vec3(0, 0.1 * std::sin(0.2 * t), 0)), Vec3(0.01 * t, 0.95, 0)};
  }
  return w;
}

struct Scenario {
  SkeletonModel skel = SkeletonModel::canonical();
  CameraModel cam;
  MotionSequence target;
  ObservationClip obs;
};

Scenario make_scenario(int T, uint64_t seed = 5) {
  Scenario s;
  s.cam.K = desk_intrinsics();
  s.cam.frames.assign(T, look_at(Vec3(0, 1.1, -1.6), Vec3(0, 1.0, 0), Vec3(0, 1, 0)));
  const WorldMotion w = standing_motion(T);
  const GravityFrame gv = make_gravity_frame(s.cam, Vec3(0, -1, 0));
  s.target = derive_ground_truth_state(w, s.cam, gv, s.skel);
  const CloseupConfig ccfg;
  const ClipKeypoints clean = project_clean_keypoints(w, s.cam, s.skel);
  const CropSpec view = full_body_crop(s.cam.K.width, s.cam.K.height, clean, ccfg);
  NoiseConfig noise;
  noise.kp_sigma = 1.0;
  noise.feature_dim = 8;
  s.obs = synthesize_observations(w, s.cam, s.skel, view, ccfg, noise, seed);
  return s;
}

// A prediction that matches the target exactly; contact logits are saturated
// so the cross-entropy is exactly zero on 0/1 labels.
ModelOutput perfect_output(const MotionSequence& seq) {
  const int T = seq.length();
  ModelOutput out;
  out.theta = MatX::Zero(6 * kNumJoints, T);
  out.gv_orient = MatX::Zero(6, T);
  out.root_vel = MatX::Zero(3, T);
  out.beta = seq.betas.replicate(1, T);
  out.beta_avg = seq.betas;
  out.cam_orient = MatX::Zero(6, T);
  out.cam_trans = MatX::Zero(3, T);
  out.contact_logits = MatX::Zero(kNumContacts, T);
  for (int t = 0; t < T; ++t) {
    const MotionState& st = seq.frames[t];
    for (int j = 0; j < kNumJoints; ++j) out.theta.block<6, 1>(6 * j, t) = st.pose[j];
    out.gv_orient.col(t) = st.gv_orient;
    out.root_vel.col(t) = st.root_velocity;
    out.cam_orient.col(t) = st.cam_orient;
    out.cam_trans.col(t) = st.cam_translation;
    for (int c = 0; c < kNumContacts; ++c)
      out.contact_logits(c, t) = st.contacts[c] > 0.5 ? 800.0 : -800.0;
  }
  out.contact_probs = sigmoid(out.contact_logits);
  return out;
}

ModelOutput noisy_output(const MotionSequence& seq, Rng& rng, double scale) {
  ModelOutput out = perfect_output(seq);
  auto jiggle = [&](MatX& m, double s) {
    for (int i = 0; i < m.size(); ++i) m.data()[i] += s * rng.gaussian();
  };
  jiggle(out.theta, scale);
  jiggle(out.gv_orient, scale);
  jiggle(out.root_vel, scale);
  jiggle(out.cam_orient, scale);
  jiggle(out.cam_trans, scale);
  for (int i = 0; i < out.beta_avg.size(); ++i) out.beta_avg[i] += scale * rng.gaussian();
  out.contact_logits = MatX::Zero(kNumContacts, seq.length());
  jiggle(out.contact_logits, 1.0);
  out.contact_probs = sigmoid(out.contact_logits);
  return out;
}

}  // namespace

TEST_CASE("weights validate and stage presets differ as intended") {
  LossWeights one = LossWeights::stage_one();
  LossWeights two = LossWeights::stage_two();
  CHECK(one.stage == 1);
  CHECK(two.stage == 2);
  CHECK(one.w_hand_pose_multiplier == doctest::Approx(2.0));
  CHECK(two.w_hand_pose_multiplier == doctest::Approx(4.0));
  CHECK(one.w_tip == doctest::Approx(0.0));
  CHECK(two.w_tip == doctest::Approx(1.0));
  CHECK(one.w_verts == doctest::Approx(0.5));
  CHECK(one.w_contact == doctest::Approx(0.1));
  LossWeights bad = one;
  bad.w_vis = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("a perfect prediction zeroes every error term") {
  const Scenario s = make_scenario(4);
  const ModelOutput pred = perfect_output(s.target);
  // No observations: the reprojection term (which measures detector noise,
  // not prediction error) is excluded. The temporal terms are smoothness
  // penalties on the predicted motion itself, so they stay out of this sum.
  const LossBreakdown b =
      compute_losses(pred, s.target, nullptr, s.skel, LossWeights::stage_two(), nullptr);
  for (const auto& [name, value] : b.terms) {
    if (name.rfind("temporal", 0) == 0) continue;
    CAPTURE(name);
    CHECK(value == 0.0);
  }
  CHECK(b.total == doctest::Approx(b.contributions.at("temporal_joints") +
                                   b.contributions.at("temporal_root"))
                       .epsilon(1e-12));

  // On a perfectly still clip even the smoothness penalties vanish, so the
  // total is exactly zero.
  Scenario idle;
  idle.skel = s.skel;
  idle.cam.K = desk_intrinsics();
  const int T = 4;
  idle.cam.frames.assign(T, look_at(Vec3(0, 1.1, -1.6), Vec3(0, 1.0, 0), Vec3(0, 1, 0)));
  WorldMotion still;
  still.fps = 30.0;
  still.betas = VecX::Zero(kNumShapeCoeffs);
  still.pose.assign(T, [] {
    std::array<Mat3, kNumJoints> p;
    p.fill(Mat3::Identity());
    return p;
  }());
  still.root.assign(T, RootTransform{Mat3::Identity(), Vec3(0, 0.95, 0)});
  const MotionSequence target =
      derive_ground_truth_state(still, idle.cam, make_gravity_frame(idle.cam, Vec3(0, -1, 0)),
                                idle.skel);
  const LossBreakdown zb = compute_losses(perfect_output(target), target, nullptr, idle.skel,
                                          LossWeights::stage_two(), nullptr);
  CHECK(zb.total == 0.0);
}

TEST_CASE("frame-wise terms are invariant to a joint frame permutation") {
  const Scenario s = make_scenario(6);
  Rng rng(9);
  const ModelOutput pred = noisy_output(s.target, rng, 0.05);

  // Reverse the frames of prediction, target and observations together.
  const int T = s.target.length();
  ModelOutput rpred = pred;
  MotionSequence rtarget = s.target;
  ObservationClip robs = s.obs;
  for (int t = 0; t < T; ++t) {
    const int u = T - 1 - t;
    rpred.theta.col(t) = pred.theta.col(u);
    rpred.gv_orient.col(t) = pred.gv_orient.col(u);
    rpred.root_vel.col(t) = pred.root_vel.col(u);
    rpred.cam_orient.col(t) = pred.cam_orient.col(u);
    rpred.cam_trans.col(t) = pred.cam_trans.col(u);
    rpred.contact_logits.col(t) = pred.contact_logits.col(u);
    rtarget.frames[t] = s.target.frames[u];
    robs.frames[t] = s.obs.frames[u];
  }
  rpred.contact_probs = sigmoid(rpred.contact_logits);

  const LossWeights w = LossWeights::stage_two();
  const LossBreakdown a = compute_losses(pred, s.target, &s.obs, s.skel, w, nullptr);
  const LossBreakdown r = compute_losses(rpred, rtarget, &robs, s.skel, w, nullptr);
  for (const auto& [name, value] : a.terms) {
    if (name.rfind("temporal", 0) == 0) continue;  // order-sensitive by design
    CAPTURE(name);
    CHECK(r.terms.at(name) == doctest::Approx(value).epsilon(1e-12));
  }
}

TEST_CASE("doubling the hand multiplier rescales only hand contributions") {
  const Scenario s = make_scenario(5);
  Rng rng(3);
  const ModelOutput pred = noisy_output(s.target, rng, 0.05);

  LossWeights w = LossWeights::stage_one();
  LossWeights w2 = w;
  w2.w_hand_pose_multiplier *= 2.0;
  const LossBreakdown a = compute_losses(pred, s.target, &s.obs, s.skel, w, nullptr);
  const LossBreakdown b = compute_losses(pred, s.target, &s.obs, s.skel, w2, nullptr);

  for (const auto& [name, value] : a.terms) {
    CAPTURE(name);
    CHECK(b.terms.at(name) == doctest::Approx(value).epsilon(1e-12));  // raw values fixed
    const double ca = a.contributions.at(name);
    const double cb = b.contributions.at(name);
    if (name == "pose_hand" || name == "joints3d_hand") {
      CHECK(cb == doctest::Approx(2.0 * ca).epsilon(1e-12));
      CHECK(ca > 0.0);
    } else {
      CHECK(cb == doctest::Approx(ca).epsilon(1e-12));
    }
  }
  const double delta = (b.contributions.at("pose_hand") - a.contributions.at("pose_hand")) +
                       (b.contributions.at("joints3d_hand") - a.contributions.at("joints3d_hand"));
  CHECK(b.total == doctest::Approx(a.total + delta).epsilon(1e-12));
}

TEST_CASE("fingertip loss counts only the distal set") {
  const SkeletonModel skel = SkeletonModel::canonical();
  const int T = 3;
  std::array<Mat3, kNumJoints> rest;
  rest.fill(Mat3::Identity());
  const MatX3 J =
      forward_kinematics(skel, rest, VecX::Zero(kNumShapeCoeffs), RootTransform{});
  std::vector<MatX3> pred(T, J), target(T, J);

  CHECK(fingertip_loss(pred, target, skel.fingertips) == 0.0);

  // Wrists are not in the distal set.
  pred[1].row(20) += Eigen::RowVector3d(0.05, 0.05, 0.05);
  pred[2].row(21) += Eigen::RowVector3d(0.05, 0.05, 0.05);
  CHECK(fingertip_loss(pred, target, skel.fingertips) == 0.0);

  // One fingertip off by (1, 2, 2) mm on one frame: 5 mm in L1.
  pred[1].row(skel.fingertips[3]) += Eigen::RowVector3d(0.001, 0.002, 0.002);
  CHECK(fingertip_loss(pred, target, skel.fingertips) == doctest::Approx(5.0).epsilon(1e-9));

  CHECK_THROWS_AS(fingertip_loss(pred, std::vector<MatX3>(2, J), skel.fingertips), ConfigError);
}

TEST_CASE("reprojection loss arithmetic, support rules and zero-evidence case") {
  const CameraIntrinsics K = desk_intrinsics();

  MatX3 P(3, 3);
  P << 0.0, 0.0, 2.0, 0.3, -0.2, 2.5, -0.1, 0.4, 1.5;
  MatX2 px;
  std::vector<bool> in_front;
  project_camera_points(K, P, &px, &in_front);

  SUBCASE("perfect projection scores zero") {
    const ReprojectionResult r =
        visibility_reprojection_loss(K, P, px, VecX::Ones(3), nullptr, 1.0);
    CHECK(r.loss == 0.0);
    CHECK_FALSE(r.no_evidence);
    CHECK(r.weight_sum == doctest::Approx(3.0));
  }

  SUBCASE("a single point off by (3,4) px with unit weight scores 7 px") {
    MatX2 detected = px;
    detected.row(1) += Eigen::RowVector2d(3.0, 4.0);
    VecX w = VecX::Zero(3);
    w[1] = 1.0;
    const ReprojectionResult r = visibility_reprojection_loss(K, P, detected, w);
    CHECK(r.loss == doctest::Approx(7.0).epsilon(1e-12));
  }

  SUBCASE("all-zero weights give exactly zero loss and gradients") {
    MatX2 detected = px;
    detected.array() += 11.0;
    MatX3 dP;
    const ReprojectionResult r =
        visibility_reprojection_loss(K, P, detected, VecX::Zero(3), &dP, 1.0);
    CHECK(r.loss == 0.0);
    CHECK(r.no_evidence);
    CHECK(dP.norm() == 0.0);
  }

  SUBCASE("behind-camera points are forced out of the support") {
    MatX3 Pb = P;
    Pb.row(2) << 0.0, 0.0, -1.0;
    VecX w = VecX::Zero(3);
    w[2] = 1.0;  // only the behind-camera point is weighted
    const ReprojectionResult r = visibility_reprojection_loss(K, Pb, px, w);
    CHECK(r.no_evidence);
    CHECK(r.loss == 0.0);
  }

  SUBCASE("points with zero weight never change the loss") {
    MatX2 detected = px;
    detected.row(0) += Eigen::RowVector2d(1.0, 2.0);
    VecX w = VecX::Zero(3);
    w[0] = 0.8;
    const double base = visibility_reprojection_loss(K, P, detected, w).loss;

    MatX3 P2(5, 3);
    P2.topRows(3) = P;
    P2.row(3) << 9.0, 9.0, 0.5;
    P2.row(4) << -9.0, 9.0, 0.1;
    MatX2 d2(5, 2);
    d2.topRows(3) = detected;
    d2.row(3) << 1e6, -1e6;
    d2.row(4) << 0.0, 0.0;
    VecX w2 = VecX::Zero(5);
    w2.head(3) = w;
    CHECK(visibility_reprojection_loss(K, P2, d2, w2).loss == base);
  }

  SUBCASE("mismatched rows are rejected") {
    CHECK_THROWS_AS(visibility_reprojection_loss(K, P, px.topRows(2), VecX::Ones(3)),
                    ConfigError);
  }
}

TEST_CASE("temporal regularizer closed forms") {
  const int T = 7;
  const int J = 4;
  std::vector<MatX3> joints(T, MatX3::Zero(J, 3));
  MatX3 roots = MatX3::Zero(T, 3);

  SUBCASE("constant sequences score zero") {
    CHECK(temporal_regularizer(joints, roots) == 0.0);
  }

  SUBCASE("linear root motion zeroes the second-difference part") {
    for (int t = 0; t < T; ++t) roots.row(t) << 0.02 * t, 0.0, -0.01 * t;
    double jp = -1, rp = -1;
    temporal_regularizer(joints, roots, &jp, &rp);
    CHECK(rp >= 0.0);
    CHECK(rp < 1e-10);  // exact zero up to floating-point accumulation
  }

  SUBCASE("alternating 1 mm jitter on one joint means 2 mm per transition") {
    for (int t = 0; t < T; ++t) joints[t](2, 0) = (t % 2 == 0) ? 0.001 : -0.001;
    double jp = -1, rp = -1;
    temporal_regularizer(joints, roots, &jp, &rp);
    CHECK(jp == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rp == 0.0);
  }

  SUBCASE("short sequences omit the second-difference part") {
    std::vector<MatX3> j2(2, MatX3::Zero(J, 3));
    MatX3 r2(2, 3);
    r2 << 0, 0, 0, 5, -3, 2;  // wild roots, but T < 3
    double jp = -1, rp = -1;
    temporal_regularizer(j2, r2, &jp, &rp);
    CHECK(rp == 0.0);
  }

  SUBCASE("length mismatch is rejected") {
    CHECK_THROWS_AS(temporal_regularizer(joints, MatX3::Zero(T - 1, 3)), ConfigError);
  }
}

TEST_CASE("integrated loss gradients match finite differences") {
  const Scenario s = make_scenario(5);
  Rng rng(31);
  ModelOutput pred = noisy_output(s.target, rng, 0.08);
  LossWeights w = LossWeights::stage_two();
  w.w_temporal = 0.3;  // make sure the integration path is exercised

  ModelOutputGrads g = ModelOutputGrads::zeros_like(pred);
  compute_losses(pred, s.target, &s.obs, s.skel, w, &g);

  auto eval = [&](const ModelOutput& p) {
    return compute_losses(p, s.target, &s.obs, s.skel, w, nullptr).total;
  };

  struct Slot {
    MatX* field;
    const MatX* grad;
    const char* name;
  };
  MatX beta_avg_m = pred.beta_avg;
  MatX g_beta_m = g.beta_avg;
  const Slot slots[] = {
      {&pred.theta, &g.theta, "theta"},
      {&pred.gv_orient, &g.gv_orient, "gv"},
      {&pred.root_vel, &g.root_vel, "vel"},
      {&pred.cam_orient, &g.cam_orient, "cam_r"},
      {&pred.cam_trans, &g.cam_trans, "cam_t"},
      {&pred.contact_logits, &g.contact_logits, "contact"},
  };

  const double h = 1e-6;
  for (const Slot& slot : slots) {
    for (int probe = 0; probe < 6; ++probe) {
      const int i = rng.uniform_int(0, static_cast<int>(slot.field->size()) - 1);
      const double x0 = slot.field->data()[i];
      slot.field->data()[i] = x0 + h;
      const double up = eval(pred);
      slot.field->data()[i] = x0 - h;
      const double dn = eval(pred);
      slot.field->data()[i] = x0;
      const double fd = (up - dn) / (2 * h);
      const double an = slot.grad->data()[i];
      CAPTURE(slot.name);
      CAPTURE(i);
      CHECK(std::abs(fd - an) < 1e-4 * (1.0 + std::abs(fd) + std::abs(an)));
    }
  }
  // Shape gradient.
  for (int i = 0; i < kNumShapeCoeffs; i += 3) {
    const double x0 = pred.beta_avg[i];
    pred.beta_avg[i] = x0 + h;
    const double up = eval(pred);
    pred.beta_avg[i] = x0 - h;
    const double dn = eval(pred);
    pred.beta_avg[i] = x0;
    const double fd = (up - dn) / (2 * h);
    CHECK(std::abs(fd - g.beta_avg[i]) < 1e-4 * (1.0 + std::abs(fd)));
  }
}

TEST_CASE("scaling every weight scales the loss and keeps gradients collinear") {
  const Scenario s = make_scenario(4);
  Rng rng(17);
  const ModelOutput pred = noisy_output(s.target, rng, 0.06);

  LossWeights w = LossWeights::stage_two();
  LossWeights w3 = w;
  const double c = 3.0;
  w3.w_pose *= c;
  w3.w_joints3d *= c;
  w3.w_verts *= c;
  w3.w_shape *= c;
  w3.w_traj *= c;
  w3.w_contact *= c;
  w3.w_tip *= c;
  w3.w_vis *= c;
  w3.w_temporal *= c;  // the hand multiplier is an emphasis, not a weight

  ModelOutputGrads g1 = ModelOutputGrads::zeros_like(pred);
  ModelOutputGrads g3 = ModelOutputGrads::zeros_like(pred);
  const double t1 = compute_losses(pred, s.target, &s.obs, s.skel, w, &g1).total;
  const double t3 = compute_losses(pred, s.target, &s.obs, s.skel, w3, &g3).total;
  CHECK(t3 == doctest::Approx(c * t1).epsilon(1e-12));

  auto coll = [&](const MatX& a, const MatX& b) {
    CHECK((b - c * a).norm() <= 1e-9 * (1.0 + a.norm()));
  };
  coll(g1.theta, g3.theta);
  coll(g1.gv_orient, g3.gv_orient);
  coll(g1.root_vel, g3.root_vel);
  coll(g1.cam_orient, g3.cam_orient);
  coll(g1.cam_trans, g3.cam_trans);
  coll(g1.contact_logits, g3.contact_logits);
  CHECK((g3.beta_avg - c * g1.beta_avg).norm() <= 1e-9 * (1.0 + g1.beta_avg.norm()));
}

TEST_CASE("no reprojection evidence means a zero term and exactly zero gradient") {
  Scenario s = make_scenario(3);
  // Kill all support: sub-threshold confidences and masked hands.
  for (auto& fr : s.obs.frames) {
    fr.body.conf.setConstant(0.2);
    fr.left.visible = 0;
    fr.right.visible = 0;
  }
  LossWeights w;
  w.w_pose = w.w_joints3d = w.w_verts = w.w_shape = w.w_traj = 0.0;
  w.w_contact = w.w_tip = w.w_temporal = 0.0;
  w.w_vis = 1.0;

  Rng rng(2);
  const ModelOutput pred = noisy_output(s.target, rng, 0.05);
  ModelOutputGrads g = ModelOutputGrads::zeros_like(pred);
  const LossBreakdown b = compute_losses(pred, s.target, &s.obs, s.skel, w, &g);
  CHECK(b.total == 0.0);
  CHECK(b.vis_no_evidence);
  CHECK(b.terms.at("reprojection") == 0.0);
  CHECK(g.theta.norm() == 0.0);
  CHECK(g.cam_trans.norm() == 0.0);
  CHECK(g.cam_orient.norm() == 0.0);
  CHECK(g.beta_avg.norm() == 0.0);

  // Sub-threshold confidence values are interchangeable: the term ignores
  // them entirely.
  ObservationClip obs2 = s.obs;
  for (auto& fr : obs2.frames) fr.body.conf.setConstant(0.54);
  LossWeights wv = LossWeights::stage_one();
  const ModelOutput pred2 = noisy_output(s.target, rng, 0.05);
  const double r1 =
      compute_losses(pred2, s.target, &s.obs, s.skel, wv, nullptr).terms.at("reprojection");
  const double r2 =
      compute_losses(pred2, s.target, &obs2, s.skel, wv, nullptr).terms.at("reprojection");
  CHECK(r1 == r2);
}

TEST_CASE("length mismatches are rejected") {
  const Scenario s = make_scenario(4);
  const ModelOutput pred = perfect_output(s.target);
  MotionSequence shorter = s.target;
  shorter.frames.pop_back();
  CHECK_THROWS_AS(compute_losses(pred, shorter, nullptr, s.skel, LossWeights{}, nullptr),
                  ConfigError);
  ObservationClip obs = s.obs;
  obs.frames.pop_back();
  CHECK_THROWS_AS(compute_losses(pred, s.target, &obs, s.skel, LossWeights{}, nullptr),
                  ConfigError);
}
