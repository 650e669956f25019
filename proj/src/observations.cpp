#include "wbmr/observations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "wbmr/errors.hpp"

namespace wbmr {

using nlohmann::ordered_json;

// ── keypoint layouts ──────────────────────────────────────────────────────

MatX3 body_keypoint_positions(const MatX3& joints) {
  return joints.topRows(kBodyKeypoints);
}

const std::vector<HandKeypointSource>& hand_keypoint_sources(int side) {
  static const auto build = [](int wrist, int start) {
    std::vector<HandKeypointSource> src;
    src.push_back({wrist, -1});
    for (int f = 0; f < 5; ++f) {
      const int base = start + 3 * f;
      src.push_back({base, -1});
      src.push_back({base + 1, -1});
      src.push_back({base + 2, -1});
      src.push_back({base + 1, base + 2});  // distal marker: last-segment midpoint
    }
    return src;
  };
  static const std::vector<HandKeypointSource> left = build(20, kLeftHandStart);
  static const std::vector<HandKeypointSource> right = build(21, kRightHandStart);
  return side == 0 ? left : right;
}

MatX3 hand_keypoint_positions(const MatX3& joints, int side) {
  const auto& sources = hand_keypoint_sources(side);
  MatX3 out(kHandKeypoints, 3);
  for (int k = 0; k < kHandKeypoints; ++k) {
    const auto& s = sources[k];
    out.row(k) = s.b < 0 ? joints.row(s.a)
                         : (0.5 * (joints.row(s.a) + joints.row(s.b))).eval();
  }
  return out;
}

// ── box token ─────────────────────────────────────────────────────────────

Vec3 build_box_token(const PixelBox& box, const CameraIntrinsics& K) {
  if (box.empty()) return Vec3::Zero();
  return Vec3((box.center_x() - K.cx) / K.fx, (box.center_y() - K.cy) / K.fy,
              box.max_side() / K.fx);
}

Vec2 normalize_to_crop(const Vec2& pixel, const CropRect& rect) {
  return Vec2(2.0 * (pixel.x() - rect.x0) / rect.side - 1.0,
              2.0 * (pixel.y() - rect.y0) / rect.side - 1.0);
}

// ── synthesis ─────────────────────────────────────────────────────────────

ClipKeypoints project_clean_keypoints(const WorldMotion& world, const CameraModel& cam,
                                      const SkeletonModel& skel) {
  const int T = world.length();
  if (static_cast<int>(cam.frames.size()) < T) {
    throw ConfigError("project_clean_keypoints: camera trajectory shorter than the clip");
  }
  ClipKeypoints out;
  out.body.resize(T);
  out.left.resize(T);
  out.right.resize(T);
  for (int t = 0; t < T; ++t) {
    const MatX3 joints = forward_kinematics(skel, world.pose[t], world.betas, world.root[t]);
    const MatX3 parts[3] = {body_keypoint_positions(joints), hand_keypoint_positions(joints, 0),
                            hand_keypoint_positions(joints, 1)};
    Keypoints2D* dest[3] = {&out.body[t], &out.left[t], &out.right[t]};
    for (int p = 0; p < 3; ++p) {
      MatX2 px;
      std::vector<bool> in_front;
      project(cam.K, cam.frames[t], parts[p], &px, &in_front);
      dest[p]->points = px;
      dest[p]->conf = VecX::Zero(px.rows());
      for (int j = 0; j < px.rows(); ++j) dest[p]->conf[j] = in_front[j] ? 1.0 : 0.0;
    }
  }
  return out;
}

namespace {

struct FeatureMaps {
  MatX body;   // feature_dim x 50
  MatX left;   // feature_dim x 42
  MatX right;  // feature_dim x 42
};

MatX random_projection(Rng& rng, int rows, int cols) {
  MatX m(rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.gaussian() * scale;
  }
  return m;
}

FeatureMaps make_feature_maps(const NoiseConfig& cfg) {
  Rng rng(cfg.feature_seed);
  FeatureMaps maps;
  maps.body = random_projection(rng, cfg.feature_dim, 2 * kBodyKeypoints);
  maps.left = random_projection(rng, cfg.feature_dim, 2 * kHandKeypoints);
  maps.right = random_projection(rng, cfg.feature_dim, 2 * kHandKeypoints);
  return maps;
}

// Flattened crop-normalized layout of every point (no confidence masking:
// the feature stream intentionally keeps detail the keypoint stream drops).
VecX normalized_layout(const Keypoints2D& kp, const CropRect& rect) {
  VecX x(2 * kp.points.rows());
  for (int j = 0; j < kp.points.rows(); ++j) {
    const Vec2 n = normalize_to_crop(kp.points.row(j).transpose(), rect);
    x[2 * j] = n.x();
    x[2 * j + 1] = n.y();
  }
  return x;
}

}  // namespace

ObservationClip synthesize_observations(const WorldMotion& world, const CameraModel& cam,
                                        const SkeletonModel& skel, const CropSpec& view,
                                        const CloseupConfig& crop_cfg, const NoiseConfig& noise,
                                        uint64_t seed) {
  const int T = world.length();
  const ClipKeypoints clean = project_clean_keypoints(world, cam, skel);
  Rng rng(seed);

  ObservationClip clip;
  clip.fps = world.fps;
  clip.K = cam.K;
  clip.crop = view.rect;
  clip.blur = view.blur;
  clip.frames.resize(T);

  // Pass 1: noisy detections with confidences.
  ClipKeypoints noisy;
  noisy.body.resize(T);
  noisy.left.resize(T);
  noisy.right.resize(T);
  for (int t = 0; t < T; ++t) {
    const Keypoints2D* src[3] = {&clean.body[t], &clean.left[t], &clean.right[t]};
    Keypoints2D* dst[3] = {&noisy.body[t], &noisy.left[t], &noisy.right[t]};
    for (int p = 0; p < 3; ++p) {
      const int J = static_cast<int>(src[p]->points.rows());
      dst[p]->points.resize(J, 2);
      dst[p]->conf.resize(J);
      for (int j = 0; j < J; ++j) {
        const Vec2 n(rng.gaussian() * noise.kp_sigma, rng.gaussian() * noise.kp_sigma);
        const Vec2 pt = src[p]->points.row(j).transpose() + n;
        dst[p]->points.row(j) = pt.transpose();
        const bool in_front = src[p]->conf[j] > 0.0;
        if (in_front && view.rect.contains(pt.x(), pt.y())) {
          dst[p]->conf[j] = std::clamp(std::exp(-n.norm() / noise.conf_sigma), 0.0, 1.0);
        } else {
          dst[p]->conf[j] = rng.uniform(0.0, 0.3);
        }
      }
    }
  }

  // Hand visibility inside the final window, judged on the detections.
  CropSpec visibility = view;
  recompute_hand_visibility(visibility, noisy, crop_cfg);

  // Blur widens the feature noise: information lost to resampling.
  double feature_sigma = noise.feature_sigma;
  if (view.blur && crop_cfg.network_side > 0) {
    const double factor = view.rect.side / crop_cfg.network_side;
    feature_sigma += 0.5 * (factor - 1.0);
  }
  const FeatureMaps maps = make_feature_maps(noise);

  // Pass 2: assemble frames (features, boxes, camera motion, flags).
  for (int t = 0; t < T; ++t) {
    FrameObservation& f = clip.frames[t];
    f.body = noisy.body[t];
    f.left.kp = noisy.left[t];
    f.right.kp = noisy.right[t];

    auto flags = [&](const Keypoints2D& kp) {
      std::vector<char> v(kp.points.rows());
      for (int j = 0; j < kp.points.rows(); ++j) {
        v[j] = kp.conf[j] >= kConfidenceThreshold &&
               view.rect.contains(kp.points(j, 0), kp.points(j, 1));
      }
      return v;
    };
    f.valid_kp = flags(f.body);
    f.left.valid_kp = flags(f.left.kp);
    f.right.valid_kp = flags(f.right.kp);

    f.features = maps.body * normalized_layout(f.body, view.rect) +
                 rng.gaussian_vec(noise.feature_dim, feature_sigma);
    f.left.features = maps.left * normalized_layout(f.left.kp, view.rect) +
                      rng.gaussian_vec(noise.feature_dim, feature_sigma);
    f.right.features = maps.right * normalized_layout(f.right.kp, view.rect) +
                       rng.gaussian_vec(noise.feature_dim, feature_sigma);

    f.box = fit_keypoint_box(f.body, view.rect, crop_cfg.box_padding);
    f.box_token = build_box_token(f.box, cam.K);
    f.left.visible = visibility.hand_visible[t][0];
    f.right.visible = visibility.hand_visible[t][1];
    f.left.box = visibility.hand_boxes[t][0];
    f.right.box = visibility.hand_boxes[t][1];
    f.left.box_token = build_box_token(f.left.box, cam.K);
    f.right.box_token = build_box_token(f.right.box, cam.K);

    if (T >= 2) {
      const int a = (t + 1 < T) ? t : t - 1;
      f.cam_ang_vel = camera_angular_velocity(cam.frames[a], cam.frames[a + 1], world.fps);
    }
  }

  apply_masking(clip);
  return clip;
}

void apply_masking(ObservationClip& clip) {
  for (auto& f : clip.frames) {
    for (HandObservation* h : {&f.left, &f.right}) {
      if (h->visible) continue;
      std::fill(h->valid_kp.begin(), h->valid_kp.end(), char(0));
      h->features.setZero();
      h->box = PixelBox{};
      h->box_token.setZero();
    }
  }
}

// ── serialization ─────────────────────────────────────────────────────────

namespace {

ordered_json kp_to_json(const Keypoints2D& kp, const std::vector<char>& valid) {
  ordered_json pts = ordered_json::array(), conf = ordered_json::array(),
               val = ordered_json::array();
  for (int j = 0; j < kp.points.rows(); ++j) {
    pts.push_back({kp.points(j, 0), kp.points(j, 1)});
    conf.push_back(kp.conf[j]);
    val.push_back(static_cast<int>(valid[j]));
  }
  return ordered_json{{"points", pts}, {"conf", conf}, {"valid", val}};
}

void kp_from_json(const ordered_json& j, int expected, Keypoints2D* kp,
                  std::vector<char>* valid) {
  const auto& pts = j.at("points");
  if (static_cast<int>(pts.size()) != expected) {
    throw IoError("observation json: unexpected keypoint count");
  }
  kp->points.resize(expected, 2);
  kp->conf.resize(expected);
  valid->resize(expected);
  for (int k = 0; k < expected; ++k) {
    kp->points(k, 0) = pts[k][0].get<double>();
    kp->points(k, 1) = pts[k][1].get<double>();
    kp->conf[k] = j.at("conf")[k].get<double>();
    (*valid)[k] = static_cast<char>(j.at("valid")[k].get<int>());
  }
}

ordered_json vecx_to_json(const VecX& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VecX vecx_from_json(const ordered_json& a) {
  VecX v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

ordered_json box_to_json(const PixelBox& b) {
  return ordered_json{{"x0", b.x0}, {"y0", b.y0}, {"w", b.w}, {"h", b.h}};
}

PixelBox box_from_json(const ordered_json& j) {
  return PixelBox{j.at("x0").get<double>(), j.at("y0").get<double>(), j.at("w").get<double>(),
                  j.at("h").get<double>()};
}

ordered_json hand_to_json(const HandObservation& h) {
  ordered_json j;
  j["kp"] = kp_to_json(h.kp, h.valid_kp);
  j["features"] = vecx_to_json(h.features);
  j["box"] = box_to_json(h.box);
  j["box_token"] = {h.box_token.x(), h.box_token.y(), h.box_token.z()};
  j["visible"] = h.visible;
  return j;
}

HandObservation hand_from_json(const ordered_json& j) {
  HandObservation h;
  kp_from_json(j.at("kp"), kHandKeypoints, &h.kp, &h.valid_kp);
  h.features = vecx_from_json(j.at("features"));
  h.box = box_from_json(j.at("box"));
  h.box_token = Vec3(j.at("box_token")[0].get<double>(), j.at("box_token")[1].get<double>(),
                     j.at("box_token")[2].get<double>());
  h.visible = j.at("visible").get<int>();
  return h;
}

}  // namespace

void save_observations(const ObservationClip& clip, const std::string& path) {
  ordered_json j;
  j["fps"] = clip.fps;
  j["camera"] = {{"fx", clip.K.fx},         {"fy", clip.K.fy},     {"cx", clip.K.cx},
                 {"cy", clip.K.cy},         {"width", clip.K.width},
                 {"height", clip.K.height}};
  j["crop"] = {{"x0", clip.crop.x0}, {"y0", clip.crop.y0}, {"side", clip.crop.side}};
  j["blur"] = clip.blur;
  auto& frames = j["frames"] = ordered_json::array();
  for (const auto& f : clip.frames) {
    ordered_json e;
    e["body"] = kp_to_json(f.body, f.valid_kp);
    e["features"] = vecx_to_json(f.features);
    e["box"] = box_to_json(f.box);
    e["box_token"] = {f.box_token.x(), f.box_token.y(), f.box_token.z()};
    e["cam_ang_vel"] = {f.cam_ang_vel.x(), f.cam_ang_vel.y(), f.cam_ang_vel.z()};
    e["left"] = hand_to_json(f.left);
    e["right"] = hand_to_json(f.right);
    frames.push_back(std::move(e));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open observation file for writing: " + path);
  out << j.dump() << "\n";
  if (!out) throw IoError("failed writing observation file: " + path);
}

ObservationClip load_observations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open observation file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed observation json (" + path + "): " + e.what());
  }
  ObservationClip clip;
  try {
    clip.fps = j.at("fps").get<double>();
    const auto& k = j.at("camera");
    clip.K = CameraIntrinsics{k.at("fx").get<double>(), k.at("fy").get<double>(),
                              k.at("cx").get<double>(), k.at("cy").get<double>(),
                              k.at("width").get<int>(),  k.at("height").get<int>()};
    clip.crop = {j.at("crop").at("x0").get<double>(), j.at("crop").at("y0").get<double>(),
                 j.at("crop").at("side").get<double>()};
    clip.blur = j.at("blur").get<bool>();
    for (const auto& e : j.at("frames")) {
      FrameObservation f;
      kp_from_json(e.at("body"), kBodyKeypoints, &f.body, &f.valid_kp);
      f.features = vecx_from_json(e.at("features"));
      f.box = box_from_json(e.at("box"));
      f.box_token = Vec3(e.at("box_token")[0].get<double>(), e.at("box_token")[1].get<double>(),
                         e.at("box_token")[2].get<double>());
      f.cam_ang_vel = Vec3(e.at("cam_ang_vel")[0].get<double>(),
                           e.at("cam_ang_vel")[1].get<double>(),
                           e.at("cam_ang_vel")[2].get<double>());
      f.left = hand_from_json(e.at("left"));
      f.right = hand_from_json(e.at("right"));
      clip.frames.push_back(std::move(f));
    }
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("observation json missing fields (" + path + "): " + e.what());
  }
  return clip;
}

}  // namespace wbmr
