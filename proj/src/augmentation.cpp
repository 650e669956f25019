#include "wbmr/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "wbmr/errors.hpp"

namespace wbmr {

using nlohmann::ordered_json;

namespace {

// Body keypoint indices used by the cropping heuristics (25-point layout).
constexpr int kKpPelvis = 0;
constexpr int kKpLeftHip = 1;
constexpr int kKpRightHip = 2;
constexpr int kKpLeftKnee = 4;
constexpr int kKpRightKnee = 5;
constexpr int kKpHead = 15;

bool confident(const Keypoints2D& kp, int j) {
  return kp.conf[j] >= kConfidenceThreshold;
}

double median(std::vector<double> v) {
  const size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double upper_body_ratio(const Keypoints2D& body) {
  if (body.points.rows() != kBodyKeypoints) {
    throw ConfigError("upper_body_ratio expects the 25-point body layout");
  }
  if (!confident(body, kKpHead) || !confident(body, kKpPelvis)) {
    throw UndefinedRatioError("upper-body ratio: head or pelvis not visible");
  }
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < kBodyKeypoints; ++j) {
    if (!confident(body, j)) continue;
    ymin = std::min(ymin, body.points(j, 1));
    ymax = std::max(ymax, body.points(j, 1));
  }
  const double height = ymax - ymin;
  if (!(height >= 1.0)) {
    throw UndefinedRatioError("upper-body ratio: visible body height under one pixel");
  }
  const double d = (body.points.row(kKpHead) - body.points.row(kKpPelvis)).norm();
  return d / height;
}

PixelBox fit_keypoint_box(const Keypoints2D& kp, const CropRect& rect, double padding) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  int n = 0;
  for (int j = 0; j < kp.points.rows(); ++j) {
    if (kp.conf[j] < kConfidenceThreshold) continue;
    const double u = kp.points(j, 0), v = kp.points(j, 1);
    if (!rect.contains(u, v)) continue;
    x0 = std::min(x0, u);
    y0 = std::min(y0, v);
    x1 = std::max(x1, u);
    y1 = std::max(y1, v);
    ++n;
  }
  if (n == 0) return PixelBox{};
  PixelBox box{x0, y0, x1 - x0, y1 - y0};
  const double pad = padding * box.max_side();
  box.x0 -= pad;
  box.y0 -= pad;
  box.w += 2 * pad;
  box.h += 2 * pad;
  return box;
}

void recompute_hand_visibility(CropSpec& spec, const ClipKeypoints& kps,
                               const CloseupConfig& cfg) {
  const int T = kps.length();
  spec.hand_visible.assign(T, {0, 0});
  spec.hand_boxes.assign(T, {PixelBox{}, PixelBox{}});
  if (spec.rect.side <= 0) return;
  const double to_net = cfg.network_side / spec.rect.side;
  for (int t = 0; t < T; ++t) {
    for (int side = 0; side < 2; ++side) {
      const Keypoints2D& kp = side == 0 ? kps.left[t] : kps.right[t];
      int n = 0;
      for (int j = 0; j < kp.points.rows(); ++j) {
        if (kp.conf[j] >= kConfidenceThreshold &&
            spec.rect.contains(kp.points(j, 0), kp.points(j, 1))) {
          ++n;
        }
      }
      if (n < cfg.min_hand_keypoints) continue;
      // Size test uses the tight (unpadded) box, measured after resampling
      // the crop window to network resolution.
      const PixelBox tight = fit_keypoint_box(kp, spec.rect, 0.0);
      if (tight.max_side() * to_net < cfg.min_hand_box_px) continue;
      spec.hand_visible[t][side] = 1;
      spec.hand_boxes[t][side] = fit_keypoint_box(kp, spec.rect, cfg.box_padding);
    }
  }
}

namespace {

CropSpec finalize_crop(CropRect rect, double scale, const Vec2& translation,
                       const ClipKeypoints& kps, const CloseupConfig& cfg) {
  CropSpec spec;
  const double cx = rect.center_x() + translation.x();
  const double cy = rect.center_y() + translation.y();
  rect.side *= scale;
  rect.x0 = cx - 0.5 * rect.side;
  rect.y0 = cy - 0.5 * rect.side;
  spec.rect = rect;
  spec.scale = scale;
  spec.translation = translation;
  spec.blur = rect.side / cfg.network_side > cfg.blur_ratio;
  recompute_hand_visibility(spec, kps, cfg);
  return spec;
}

}  // namespace

CropSpec synthesize_closeup(const ClipKeypoints& kps, const CloseupConfig& cfg, Rng& rng) {
  const int T = kps.length();
  if (T == 0) throw ConfigError("synthesize_closeup: empty clip");

  std::vector<double> ratios, heights, hips, knees, tops, lefts, rights;
  for (int t = 0; t < T; ++t) {
    const Keypoints2D& body = kps.body[t];
    double r;
    try {
      r = upper_body_ratio(body);
    } catch (const UndefinedRatioError&) {
      continue;
    }
    ratios.push_back(r);
    double ymin = std::numeric_limits<double>::infinity();
    double ymax = -ymin, xmin = ymin, xmax = -ymin;
    for (int j = 0; j < kBodyKeypoints; ++j) {
      if (!confident(body, j)) continue;
      ymin = std::min(ymin, body.points(j, 1));
      ymax = std::max(ymax, body.points(j, 1));
      xmin = std::min(xmin, body.points(j, 0));
      xmax = std::max(xmax, body.points(j, 0));
    }
    heights.push_back(ymax - ymin);
    tops.push_back(ymin);
    lefts.push_back(xmin);
    rights.push_back(xmax);
    hips.push_back(std::max(body.points(kKpLeftHip, 1), body.points(kKpRightHip, 1)));
    knees.push_back(std::max(body.points(kKpLeftKnee, 1), body.points(kKpRightKnee, 1)));
  }
  if (ratios.empty()) {
    throw UndefinedRatioError("synthesize_closeup: no frame has a defined upper-body ratio");
  }

  const double r_med = median(ratios);
  const double margin = cfg.margin_frac * median(heights);
  // Torso-dominant clips are cut just below the hips; otherwise keep the knees.
  const double anchor = r_med >= cfg.ratio_split ? median(hips) : median(knees);
  const double bottom = anchor + margin;
  const double top = *std::min_element(tops.begin(), tops.end()) - margin;
  const double left = *std::min_element(lefts.begin(), lefts.end()) - margin;
  const double right = *std::max_element(rights.begin(), rights.end()) + margin;

  CropRect rect;
  rect.side = std::max(right - left, bottom - top);
  rect.x0 = 0.5 * (left + right) - 0.5 * rect.side;
  rect.y0 = 0.5 * (top + bottom) - 0.5 * rect.side;

  // One zoom factor and one shift per clip, shared by all frames.
  const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  const Vec2 translation(rng.uniform(-cfg.translate_frac, cfg.translate_frac) * rect.side,
                         rng.uniform(-cfg.translate_frac, cfg.translate_frac) * rect.side);
  return finalize_crop(rect, scale, translation, kps, cfg);
}

CropSpec full_body_crop(int image_width, int image_height, const ClipKeypoints& kps,
                        const CloseupConfig& cfg) {
  CropRect rect;
  rect.side = std::max(image_width, image_height);
  rect.x0 = 0.5 * image_width - 0.5 * rect.side;
  rect.y0 = 0.5 * image_height - 0.5 * rect.side;
  return finalize_crop(rect, 1.0, Vec2::Zero(), kps, cfg);
}

// ── manifest ──────────────────────────────────────────────────────────────

namespace {

ordered_json box_to_json(const PixelBox& b) {
  return ordered_json{{"x0", b.x0}, {"y0", b.y0}, {"w", b.w}, {"h", b.h}};
}

PixelBox box_from_json(const ordered_json& j) {
  return PixelBox{j.at("x0").get<double>(), j.at("y0").get<double>(), j.at("w").get<double>(),
                  j.at("h").get<double>()};
}

}  // namespace

void save_augmentation_manifest(const std::vector<AugmentationRecord>& records,
                                const std::string& path) {
  ordered_json j = ordered_json::array();
  for (const auto& rec : records) {
    ordered_json e;
    e["clip_id"] = rec.clip_id;
    e["crop"] = {{"x0", rec.spec.rect.x0}, {"y0", rec.spec.rect.y0}, {"side", rec.spec.rect.side}};
    e["scale"] = rec.spec.scale;
    e["translation"] = {rec.spec.translation.x(), rec.spec.translation.y()};
    e["blur"] = rec.spec.blur;
    ordered_json vis = ordered_json::array(), boxes = ordered_json::array();
    for (int t = 0; t < rec.spec.length(); ++t) {
      vis.push_back({rec.spec.hand_visible[t][0], rec.spec.hand_visible[t][1]});
      boxes.push_back({box_to_json(rec.spec.hand_boxes[t][0]), box_to_json(rec.spec.hand_boxes[t][1])});
    }
    e["hand_visible"] = std::move(vis);
    e["hand_boxes"] = std::move(boxes);
    j.push_back(std::move(e));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open augmentation manifest for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing augmentation manifest: " + path);
}

std::vector<AugmentationRecord> load_augmentation_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open augmentation manifest: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed augmentation manifest (" + path + "): " + e.what());
  }
  std::vector<AugmentationRecord> records;
  try {
    for (const auto& e : j) {
      AugmentationRecord rec;
      rec.clip_id = e.at("clip_id").get<std::string>();
      rec.spec.rect = {e.at("crop").at("x0").get<double>(), e.at("crop").at("y0").get<double>(),
                       e.at("crop").at("side").get<double>()};
      rec.spec.scale = e.at("scale").get<double>();
      rec.spec.translation = Vec2(e.at("translation")[0].get<double>(),
                                  e.at("translation")[1].get<double>());
      rec.spec.blur = e.at("blur").get<bool>();
      for (const auto& v : e.at("hand_visible")) {
        rec.spec.hand_visible.push_back({v[0].get<int>(), v[1].get<int>()});
      }
      for (const auto& b : e.at("hand_boxes")) {
        rec.spec.hand_boxes.push_back({box_from_json(b[0]), box_from_json(b[1])});
      }
      records.push_back(std::move(rec));
    }
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("augmentation manifest missing fields (" + path + "): " + e.what());
  }
  return records;
}

}  // namespace wbmr
