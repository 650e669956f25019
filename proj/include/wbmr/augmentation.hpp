#pragma once

#include <array>
#include <string>
#include <vector>

#include "wbmr/common.hpp"
#include "wbmr/rng.hpp"

namespace wbmr {

// ── crop geometry ─────────────────────────────────────────────────────────

// Square view window in full-image pixels. Membership is closed: points on
// the edge count as inside, so shrinking a crop can never gain a point.
struct CropRect {
  double x0 = 0, y0 = 0, side = 0;

  bool contains(double u, double v) const {
    return u >= x0 && u <= x0 + side && v >= y0 && v <= y0 + side;
  }
  double center_x() const { return x0 + 0.5 * side; }
  double center_y() const { return y0 + 0.5 * side; }
};

// Axis-aligned keypoint box in full-image pixels (zero-size means "masked").
struct PixelBox {
  double x0 = 0, y0 = 0, w = 0, h = 0;

  bool empty() const { return w <= 0 || h <= 0; }
  double center_x() const { return x0 + 0.5 * w; }
  double center_y() const { return y0 + 0.5 * h; }
  double max_side() const { return w > h ? w : h; }
};

// Per-frame 2D detections for one part (body or a hand).
struct Keypoints2D {
  MatX2 points;  // J x 2 full-image pixels
  VecX conf;     // J, in [0,1]
};

// Per-clip detections for all parts; frames are aligned across parts.
struct ClipKeypoints {
  std::vector<Keypoints2D> body;   // 25 points per frame
  std::vector<Keypoints2D> left;   // 21 points per frame
  std::vector<Keypoints2D> right;  // 21 points per frame

  int length() const { return static_cast<int>(body.size()); }
};

// ── configuration ─────────────────────────────────────────────────────────

struct CloseupConfig {
  double ratio_split = 0.5;      // upper-body ratio above which we crop at the hip
  double margin_frac = 0.05;     // crop margin as a fraction of body pixel height
  double scale_min = 0.85;       // clip-level zoom jitter
  double scale_max = 1.25;
  double translate_frac = 0.10;  // clip-level shift, fraction of crop side
  double blur_ratio = 2.0;       // flag blur when crop side / network side exceeds this
  int network_side = 256;        // input resolution the crop is resampled to
  double mix_ratio = 0.4;        // fraction of close-up views drawn during training
  int min_hand_keypoints = kMinHandKeypoints;
  double min_hand_box_px = kMinHandBoxPx;  // in network-resolution pixels
  double box_padding = 0.10;     // padding added around fitted keypoint boxes
};

// ── crop synthesis ────────────────────────────────────────────────────────

// One sampled view of a clip: a single square window shared by every frame,
// plus per-frame hand visibility decisions made inside that window.
struct CropSpec {
  CropRect rect;
  double scale = 1.0;        // sampled zoom factor (already applied to rect)
  Vec2 translation = Vec2::Zero();  // sampled shift in pixels (already applied)
  bool blur = false;
  std::vector<std::array<int, 2>> hand_visible;       // per frame {left, right}
  std::vector<std::array<PixelBox, 2>> hand_boxes;    // per frame {left, right}

  int length() const { return static_cast<int>(hand_visible.size()); }
};

// Fraction of the figure taken up by the upper body: distance from the head
// to the pelvis divided by the total visible pixel height. Throws
// UndefinedRatioError when the required points are missing or the figure is
// under one pixel tall.
double upper_body_ratio(const Keypoints2D& body);

// Pose-conditioned close-up of a clip. The window is decided once from the
// clip-median upper-body ratio: torso-dominant clips are cut at the hips,
// others keep the knees; one zoom factor and shift are sampled per clip and
// shared by all frames. Hand visibility is then re-evaluated inside the
// final window.
CropSpec synthesize_closeup(const ClipKeypoints& kps, const CloseupConfig& cfg, Rng& rng);

// The un-augmented view: a square window covering the full image.
CropSpec full_body_crop(int image_width, int image_height, const ClipKeypoints& kps,
                        const CloseupConfig& cfg);

// Recounts, for every frame and hand, how many confident keypoints fall
// inside the window and how large the hand appears at network resolution;
// fills spec.hand_visible / spec.hand_boxes. A hand is kept when at least
// `min_hand_keypoints` points survive and the fitted box spans at least
// `min_hand_box_px` pixels after resampling (both thresholds inclusive).
void recompute_hand_visibility(CropSpec& spec, const ClipKeypoints& kps,
                               const CloseupConfig& cfg);

// Tight box around confident in-window points, grown by `padding` of its
// larger side; zero-size when no point qualifies.
PixelBox fit_keypoint_box(const Keypoints2D& kp, const CropRect& rect, double padding);

// ── manifest ──────────────────────────────────────────────────────────────

struct AugmentationRecord {
  std::string clip_id;
  CropSpec spec;
};

void save_augmentation_manifest(const std::vector<AugmentationRecord>& records,
                                const std::string& path);
std::vector<AugmentationRecord> load_augmentation_manifest(const std::string& path);

}  // namespace wbmr
