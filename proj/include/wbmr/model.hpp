#pragma once

#include <string>
#include <vector>

#include "wbmr/common.hpp"
#include "wbmr/nn.hpp"
#include "wbmr/observations.hpp"
#include "wbmr/representation.hpp"

namespace wbmr {

// ── configuration ─────────────────────────────────────────────────────────

struct ModelConfig {
  int latent_dim = 128;   // token width d
  int layers = 4;         // temporal blocks
  int heads = 4;
  double window = 120.0;  // local attention span, frames
  int feature_dim = 32;   // width of the observation feature vectors
  int kp_proj_dim = 32;   // per-point aggregation width in the keypoint encoders
  uint64_t param_seed = 1;

  // Test hooks. `linear_test_mode` bypasses the smooth gates in the token
  // encoders and the fusion MLP so their additive structure is exactly
  // checkable; `disable_hand_fusion` drops the hand pathway so predictions
  // coincide with a body-only forward pass.
  bool linear_test_mode = false;
  bool disable_hand_fusion = false;

  void validate() const;  // throws ConfigError
};

// ── keypoint encoder ──────────────────────────────────────────────────────

// Point-set stream: each point contributes a per-point affine image of its
// crop-normalized coordinates when it is trusted, or its learned stand-in
// vector when it is not; the contributions sum and pass through a two-layer
// perceptron. Untrusted coordinates therefore cannot influence the output.
class KeypointEncoder {
 public:
  KeypointEncoder() = default;
  KeypointEncoder(ParamStore& store, const std::string& prefix, int points, int proj_dim,
                  int out_dim, Rng& rng);

  // coords: 2J x T (normalized), valid: T entries of J flags.
  MatX forward(const MatX& coords, const std::vector<std::vector<char>>& valid,
               bool linear_mode);
  MatX backward(const MatX& d_y);

  // d(loss)/d(coords) of the last backward pass — zero rows for untrusted
  // points. Used by the encoder-linearity and gradient tests.
  const MatX& coord_grads() const { return d_coords_; }

 private:
  int points_ = 0, proj_dim_ = 0;
  Param* proj_ = nullptr;     // proj_dim x 2J (per-point blocks of two columns)
  Param* bias_ = nullptr;     // proj_dim x J
  Param* missing_ = nullptr;  // proj_dim x J
  Mlp2 mlp_;
  MatX coords_;
  std::vector<std::vector<char>> valid_;
  MatX d_coords_;
};

// ── model ─────────────────────────────────────────────────────────────────

// Everything the decoding heads emit for one clip, kept in matrix form so
// the loss layer can hand gradients straight back.
struct ModelOutput {
  MatX theta;           // 6*55 x T, raw per-joint 6D stacks
  MatX gv_orient;       // 6 x T
  MatX root_vel;        // 3 x T
  MatX beta;            // 10 x T, per-frame shape before averaging
  VecX beta_avg;        // 10, the clip output
  MatX cam_orient;      // 6 x T
  MatX cam_trans;       // 3 x T
  MatX contact_logits;  // 6 x T
  MatX contact_probs;   // 6 x T, sigmoid of the logits

  // Intermediate tokens, exposed for structural tests.
  MatX z_body, z_left, z_right, z_fused, h;

  int length() const { return static_cast<int>(theta.cols()); }
  std::vector<MotionState> states() const;
};

// Gradients with respect to the head outputs; shapes mirror ModelOutput.
// Contacts are differentiated through their logits.
struct ModelOutputGrads {
  MatX theta, gv_orient, root_vel, cam_orient, cam_trans, contact_logits;
  VecX beta_avg;

  static ModelOutputGrads zeros_like(const ModelOutput& out);
};

class WholeBodyModel {
 public:
  explicit WholeBodyModel(const ModelConfig& cfg);

  ModelOutput forward(const ObservationClip& clip);
  void backward(const ModelOutputGrads& grads);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }

  // Keypoint-coordinate gradients from the last backward (tests only).
  const KeypointEncoder& body_encoder() const { return ek_body_; }

  void save_checkpoint(const std::string& path) const;
  static WholeBodyModel load_checkpoint(const std::string& path);

 private:
  struct Assembled {
    MatX body_coords;  // 50 x T
    MatX body_feat, body_box, omega;
    MatX lh_coords, rh_coords;  // 42 x T
    MatX hand_feat, hand_box;   // stacked columns: left frames then right
    std::vector<std::vector<char>> body_valid, lh_valid, rh_valid;
  };
  Assembled assemble(const ObservationClip& clip) const;

  ModelConfig cfg_;
  ParamStore store_;
  KeypointEncoder ek_body_, ek_left_, ek_right_;
  Mlp2 ef_body_, eb_body_, eo_body_;
  Mlp2 ef_hand_, eb_hand_;  // shared by both hands
  Mlp2 fuse_;
  TemporalEncoder temporal_;
  Linear head_theta_, head_gv_, head_vel_, head_beta_, head_cam_r_, head_cam_t_,
      head_contact_;
  int last_T_ = 0;
};

// Checkpoint container format (binary, little-endian, stable):
//   magic "WBMRCKP1" | u32 version | u32 json_len | config json |
//   u32 count | count x { u32 name_len | name | u32 rows | u32 cols |
//                         rows*cols f64 values (column-major) }
inline constexpr char kCheckpointMagic[8] = {'W', 'B', 'M', 'R', 'C', 'K', 'P', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

}  // namespace wbmr
