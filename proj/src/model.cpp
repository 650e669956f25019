#include "wbmr/model.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "wbmr/errors.hpp"
#include "wbmr/geometry.hpp"

namespace wbmr {

namespace {

constexpr int kThetaRows = 6 * kNumJoints;

nlohmann::ordered_json config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["latent_dim"] = cfg.latent_dim;
  j["layers"] = cfg.layers;
  j["heads"] = cfg.heads;
  j["window"] = cfg.window;
  j["feature_dim"] = cfg.feature_dim;
  j["kp_proj_dim"] = cfg.kp_proj_dim;
  j["param_seed"] = cfg.param_seed;
  j["linear_test_mode"] = cfg.linear_test_mode;
  j["disable_hand_fusion"] = cfg.disable_hand_fusion;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.layers = j.at("layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.window = j.at("window").get<double>();
  cfg.feature_dim = j.at("feature_dim").get<int>();
  cfg.kp_proj_dim = j.at("kp_proj_dim").get<int>();
  cfg.param_seed = j.at("param_seed").get<uint64_t>();
  cfg.linear_test_mode = j.value("linear_test_mode", false);
  cfg.disable_hand_fusion = j.value("disable_hand_fusion", false);
  return cfg;
}

// Repeat the identity 6D vector down a head bias so an untrained model
// decodes to valid (identity) rotations out of the box.
void init_orientation_bias(Linear& head, int copies) {
  const Rot6 id = identity_rot6();
  MatX& b = head.bias().value;  // out x 1
  for (int c = 0; c < copies; ++c) b.block<6, 1>(6 * c, 0) = id;
}

// Global-orientation heads start half a turn about the vertical from the
// identity: an upright subject facing the camera sits near that rotation in
// both the camera and the gravity-view frames, so optimization starts close
// to the data instead of at its antipode.
void init_facing_bias(Linear& head) {
  MatX& b = head.bias().value;
  b.col(0).head<6>() << -1, 0, 0, 0, 1, 0;  // columns of Ry(pi)
}

}  // namespace

// ── ModelConfig ───────────────────────────────────────────────────────────

void ModelConfig::validate() const {
  if (latent_dim <= 0 || layers <= 0 || heads <= 0)
    throw ConfigError("model dimensions must be positive");
  if (latent_dim % heads != 0)
    throw ConfigError("latent_dim must be divisible by heads");
  if ((latent_dim / heads) % 2 != 0)
    throw ConfigError("per-head width must be even");
  if (window < 1.0) throw ConfigError("attention window must be at least 1");
  if (feature_dim <= 0) throw ConfigError("feature_dim must be positive");
  if (kp_proj_dim <= 0) throw ConfigError("kp_proj_dim must be positive");
}

// ── KeypointEncoder ───────────────────────────────────────────────────────

KeypointEncoder::KeypointEncoder(ParamStore& store, const std::string& prefix, int points,
                                 int proj_dim, int out_dim, Rng& rng)
    : points_(points), proj_dim_(proj_dim) {
  proj_ = &store.add(prefix + ".proj", proj_dim, 2 * points);
  bias_ = &store.add(prefix + ".point_bias", proj_dim, points);
  missing_ = &store.add(prefix + ".missing", proj_dim, points);
  const double scale = std::sqrt(2.0 / (2.0 + proj_dim));
  for (int i = 0; i < proj_->value.size(); ++i)
    proj_->value.data()[i] = scale * rng.gaussian();
  for (int i = 0; i < missing_->value.size(); ++i)
    missing_->value.data()[i] = 0.02 * rng.gaussian();
  mlp_ = Mlp2(store, prefix + ".mlp", proj_dim, out_dim, out_dim, rng);
}

MatX KeypointEncoder::forward(const MatX& coords, const std::vector<std::vector<char>>& valid,
                              bool linear_mode) {
  const int T = static_cast<int>(coords.cols());
  if (coords.rows() != 2 * points_ || static_cast<int>(valid.size()) != T)
    throw ConfigError("keypoint encoder input shape mismatch");
  coords_ = coords;
  valid_ = valid;
  MatX agg = MatX::Zero(proj_dim_, T);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < points_; ++j) {
      if (valid[t][j]) {
        agg.col(t) += proj_->value.middleCols(2 * j, 2) * coords.block<2, 1>(2 * j, t) +
                      bias_->value.col(j);
      } else {
        agg.col(t) += missing_->value.col(j);
      }
    }
  }
  return mlp_.forward(agg, linear_mode);
}

MatX KeypointEncoder::backward(const MatX& d_y) {
  const MatX d_agg = mlp_.backward(d_y);
  const int T = static_cast<int>(d_agg.cols());
  d_coords_ = MatX::Zero(2 * points_, T);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < points_; ++j) {
      if (valid_[t][j]) {
        proj_->grad.middleCols(2 * j, 2) +=
            d_agg.col(t) * coords_.block<2, 1>(2 * j, t).transpose();
        bias_->grad.col(j) += d_agg.col(t);
        d_coords_.block<2, 1>(2 * j, t) =
            proj_->value.middleCols(2 * j, 2).transpose() * d_agg.col(t);
      } else {
        missing_->grad.col(j) += d_agg.col(t);
      }
    }
  }
  return d_coords_;
}

// ── ModelOutput ───────────────────────────────────────────────────────────

std::vector<MotionState> ModelOutput::states() const {
  const int T = length();
  std::vector<MotionState> out(T);
  for (int t = 0; t < T; ++t) {
    MotionState& s = out[t];
    s.gv_orient = gv_orient.col(t);
    s.root_velocity = root_vel.col(t);
    for (int j = 0; j < kNumJoints; ++j) s.pose[j] = theta.block<6, 1>(6 * j, t);
    s.shape = beta_avg;
    s.cam_orient = cam_orient.col(t);
    s.cam_translation = cam_trans.col(t);
    s.contacts = contact_probs.col(t);
  }
  return out;
}

ModelOutputGrads ModelOutputGrads::zeros_like(const ModelOutput& out) {
  ModelOutputGrads g;
  g.theta = MatX::Zero(out.theta.rows(), out.theta.cols());
  g.gv_orient = MatX::Zero(6, out.length());
  g.root_vel = MatX::Zero(3, out.length());
  g.cam_orient = MatX::Zero(6, out.length());
  g.cam_trans = MatX::Zero(3, out.length());
  g.contact_logits = MatX::Zero(kNumContacts, out.length());
  g.beta_avg = VecX::Zero(kNumShapeCoeffs);
  return g;
}

// ── WholeBodyModel ────────────────────────────────────────────────────────

WholeBodyModel::WholeBodyModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.param_seed);
  const int d = cfg_.latent_dim;
  const int f = cfg_.feature_dim;
  const int p = cfg_.kp_proj_dim;

  ek_body_ = KeypointEncoder(store_, "enc.body.kp", kBodyKeypoints, p, d, rng);
  ef_body_ = Mlp2(store_, "enc.body.feat", f, d, d, rng);
  eb_body_ = Mlp2(store_, "enc.body.box", 3, d, d, rng);
  eo_body_ = Mlp2(store_, "enc.body.angvel", 3, d, d, rng);
  ek_left_ = KeypointEncoder(store_, "enc.left.kp", kHandKeypoints, p, d, rng);
  ek_right_ = KeypointEncoder(store_, "enc.right.kp", kHandKeypoints, p, d, rng);
  ef_hand_ = Mlp2(store_, "enc.hand.feat", f, d, d, rng);
  eb_hand_ = Mlp2(store_, "enc.hand.box", 3, d, d, rng);
  fuse_ = Mlp2(store_, "fuse.hands", 2 * d, d, d, rng);
  temporal_ = TemporalEncoder(store_, "temporal", d, cfg_.layers, cfg_.heads, cfg_.window, rng);
  head_theta_ = Linear(store_, "head.theta", d, kThetaRows, rng);
  head_gv_ = Linear(store_, "head.gv", d, 6, rng);
  head_vel_ = Linear(store_, "head.vel", d, 3, rng);
  head_beta_ = Linear(store_, "head.beta", d, kNumShapeCoeffs, rng);
  head_cam_r_ = Linear(store_, "head.cam_orient", d, 6, rng);
  head_cam_t_ = Linear(store_, "head.cam_trans", d, 3, rng);
  head_contact_ = Linear(store_, "head.contact", d, kNumContacts, rng);

  init_orientation_bias(head_theta_, kNumJoints);
  init_facing_bias(head_gv_);
  init_facing_bias(head_cam_r_);
  // Start the camera translation at a plausible subject depth.
  head_cam_t_.bias().value.col(0).head<3>() = Vec3(0, 0, 2.4);
}

WholeBodyModel::Assembled WholeBodyModel::assemble(const ObservationClip& clip) const {
  const int T = clip.length();
  if (T == 0) throw ConfigError("cannot run the model on an empty clip");
  Assembled a;
  a.body_coords = MatX::Zero(2 * kBodyKeypoints, T);
  a.body_feat = MatX::Zero(cfg_.feature_dim, T);
  a.body_box = MatX::Zero(3, T);
  a.omega = MatX::Zero(3, T);
  a.lh_coords = MatX::Zero(2 * kHandKeypoints, T);
  a.rh_coords = MatX::Zero(2 * kHandKeypoints, T);
  a.hand_feat = MatX::Zero(cfg_.feature_dim, 2 * T);
  a.hand_box = MatX::Zero(3, 2 * T);
  a.body_valid.resize(T);
  a.lh_valid.resize(T);
  a.rh_valid.resize(T);

  for (int t = 0; t < T; ++t) {
    const FrameObservation& fr = clip.frames[t];
    if (fr.features.size() != cfg_.feature_dim ||
        fr.left.features.size() != cfg_.feature_dim ||
        fr.right.features.size() != cfg_.feature_dim)
      throw ConfigError("observation feature width does not match model config");
    a.body_valid[t].assign(fr.valid_kp.begin(), fr.valid_kp.end());
    for (int j = 0; j < kBodyKeypoints; ++j) {
      if (!fr.valid_kp[j]) continue;  // untrusted coordinates never enter
      a.body_coords.block<2, 1>(2 * j, t) =
          normalize_to_crop(fr.body.points.row(j).transpose(), clip.crop);
    }
    a.body_feat.col(t) = fr.features;
    a.body_box.col(t) = fr.box_token;
    a.omega.col(t) = fr.cam_ang_vel;

    auto fill_hand = [&](const HandObservation& h, MatX& coords, std::vector<char>& valid,
                         int stack_col) {
      valid.assign(kHandKeypoints, 0);
      if (!h.visible) return;  // masked hands contribute stand-ins and zero streams
      for (int j = 0; j < kHandKeypoints; ++j) {
        if (!h.valid_kp[j]) continue;
        valid[j] = 1;
        coords.block<2, 1>(2 * j, t) =
            normalize_to_crop(h.kp.points.row(j).transpose(), clip.crop);
      }
      a.hand_feat.col(stack_col) = h.features;
      a.hand_box.col(stack_col) = h.box_token;
    };
    fill_hand(fr.left, a.lh_coords, a.lh_valid[t], t);
    fill_hand(fr.right, a.rh_coords, a.rh_valid[t], T + t);
  }
  return a;
}

ModelOutput WholeBodyModel::forward(const ObservationClip& clip) {
  const Assembled a = assemble(clip);
  const int T = clip.length();
  last_T_ = T;
  const bool lin = cfg_.linear_test_mode;

  ModelOutput out;
  out.z_body = ek_body_.forward(a.body_coords, a.body_valid, lin) +
               ef_body_.forward(a.body_feat, lin) + eb_body_.forward(a.body_box, lin) +
               eo_body_.forward(a.omega, lin);

  const MatX hand_feat_tok = ef_hand_.forward(a.hand_feat, lin);
  const MatX hand_box_tok = eb_hand_.forward(a.hand_box, lin);
  out.z_left = ek_left_.forward(a.lh_coords, a.lh_valid, lin) + hand_feat_tok.leftCols(T) +
               hand_box_tok.leftCols(T);
  out.z_right = ek_right_.forward(a.rh_coords, a.rh_valid, lin) +
                hand_feat_tok.rightCols(T) + hand_box_tok.rightCols(T);

  if (cfg_.disable_hand_fusion) {
    out.z_fused = out.z_body;
  } else {
    MatX both(2 * cfg_.latent_dim, T);
    both.topRows(cfg_.latent_dim) = out.z_left;
    both.bottomRows(cfg_.latent_dim) = out.z_right;
    out.z_fused = out.z_body + fuse_.forward(both, lin);
  }

  out.h = temporal_.forward(out.z_fused);

  out.theta = head_theta_.forward(out.h);
  out.gv_orient = head_gv_.forward(out.h);
  out.root_vel = head_vel_.forward(out.h);
  out.beta = head_beta_.forward(out.h);
  out.beta_avg = out.beta.rowwise().mean();
  out.cam_orient = head_cam_r_.forward(out.h);
  out.cam_trans = head_cam_t_.forward(out.h);
  out.contact_logits = head_contact_.forward(out.h);
  out.contact_probs = sigmoid(out.contact_logits);
  return out;
}

void WholeBodyModel::backward(const ModelOutputGrads& g) {
  const int T = last_T_;
  if (T == 0) throw ConfigError("backward called before forward");

  MatX d_h = head_theta_.backward(g.theta);
  d_h += head_gv_.backward(g.gv_orient);
  d_h += head_vel_.backward(g.root_vel);
  // The clip shape is the mean over frames, so every frame sees 1/T of it.
  d_h += head_beta_.backward((g.beta_avg / double(T)).replicate(1, T));
  d_h += head_cam_r_.backward(g.cam_orient);
  d_h += head_cam_t_.backward(g.cam_trans);
  d_h += head_contact_.backward(g.contact_logits);

  MatX d_z = temporal_.backward(d_h);

  if (!cfg_.disable_hand_fusion) {
    const MatX d_both = fuse_.backward(d_z);
    const MatX d_zl = d_both.topRows(cfg_.latent_dim);
    const MatX d_zr = d_both.bottomRows(cfg_.latent_dim);
    MatX d_hand_tok(cfg_.latent_dim, 2 * T);
    d_hand_tok.leftCols(T) = d_zl;
    d_hand_tok.rightCols(T) = d_zr;
    ef_hand_.backward(d_hand_tok);
    eb_hand_.backward(d_hand_tok);
    ek_left_.backward(d_zl);
    ek_right_.backward(d_zr);
  }

  ek_body_.backward(d_z);
  ef_body_.backward(d_z);
  eb_body_.backward(d_z);
  eo_body_.backward(d_z);
}

// ── checkpoints ───────────────────────────────────────────────────────────

namespace {

void write_u32(std::ofstream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::ifstream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw IoError("truncated checkpoint");
  return v;
}

}  // namespace

void WholeBodyModel::save_checkpoint(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u32(os, kCheckpointVersion);
  const std::string cfg = config_to_json(cfg_).dump();
  write_u32(os, static_cast<uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto& params = store_.all();
  write_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    write_u32(os, static_cast<uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(os, static_cast<uint32_t>(p->value.rows()));
    write_u32(os, static_cast<uint32_t>(p->value.cols()));
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(sizeof(double) * p->value.size()));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

WholeBodyModel WholeBodyModel::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw IoError("not a model checkpoint: " + path);
  const uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const uint32_t cfg_len = read_u32(is);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), cfg_len);
  if (!is) throw IoError("truncated checkpoint");
  ModelConfig cfg;
  try {
    cfg = config_from_json(nlohmann::json::parse(cfg_text));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint config: ") + e.what());
  }

  WholeBodyModel model(cfg);
  const uint32_t count = read_u32(is);
  if (count != model.store_.all().size())
    throw IoError("checkpoint parameter count does not match the architecture");
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t rows = read_u32(is);
    const uint32_t cols = read_u32(is);
    Param* p = model.store_.find(name);
    if (p == nullptr) throw IoError("checkpoint has unknown parameter: " + name);
    if (static_cast<int>(rows) != p->value.rows() || static_cast<int>(cols) != p->value.cols())
      throw IoError("checkpoint shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(sizeof(double) * p->value.size()));
    if (!is) throw IoError("truncated checkpoint");
  }
  return model;
}

}  // namespace wbmr
