#include "wbmr/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "wbmr/errors.hpp"
#include "wbmr/geometry.hpp"
#include "wbmr/metrics.hpp"

namespace wbmr {
namespace {

using nlohmann::json;

constexpr double kClipFps = 30.0;

// Desk-scene intrinsics shared by every synthetic view.
CameraIntrinsics desk_intrinsics() {
  CameraIntrinsics K;
  K.fx = 500.0;
  K.fy = 500.0;
  K.cx = 256.0;
  K.cy = 256.0;
  K.width = 512;
  K.height = 512;
  return K;
}

// Static-or-slow-orbit camera ring around `target`. The angular rate is
// bounded well under the representation's slow-camera assumption.
CameraModel make_camera(Rng& rng, int frames, const Vec3& target, double dist_lo,
                        double dist_hi) {
  CameraModel cam;
  cam.K = desk_intrinsics();
  const double dist = rng.uniform(dist_lo, dist_hi);
  const double height = rng.uniform(1.0, 1.35);
  const double azimuth0 = rng.uniform(-0.3, 0.3);
  const bool orbits = rng.uniform() < 0.5;
  const double rate = orbits ? rng.uniform(-0.004, 0.004) : 0.0;  // rad/frame
  cam.frames.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    const double az = azimuth0 + rate * t;
    Vec3 eye = target + Vec3(dist * std::sin(az), 0.0, dist * std::cos(az));
    eye.y() = height;
    cam.frames.push_back(look_at(eye, target, Vec3(0, 1, 0)));
  }
  return cam;
}

// Neutral standing pose: arms rotated down to the sides, all else at rest.
std::array<Mat3, kNumJoints> standing_pose() {
  std::array<Mat3, kNumJoints> pose;
  pose.fill(Mat3::Identity());
  pose[16] = expmap(Vec3(0, 0, -1.25));
  pose[17] = expmap(Vec3(0, 0, 1.25));
  return pose;
}

VecX draw_betas(Rng& rng) { return rng.gaussian_vec(kNumShapeCoeffs, 0.15); }

double smooth01(double u) { return u * u * (3.0 - 2.0 * u); }

// ── clip generators ────────────────────────────────────────────────────────
//
// All generators articulate smooth sinusoidal joint trajectories on the
// canonical skeleton. The walk is built as an explicit phase machine so
// that the planted leg is bitwise frozen during its stance: the root and
// the planted chain's local rotations are held exactly constant, which
// makes the chain's world positions exactly constant and the derived
// contact labels exact.

constexpr int kStance = 8;                       // frames per single support
constexpr int kGlide = 6;                        // frames per weight shift
constexpr int kCycle = 2 * (kStance + kGlide);   // full gait cycle, 28 frames

WorldMotion walk_motion(Rng& rng, int length) {
  WorldMotion world;
  world.fps = kClipFps;
  world.betas = draw_betas(rng);
  const double yaw = M_PI / 2 + rng.uniform(-0.3, 0.3);
  const Mat3 root_R = expmap(Vec3(0, yaw, 0));
  const Vec3 travel_dir = root_R * Vec3(0, 0, 1);
  const double step_len = rng.uniform(0.05, 0.07);
  const double hip_amp = 0.3, knee_amp = 0.5, arm_amp = 0.3;

  world.pose.reserve(length);
  world.root.reserve(length);
  for (int t = 0; t < length; ++t) {
    const int cycle = t / kCycle;
    const int m = t % kCycle;

    // Root path: frozen during each stance, advancing by one step length
    // during each glide.
    double along = 2.0 * step_len * cycle;
    if (m < kStance) {
      // left support: hold.
    } else if (m < kStance + kGlide) {
      along += step_len * smooth01(double(m - kStance + 1) / (kGlide + 1));
    } else if (m < 2 * kStance + kGlide) {
      along += step_len;  // right support: hold.
    } else {
      along += step_len * (1.0 + smooth01(double(m - 2 * kStance - kGlide + 1) / (kGlide + 1)));
    }

    auto pose = standing_pose();
    const int swing_span = kStance + kGlide;  // 14 frames
    // While the left leg is planted (first half-cycle) the right leg swings,
    // and vice versa. The knee carries a quarter-offset lift so the swing
    // foot never has a zero-velocity sample at the hip-swing peak.
    auto articulate_swing = [&](int hip, int knee, int k) {
      const double s = std::sin(M_PI * k / double(swing_span - 1));
      const double lift = 0.5 * (1.0 - std::cos(2.0 * M_PI * k / double(swing_span)));
      pose[hip] = expmap(Vec3(hip_amp * s, 0, 0));
      pose[knee] = expmap(Vec3(knee_amp * lift, 0, 0));
    };
    if (m < swing_span) {
      articulate_swing(2, 5, m);  // right leg swings, left planted
    } else {
      articulate_swing(1, 4, m - swing_span);  // left leg swings, right planted
    }

    // Arm swing, antiphase, peaking mid-stance so the wrists never sit
    // still relative to the world.
    const double arm = arm_amp * std::cos(2.0 * M_PI * (m - 4) / double(kCycle));
    pose[16] = expmap(Vec3(arm, 0, 0)) * pose[16];
    pose[17] = expmap(Vec3(-arm, 0, 0)) * pose[17];

    world.pose.push_back(pose);
    world.root.push_back(RootTransform{root_R, Vec3(0, 0.95, 0) + travel_dir * along});
  }
  return world;
}

WorldMotion wave_motion(Rng& rng, int length) {
  WorldMotion world;
  world.fps = kClipFps;
  world.betas = draw_betas(rng);
  const double period = rng.uniform(16.0, 24.0);
  for (int t = 0; t < length; ++t) {
    auto pose = standing_pose();
    pose[17] = expmap(Vec3(0, 0, 0.35));  // right arm raised sideways
    pose[19] = expmap(Vec3(0, 0.9 + 0.4 * std::sin(2 * M_PI * t / period), 0));
    world.pose.push_back(pose);
    world.root.push_back(RootTransform{Mat3::Identity(), Vec3(0, 0.95, 0)});
  }
  return world;
}

WorldMotion reach_motion(Rng& rng, int length) {
  WorldMotion world;
  world.fps = kClipFps;
  world.betas = draw_betas(rng);
  const double extent = rng.uniform(0.9, 1.2);
  for (int t = 0; t < length; ++t) {
    // Reach forward over the first half of the clip and return.
    const double u = double(t) / std::max(1, length - 1);
    const double ramp = std::sin(M_PI * u);
    auto pose = standing_pose();
    pose[17] = expmap(Vec3(extent * ramp, 0, 0)) * expmap(Vec3(0, 0, 1.25));
    pose[19] = expmap(Vec3(0, 0.5 * ramp, 0));
    pose[3] = expmap(Vec3(0.12 * ramp, 0, 0));
    world.pose.push_back(pose);
    world.root.push_back(RootTransform{Mat3::Identity(), Vec3(0, 0.95, 0)});
  }
  return world;
}

WorldMotion finger_wiggle_motion(Rng& rng, int length) {
  WorldMotion world;
  world.fps = kClipFps;
  world.betas = draw_betas(rng);
  // Per-joint phases make the articulation uncorrelated across fingers.
  std::array<double, kNumJoints> phase{};
  for (int j = kLeftHandStart; j < kNumJoints; ++j) phase[j] = rng.uniform(0.0, 2 * M_PI);
  const double period = rng.uniform(12.0, 18.0);
  for (int t = 0; t < length; ++t) {
    auto pose = standing_pose();
    // Forearms forward so both hands sit in front of the chest.
    pose[16] = expmap(Vec3(0, 0, -1.0));
    pose[17] = expmap(Vec3(0, 0, 1.0));
    pose[18] = expmap(Vec3(0, -1.2, 0));
    pose[19] = expmap(Vec3(0, 1.2, 0));
    for (int j = kLeftHandStart; j < kNumJoints; ++j) {
      const double curl = 0.3 + 0.25 * std::sin(2 * M_PI * t / period + phase[j]);
      const double sign = j < kRightHandStart ? -1.0 : 1.0;
      pose[j] = expmap(Vec3(0, 0, sign * curl));
    }
    world.pose.push_back(pose);
    world.root.push_back(RootTransform{Mat3::Identity(), Vec3(0, 0.95, 0)});
  }
  return world;
}

WorldMotion idle_motion(Rng& rng, int length) {
  WorldMotion world;
  world.fps = kClipFps;
  world.betas = draw_betas(rng);
  const auto pose = standing_pose();
  for (int t = 0; t < length; ++t) {
    world.pose.push_back(pose);
    world.root.push_back(RootTransform{Mat3::Identity(), Vec3(0, 0.95, 0)});
  }
  return world;
}

}  // namespace

// ── classification ─────────────────────────────────────────────────────────

double finger_articulation_energy(const WorldMotion& world) {
  const int T = world.length();
  if (T == 0) throw ConfigError("finger articulation energy: empty clip");
  double energy = 0.0;
  const int hands = kNumJoints - kLeftHandStart;
  for (int j = kLeftHandStart; j < kNumJoints; ++j) {
    Vec3 mean = Vec3::Zero();
    std::vector<Vec3> aa(T);
    for (int t = 0; t < T; ++t) {
      aa[t] = logmap(world.pose[t][j]);
      mean += aa[t];
    }
    mean /= T;
    double var = 0.0;
    for (int t = 0; t < T; ++t) var += (aa[t] - mean).squaredNorm();
    energy += var / T;
  }
  return energy / hands;
}

ClipCategory classify_clip(const WorldMotion& world) {
  return finger_articulation_energy(world) > kHandRichEnergyThreshold
             ? ClipCategory::kHandRich
             : ClipCategory::kBodyRich;
}

// ── generation ─────────────────────────────────────────────────────────────

const std::vector<std::string>& clip_kinds() {
  static const std::vector<std::string> kinds = {"walk", "wave", "finger-wiggle", "reach",
                                                 "idle"};
  return kinds;
}

SyntheticClip generate_clip(const std::string& kind, uint64_t seed, int length) {
  if (length < 2) throw ConfigError("generate_clip: length must be at least 2 frames");
  Rng rng(Rng::derive_seed(seed, 0x5eed));
  SyntheticClip clip;
  clip.kind = kind;
  clip.seed = seed;

  double dist_lo = 2.0, dist_hi = 3.0;
  if (kind == "walk") {
    clip.world = walk_motion(rng, length);
    dist_lo = 2.6;
    dist_hi = 3.2;
  } else if (kind == "wave") {
    clip.world = wave_motion(rng, length);
    dist_lo = 2.0;
    dist_hi = 2.6;
  } else if (kind == "finger-wiggle") {
    clip.world = finger_wiggle_motion(rng, length);
    dist_lo = 1.2;  // close enough that the hands resolve
    dist_hi = 1.8;
  } else if (kind == "reach") {
    clip.world = reach_motion(rng, length);
    dist_lo = 2.0;
    dist_hi = 2.6;
  } else if (kind == "idle") {
    clip.world = idle_motion(rng, length);
  } else {
    throw ConfigError("generate_clip: unknown kind '" + kind + "'");
  }

  // Aim the camera at the mid-path chest height.
  Vec3 target = Vec3::Zero();
  for (const RootTransform& r : clip.world.root) target += r.t;
  target /= clip.world.length();
  target.y() = kind == "finger-wiggle" ? 1.05 : 0.9;
  clip.camera = make_camera(rng, length, target, dist_lo, dist_hi);
  clip.category = classify_clip(clip.world);
  return clip;
}

// ── dataset ────────────────────────────────────────────────────────────────

int Dataset::count(ClipCategory c) const {
  int n = 0;
  for (const DatasetEntry& e : entries)
    if (e.clip.category == c) ++n;
  return n;
}

Dataset build_dataset(uint64_t seed, int rounds, int length, const SkeletonModel& skel) {
  if (rounds < 1) throw ConfigError("build_dataset: rounds must be positive");
  Dataset data;
  const auto& kinds = clip_kinds();
  data.entries.reserve(size_t(rounds) * kinds.size());
  for (int r = 0; r < rounds; ++r) {
    for (size_t k = 0; k < kinds.size(); ++k) {
      DatasetEntry entry;
      entry.clip = generate_clip(kinds[k], Rng::derive_seed(seed, uint64_t(r) * 16 + k),
                                 length);
      const GravityFrame gv = make_gravity_frame(entry.clip.camera, Vec3(0, -1, 0));
      entry.states = derive_ground_truth_state(entry.clip.world, entry.clip.camera, gv, skel);
      entry.clean = project_clean_keypoints(entry.clip.world, entry.clip.camera, skel);
      data.entries.push_back(std::move(entry));
    }
  }
  return data;
}

// ── sampling ───────────────────────────────────────────────────────────────

void CurriculumConfig::validate() const {
  if (stage_one_steps < 1 || stage_two_steps < 0)
    throw ConfigError("curriculum: step counts must be positive");
  if (window < 2) throw ConfigError("curriculum: the training window needs two frames");
  if (batch_size < 1) throw ConfigError("curriculum: batch size must be positive");
  if (!(hand_rich_multiplier > 0))
    throw ConfigError("curriculum: the hand-rich sampling multiplier must be positive");
  if (!(learning_rate > 0)) throw ConfigError("curriculum: learning rate must be positive");
  if (warmup_steps < 0) throw ConfigError("curriculum: warmup steps cannot be negative");
  if (eval_every < 1) throw ConfigError("curriculum: evaluation period must be positive");
  if (!(loss_ema_alpha > 0.0) || loss_ema_alpha > 1.0)
    throw ConfigError("curriculum: the loss smoothing factor must lie in (0, 1]");
}

namespace {

// Cut [offset, offset + window) out of a synthesized observation clip.
ObservationClip slice_observations(const ObservationClip& full, int offset, int window) {
  ObservationClip out;
  out.fps = full.fps;
  out.K = full.K;
  out.crop = full.crop;
  out.blur = full.blur;
  out.frames.assign(full.frames.begin() + offset, full.frames.begin() + offset + window);
  return out;
}

MotionSequence slice_states(const MotionSequence& full, int offset, int window) {
  MotionSequence out;
  out.fps = full.fps;
  out.betas = full.betas;
  out.frames.assign(full.frames.begin() + offset, full.frames.begin() + offset + window);
  return out;
}

int pick_clip(const Dataset& data, int stage, double multiplier, Rng& rng) {
  if (stage <= 1) return rng.uniform_int(0, data.size() - 1);
  double total = 0.0;
  for (const DatasetEntry& e : data.entries)
    total += e.clip.category == ClipCategory::kHandRich ? multiplier : 1.0;
  double u = rng.uniform() * total;
  for (int i = 0; i < data.size(); ++i) {
    const double w =
        data.entries[i].clip.category == ClipCategory::kHandRich ? multiplier : 1.0;
    u -= w;
    if (u < 0.0) return i;
  }
  return data.size() - 1;
}

TrainingExample make_example(const DatasetEntry& entry, int clip_index, int window,
                             const CloseupConfig& closeup, const NoiseConfig& noise,
                             const SkeletonModel& skel, bool as_closeup, int offset,
                             uint64_t obs_seed, Rng& view_rng) {
  TrainingExample ex;
  ex.clip_index = clip_index;
  ex.offset = offset;
  ex.closeup = as_closeup;
  const CropSpec view =
      as_closeup ? synthesize_closeup(entry.clean, closeup, view_rng)
                 : full_body_crop(entry.clip.camera.K.width, entry.clip.camera.K.height,
                                  entry.clean, closeup);
  const ObservationClip full = synthesize_observations(entry.clip.world, entry.clip.camera,
                                                       skel, view, closeup, noise, obs_seed);
  ex.obs = slice_observations(full, offset, window);
  ex.target = slice_states(entry.states, offset, window);
  return ex;
}

}  // namespace

std::vector<TrainingExample> sample_batch(const Dataset& data, int stage,
                                          const CurriculumConfig& curriculum,
                                          const CloseupConfig& closeup,
                                          const NoiseConfig& noise, const SkeletonModel& skel,
                                          Rng& rng) {
  curriculum.validate();
  if (data.size() == 0) throw ConfigError("sample_batch: empty dataset");
  std::vector<TrainingExample> batch;
  batch.reserve(curriculum.batch_size);
  for (int b = 0; b < curriculum.batch_size; ++b) {
    const int idx = pick_clip(data, stage, curriculum.hand_rich_multiplier, rng);
    const DatasetEntry& entry = data.entries[idx];
    const int L = entry.states.length();
    if (L < curriculum.window)
      throw ConfigError("sample_batch: clip shorter than the training window");
    const bool as_closeup = rng.uniform() < closeup.mix_ratio;
    const int offset = rng.uniform_int(0, L - curriculum.window);
    const uint64_t obs_seed = rng.u64();
    batch.push_back(make_example(entry, idx, curriculum.window, closeup, noise, skel,
                                 as_closeup, offset, obs_seed, rng));
  }
  return batch;
}

// ── training loop ──────────────────────────────────────────────────────────

namespace {

double scheduled_lr(const CurriculumConfig& c, int step, int total) {
  const double base = c.learning_rate;
  if (c.warmup_steps > 0 && step <= c.warmup_steps) return base * step / c.warmup_steps;
  const int tail = std::max(1, total - c.warmup_steps);
  const double progress = double(step - c.warmup_steps) / tail;
  return base * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, progress)));
}

void scale_grads(ModelOutputGrads& g, double s) {
  g.theta *= s;
  g.gv_orient *= s;
  g.root_vel *= s;
  g.cam_orient *= s;
  g.cam_trans *= s;
  g.contact_logits *= s;
  g.beta_avg *= s;
}

struct HeldOutSet {
  std::vector<TrainingExample> examples;
  std::vector<char> hand_rich;
};

// Fixed evaluation windows: the leading `window` frames of every held-out
// clip under its full-body view, with seeds derived once from the run seed
// so every evaluation sees the identical inputs.
HeldOutSet build_held_out(const Dataset& held_out, const CurriculumConfig& curriculum,
                          const CloseupConfig& closeup, const NoiseConfig& noise,
                          const SkeletonModel& skel) {
  HeldOutSet set;
  for (int i = 0; i < held_out.size(); ++i) {
    const DatasetEntry& entry = held_out.entries[i];
    if (entry.states.length() < curriculum.window)
      throw ConfigError("train: held-out clip shorter than the training window");
    Rng view_rng(Rng::derive_seed(curriculum.seed, 0xe7a1 + i));
    set.examples.push_back(make_example(entry, i, curriculum.window, closeup, noise, skel,
                                        /*as_closeup=*/false, /*offset=*/0,
                                        Rng::derive_seed(curriculum.seed, 0x0b5 + i),
                                        view_rng));
    set.hand_rich.push_back(entry.clip.category == ClipCategory::kHandRich ? 1 : 0);
  }
  return set;
}

EvalSnapshot evaluate_held_out(WholeBodyModel& model, const HeldOutSet& set,
                               const SkeletonModel& skel, int step, int stage) {
  EvalSnapshot snap;
  snap.step = step;
  snap.stage = stage;
  const LossWeights weights = LossWeights::stage_two();
  int hand_clips = 0;
  for (size_t i = 0; i < set.examples.size(); ++i) {
    const TrainingExample& ex = set.examples[i];
    const ModelOutput out = model.forward(ex.obs);
    const LossBreakdown b = compute_losses(out, ex.target, &ex.obs, skel, weights, nullptr);
    snap.total_loss += b.total;
    snap.hand_term += b.terms.at("pose_hand") + b.terms.at("joints3d_hand");
    if (set.hand_rich[i]) {
      MotionSequence pred;
      pred.fps = ex.target.fps;
      pred.betas = out.beta_avg;
      pred.frames = out.states();
      const MetricsReport report = evaluate_motion(pred, ex.target, skel);
      snap.hand_pa_mpjpe += report.hands.pa_mpjpe;
      ++hand_clips;
    }
  }
  const double n = double(std::max<size_t>(1, set.examples.size()));
  snap.total_loss /= n;
  snap.hand_term /= n;
  if (hand_clips > 0) snap.hand_pa_mpjpe /= hand_clips;
  return snap;
}

}  // namespace

TrainResult train(WholeBodyModel& model, const Dataset& train_set, const Dataset& held_out,
                  const CurriculumConfig& curriculum, const CloseupConfig& closeup,
                  const NoiseConfig& noise, const SkeletonModel& skel,
                  const std::string& output_dir) {
  curriculum.validate();
  if (train_set.size() == 0) throw ConfigError("train: empty training set");
  if (model.config().feature_dim != noise.feature_dim)
    throw ConfigError("train: model feature width does not match the observation stream");

  std::filesystem::create_directories(output_dir);
  TrainResult result;
  result.log_path = output_dir + "/train_log.jsonl";
  result.checkpoint_path = output_dir + "/model.ckpt";
  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw IoError("train: cannot write " + result.log_path);

  const HeldOutSet eval_set =
      build_held_out(held_out.size() > 0 ? held_out : train_set, curriculum, closeup, noise,
                     skel);

  Rng rng(Rng::derive_seed(curriculum.seed, 0x7a17));
  Adam opt(model.params());
  const int total = curriculum.stage_one_steps + curriculum.stage_two_steps;
  double ema = 0.0;

  for (int step = 1; step <= total; ++step) {
    const int stage = step <= curriculum.stage_one_steps ? 1 : 2;
    const LossWeights weights =
        stage == 1 ? LossWeights::stage_one() : LossWeights::stage_two();
    const double lr = scheduled_lr(curriculum, step, total);

    std::vector<TrainingExample> batch =
        sample_batch(train_set, stage, curriculum, closeup, noise, skel, rng);

    model.params().zero_grad();
    double loss = 0.0;
    std::map<std::string, double> term_means;
    const double inv_b = 1.0 / batch.size();
    for (const TrainingExample& ex : batch) {
      const ModelOutput out = model.forward(ex.obs);
      ModelOutputGrads grads = ModelOutputGrads::zeros_like(out);
      const LossBreakdown b = compute_losses(out, ex.target, &ex.obs, skel, weights, &grads);
      loss += b.total * inv_b;
      for (const auto& [name, value] : b.contributions) term_means[name] += value * inv_b;
      scale_grads(grads, inv_b);
      model.backward(grads);
    }

    if (!std::isfinite(loss)) {
      json dump;
      dump["step"] = step;
      dump["stage"] = stage;
      dump["loss"] = std::to_string(loss);
      json terms = json::object();
      for (const auto& [name, value] : term_means) terms[name] = std::to_string(value);
      dump["terms"] = terms;
      json provenance = json::array();
      for (const TrainingExample& ex : batch)
        provenance.push_back(
            {{"clip", ex.clip_index}, {"offset", ex.offset}, {"closeup", ex.closeup}});
      dump["batch"] = provenance;
      std::ofstream out(output_dir + "/diagnostic_dump.json", std::ios::trunc);
      out << dump.dump(2) << "\n";
      throw NumericalError("train: non-finite loss at step " + std::to_string(step) +
                           "; diagnostics written to " + output_dir +
                           "/diagnostic_dump.json");
    }

    opt.step(lr);

    ema = step == 1 ? loss : ema + curriculum.loss_ema_alpha * (loss - ema);
    result.ema_history.push_back(ema);
    if (step == 10) result.step10_ema = ema;

    json line;
    line["step"] = step;
    line["stage"] = stage;
    line["lr"] = lr;
    line["loss"] = loss;
    line["ema"] = ema;
    json terms = json::object();
    for (const auto& [name, value] : term_means) terms[name] = value;
    line["terms"] = terms;
    json provenance = json::array();
    for (const TrainingExample& ex : batch)
      provenance.push_back(
          {{"clip", ex.clip_index}, {"offset", ex.offset}, {"closeup", ex.closeup}});
    line["batch"] = provenance;
    log << line.dump() << "\n";

    const bool stage_end = step == curriculum.stage_one_steps || step == total;
    if (step % curriculum.eval_every == 0 || stage_end) {
      const EvalSnapshot snap = evaluate_held_out(model, eval_set, skel, step, stage);
      result.evals.push_back(snap);
      if (step == curriculum.stage_one_steps) result.end_of_stage_one = snap;
      if (step == total) result.end_of_stage_two = snap;
      json eval_line;
      eval_line["step"] = step;
      eval_line["eval"] = {{"total", snap.total_loss},
                           {"hand_term", snap.hand_term},
                           {"hand_pa_mpjpe_mm", snap.hand_pa_mpjpe}};
      log << eval_line.dump() << "\n";
    }
  }

  result.final_ema = result.ema_history.empty() ? 0.0 : result.ema_history.back();
  if (result.step10_ema == 0.0 && !result.ema_history.empty())
    result.step10_ema = result.ema_history.front();
  model.save_checkpoint(result.checkpoint_path);
  return result;
}

}  // namespace wbmr
