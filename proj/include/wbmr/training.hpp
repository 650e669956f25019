#pragma once

#include <string>
#include <vector>

#include "wbmr/augmentation.hpp"
#include "wbmr/model.hpp"
#include "wbmr/objectives.hpp"
#include "wbmr/observations.hpp"
#include "wbmr/representation.hpp"
#include "wbmr/rng.hpp"

namespace wbmr {

// ── synthetic clips ───────────────────────────────────────────────────────

enum class ClipCategory { kBodyRich, kHandRich };

struct SyntheticClip {
  WorldMotion world;
  CameraModel camera;        // one pose per frame
  ClipCategory category = ClipCategory::kBodyRich;
  std::string kind;          // generator name the clip came from
  uint64_t seed = 0;
};

// Mean (over the 30 finger joints) of the per-joint variance of the local
// rotation vector across the clip, rad^2. The category split thresholds
// this: a clip is hand-rich when the fingers actually articulate.
double finger_articulation_energy(const WorldMotion& world);

inline constexpr double kHandRichEnergyThreshold = 1e-3;  // rad^2

ClipCategory classify_clip(const WorldMotion& world);

// Procedural clip families built from smooth sinusoidal joint trajectories.
// Kinds: "walk" (root travel with alternating exact-zero-velocity foot
// plants), "wave" (planted feet, one arm oscillating), "finger-wiggle"
// (close camera, every finger articulating), "reach" (slow arm extension),
// "idle" (completely static). Cameras are static or orbit slowly with
// bounded angular velocity. Unknown kinds are rejected; the same arguments
// always produce the identical clip.
SyntheticClip generate_clip(const std::string& kind, uint64_t seed, int length);

const std::vector<std::string>& clip_kinds();

// ── dataset ───────────────────────────────────────────────────────────────

struct DatasetEntry {
  SyntheticClip clip;
  MotionSequence states;  // ground-truth coupled state, derived once
  ClipKeypoints clean;    // noise-free projections, input to crop synthesis
};

struct Dataset {
  std::vector<DatasetEntry> entries;

  int size() const { return static_cast<int>(entries.size()); }
  int count(ClipCategory c) const;
};

// One clip of every kind per round, `rounds` rounds, each from a seed
// derived from `seed`. All clips share `length` frames.
Dataset build_dataset(uint64_t seed, int rounds, int length, const SkeletonModel& skel);

// ── batch sampling ────────────────────────────────────────────────────────

struct CurriculumConfig {
  int stage_one_steps = 2000;
  int stage_two_steps = 1000;
  double hand_rich_multiplier = 3.0;  // stage-two sampling weight on hand-rich clips
  double learning_rate = 3e-4;        // peak; linear warmup then cosine decay
  int warmup_steps = 50;
  int batch_size = 2;
  int window = 120;                   // frames per training example
  int eval_every = 200;               // held-out evaluation period, steps
  double loss_ema_alpha = 0.05;       // smoothing of the logged training loss
  uint64_t seed = 1;

  void validate() const;  // positive steps, window >= 2, positive lr/batch
};

struct TrainingExample {
  ObservationClip obs;     // one window, masked per the sampled view
  MotionSequence target;   // the matching ground-truth window
  int clip_index = 0;
  int offset = 0;
  bool closeup = false;
};

// Draws one batch: clips are picked uniformly in stage 1, while stage 2
// multiplies the sampling weight of hand-rich clips by the configured
// factor. Each draw passes through close-up augmentation with probability
// `closeup.mix_ratio`, then a window of `curriculum.window` frames is cut at
// a uniformly random offset. Fully reproducible from the rng state.
std::vector<TrainingExample> sample_batch(const Dataset& data, int stage,
                                          const CurriculumConfig& curriculum,
                                          const CloseupConfig& closeup,
                                          const NoiseConfig& noise, const SkeletonModel& skel,
                                          Rng& rng);

// ── training loop ─────────────────────────────────────────────────────────

struct EvalSnapshot {
  int step = 0;
  int stage = 0;
  double total_loss = 0.0;     // held-out mean, fixed stage-two weights
  double hand_term = 0.0;      // unweighted hand rotation + hand joint terms
  double hand_pa_mpjpe = 0.0;  // mm, hand-rich held-out clips
};

struct TrainResult {
  std::vector<double> ema_history;  // smoothed training loss, one entry per step
  double step10_ema = 0.0;
  double final_ema = 0.0;
  EvalSnapshot end_of_stage_one;
  EvalSnapshot end_of_stage_two;
  std::vector<EvalSnapshot> evals;
  std::string checkpoint_path;
  std::string log_path;
};

// Two-stage curriculum on one model: stage 1 runs with the stage-one loss
// weights and uniform clip sampling, stage 2 switches only the loss weights
// and the sampling distribution — the model, optimizer state and learning
// rate schedule continue across the boundary. Every step appends one JSON
// line (step, stage, learning rate, loss breakdown, smoothed loss, batch
// provenance) to train_log.jsonl in `output_dir`; held-out metrics are
// evaluated periodically and at both stage ends. A non-finite loss aborts
// with NumericalError after writing a diagnostic dump of the offending
// batch next to the log. The final weights are written as a checkpoint in
// `output_dir` and the run is bit-reproducible from the seeds.
TrainResult train(WholeBodyModel& model, const Dataset& train_set, const Dataset& held_out,
                  const CurriculumConfig& curriculum, const CloseupConfig& closeup,
                  const NoiseConfig& noise, const SkeletonModel& skel,
                  const std::string& output_dir);

}  // namespace wbmr
