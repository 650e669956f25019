#pragma once

#include <string>
#include <vector>

#include "wbmr/config.hpp"
#include "wbmr/metrics.hpp"
#include "wbmr/refinement.hpp"
#include "wbmr/training.hpp"

namespace wbmr {

// ── pipeline commands ──────────────────────────────────────────────────────
//
// One function per CLI subcommand. Every command reads its inputs, writes
// its artifacts under the configured output locations and returns a small
// report struct; none of them mutates an input file. Given the same config
// and seed they produce byte-identical artifacts, and no written artifact
// embeds an absolute path or a timestamp, so whole output trees can be
// compared bitwise.

// Dataset bundle: one synthetic clip (world motion + camera + provenance)
// as a JSON file. Rotations with bounded angles are stored as rotation
// vectors; root and camera rotations are stored as full matrices.
void save_clip_bundle(const SyntheticClip& clip, const std::string& path);
SyntheticClip load_clip_bundle(const std::string& path);

struct GenReport {
  int clips = 0;
  int frames = 0;  // total across clips
  std::vector<std::string> clip_ids;
  std::string manifest_path;
};

// Generates the procedural dataset into paths.dataset_dir: per clip a
// bundle file, the derived ground-truth state sequence, and synthesized
// full-body-view observations; plus a manifest listing them all.
GenReport cmd_gen(const RunConfig& config);

struct AugmentReport {
  int records = 0;
  std::string manifest_path;
};

// Samples one close-up view per generated clip and writes the augmentation
// manifest (crop windows, per-frame hand visibility) to the output dir.
AugmentReport cmd_augment(const RunConfig& config);

struct TrainCommandReport {
  TrainResult result;
  std::string report_path;
};

// Trains the two-stage curriculum on the generated dataset; held-out clips
// are regenerated from a seed variant. Writes the checkpoint, the step log
// and a numeric summary into paths.output_dir.
TrainCommandReport cmd_train(const RunConfig& config);

struct EvalCommandReport {
  MetricsReport metrics;
  std::string json_path;
  std::string csv_path;
};

// Evaluates a predicted motion file against a ground-truth motion file and
// writes metrics.json / metrics.csv. Empty path arguments fall back to
// paths.pred / paths.gt.
EvalCommandReport cmd_eval(const RunConfig& config, const std::string& pred_path,
                           const std::string& gt_path);

struct RefineCommandReport {
  FootSliding before;
  FootSliding after;
  double reduction_percent = 0.0;  // valid when both measurements are defined
  int iterations = 0;
  bool objective_monotone = false;
  std::string motion_path;  // the refined motion file
  std::string report_path;
};

// Refines the root trajectory of a motion file and writes the refined
// motion plus a before/after foot-sliding report. An empty path argument
// falls back to paths.motion.
RefineCommandReport cmd_refine(const RunConfig& config, const std::string& motion_path);

struct DemoReport {
  GenReport gen;
  TrainCommandReport train;
  EvalCommandReport eval;
  RefineCommandReport refine;
  std::string summary;  // the printed table
  std::string summary_path;
};

// End-to-end miniature pipeline under paths.output_dir: generate a small
// dataset, train a scaled-down model on it, evaluate a prediction on a
// held-out clip, refine a drift-injected copy of the walk clip, and write
// summary.txt with one table row per stage. Fully reproducible from the
// seed; repeated runs produce bit-identical artifacts.
DemoReport cmd_demo(const RunConfig& config);

}  // namespace wbmr
