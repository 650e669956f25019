#include "wbmr/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wbmr/errors.hpp"
#include "wbmr/geometry.hpp"

namespace wbmr {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ── small file helpers ──────────────────────────────────────────────────────

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("pipeline: cannot write " + path);
  out << text;
  if (!out) throw IoError("pipeline: failed writing " + path);
}

ordered_json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pipeline: cannot open " + path);
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("pipeline: invalid JSON in " + path + ": " + e.what());
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("pipeline: cannot create directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// ── JSON shims for the math types ──────────────────────────────────────────

ordered_json dump_vec3(const Vec3& v) { return ordered_json{v.x(), v.y(), v.z()}; }

Vec3 parse_vec3(const ordered_json& j) {
  if (!j.is_array() || j.size() != 3) throw IoError("pipeline: expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

ordered_json dump_mat3(const Mat3& m) {
  ordered_json j = ordered_json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j.push_back(m(r, c));
  return j;
}

Mat3 parse_mat3(const ordered_json& j) {
  if (!j.is_array() || j.size() != 9) throw IoError("pipeline: expected a 3x3 matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j[3 * r + c].get<double>();
  return m;
}

ordered_json dump_vecx(const VecX& v) {
  ordered_json j = ordered_json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

VecX parse_vecx(const ordered_json& j) {
  if (!j.is_array()) throw IoError("pipeline: expected a numeric array");
  VecX v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

std::string category_name(ClipCategory c) {
  return c == ClipCategory::kHandRich ? "hand-rich" : "body-rich";
}

ClipCategory parse_category(const std::string& name) {
  if (name == "hand-rich") return ClipCategory::kHandRich;
  if (name == "body-rich") return ClipCategory::kBodyRich;
  throw IoError("pipeline: unknown clip category '" + name + "'");
}

// Deterministic fixed-point rendering for the summary table.
std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// ── seeds ───────────────────────────────────────────────────────────────────
//
// Every command derives its entropy from the one global seed through fixed
// stream labels, so no two pipeline stages share a stream.

constexpr uint64_t kStreamObservations = 0x0b5e0000;  // + clip index
constexpr uint64_t kStreamAugment = 0xc4090000;       // + clip index
constexpr uint64_t kStreamHeldOut = 0x0e7a0001;
constexpr uint64_t kStreamDemoEval = 0xdea10001;
constexpr uint64_t kStreamDemoEvalObs = 0xdeaf0001;
constexpr uint64_t kStreamDemoModel = 0x30de0001;

}  // namespace

// ── clip bundles ────────────────────────────────────────────────────────────

void save_clip_bundle(const SyntheticClip& clip, const std::string& path) {
  const WorldMotion& w = clip.world;
  ordered_json j;
  j["kind"] = clip.kind;
  j["category"] = category_name(clip.category);
  j["seed"] = clip.seed;
  j["fps"] = w.fps;
  j["betas"] = dump_vecx(w.betas);
  ordered_json cam;
  cam["K"] = {{"fx", clip.camera.K.fx},        {"fy", clip.camera.K.fy},
              {"cx", clip.camera.K.cx},        {"cy", clip.camera.K.cy},
              {"width", clip.camera.K.width},  {"height", clip.camera.K.height}};
  ordered_json cam_frames = ordered_json::array();
  for (const CameraPose& p : clip.camera.frames)
    cam_frames.push_back({{"R", dump_mat3(p.R)}, {"t", dump_vec3(p.t)}});
  cam["frames"] = std::move(cam_frames);
  j["camera"] = std::move(cam);
  ordered_json roots = ordered_json::array();
  for (const RootTransform& r : w.root)
    roots.push_back({{"R", dump_mat3(r.R)}, {"t", dump_vec3(r.t)}});
  j["root"] = std::move(roots);
  // Local joint rotations as rotation vectors: every generator composes
  // bounded-angle rotations, so the log map is well inside its injective
  // range.
  ordered_json pose = ordered_json::array();
  for (const auto& frame : w.pose) {
    ordered_json row = ordered_json::array();
    for (const Mat3& R : frame) {
      const Vec3 aa = logmap(R);
      row.push_back({aa.x(), aa.y(), aa.z()});
    }
    pose.push_back(std::move(row));
  }
  j["pose"] = std::move(pose);
  write_text(path, j.dump() + "\n");
}

SyntheticClip load_clip_bundle(const std::string& path) {
  ordered_json j = read_json(path);
  SyntheticClip clip;
  try {
    clip.kind = j.at("kind").get<std::string>();
    clip.category = parse_category(j.at("category").get<std::string>());
    clip.seed = j.at("seed").get<uint64_t>();
    clip.world.fps = j.at("fps").get<double>();
    clip.world.betas = parse_vecx(j.at("betas"));
    const auto& cam = j.at("camera");
    const auto& K = cam.at("K");
    clip.camera.K.fx = K.at("fx").get<double>();
    clip.camera.K.fy = K.at("fy").get<double>();
    clip.camera.K.cx = K.at("cx").get<double>();
    clip.camera.K.cy = K.at("cy").get<double>();
    clip.camera.K.width = K.at("width").get<int>();
    clip.camera.K.height = K.at("height").get<int>();
    for (const auto& f : cam.at("frames"))
      clip.camera.frames.push_back({parse_mat3(f.at("R")), parse_vec3(f.at("t"))});
    for (const auto& r : j.at("root"))
      clip.world.root.push_back({parse_mat3(r.at("R")), parse_vec3(r.at("t"))});
    for (const auto& frame : j.at("pose")) {
      if (!frame.is_array() || frame.size() != kNumJoints)
        throw IoError("pipeline: bundle pose row has the wrong joint count");
      std::array<Mat3, kNumJoints> row;
      for (int k = 0; k < kNumJoints; ++k) row[k] = expmap(parse_vec3(frame[k]));
      clip.world.pose.push_back(row);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("pipeline: malformed bundle " + path + ": " + e.what());
  }
  if (clip.world.root.size() != clip.world.pose.size() ||
      clip.camera.frames.size() != clip.world.pose.size())
    throw IoError("pipeline: bundle " + path + " has inconsistent frame counts");
  return clip;
}

// ── gen ─────────────────────────────────────────────────────────────────────

GenReport cmd_gen(const RunConfig& config) {
  config.validate();
  const SkeletonModel skel = load_skeleton(config);
  const Dataset data = build_dataset(config.seed, config.gen.rounds, config.gen.length, skel);
  ensure_dir(config.paths.dataset_dir);

  GenReport report;
  ordered_json manifest;
  manifest["seed"] = config.seed;
  manifest["rounds"] = config.gen.rounds;
  manifest["length"] = config.gen.length;
  ordered_json clips = ordered_json::array();
  for (int i = 0; i < data.size(); ++i) {
    const DatasetEntry& entry = data.entries[i];
    char id[64];
    std::snprintf(id, sizeof(id), "clip_%02d_%s", i, entry.clip.kind.c_str());
    const std::string bundle_file = std::string(id) + ".bundle.json";
    const std::string states_file = std::string(id) + ".states.json";
    const std::string obs_file = std::string(id) + ".obs.json";

    save_clip_bundle(entry.clip, join(config.paths.dataset_dir, bundle_file));
    save_motion(entry.states, join(config.paths.dataset_dir, states_file));

    const CropSpec view = full_body_crop(entry.clip.camera.K.width,
                                         entry.clip.camera.K.height, entry.clean,
                                         config.closeup);
    const ObservationClip obs = synthesize_observations(
        entry.clip.world, entry.clip.camera, skel, view, config.closeup, config.noise,
        Rng::derive_seed(config.seed, kStreamObservations + static_cast<uint64_t>(i)));
    save_observations(obs, join(config.paths.dataset_dir, obs_file));

    clips.push_back({{"id", id},
                     {"kind", entry.clip.kind},
                     {"category", category_name(entry.clip.category)},
                     {"length", entry.clip.world.length()},
                     {"bundle", bundle_file},
                     {"states", states_file},
                     {"observations", obs_file}});
    report.clip_ids.push_back(id);
    report.frames += entry.clip.world.length();
  }
  manifest["clips"] = std::move(clips);
  report.clips = data.size();
  report.manifest_path = join(config.paths.dataset_dir, "manifest.json");
  write_text(report.manifest_path, manifest.dump(2) + "\n");
  return report;
}

// ── shared dataset loading ──────────────────────────────────────────────────

namespace {

Dataset load_dataset(const std::string& dataset_dir, const SkeletonModel& skel,
                     bool with_states) {
  const ordered_json manifest = read_json(join(dataset_dir, "manifest.json"));
  if (!manifest.contains("clips") || !manifest["clips"].is_array())
    throw IoError("pipeline: manifest in " + dataset_dir + " lists no clips");
  Dataset data;
  for (const auto& c : manifest["clips"]) {
    DatasetEntry entry;
    entry.clip = load_clip_bundle(join(dataset_dir, c.at("bundle").get<std::string>()));
    if (with_states)
      entry.states = load_motion(join(dataset_dir, c.at("states").get<std::string>()));
    entry.clean = project_clean_keypoints(entry.clip.world, entry.clip.camera, skel);
    data.entries.push_back(std::move(entry));
  }
  return data;
}

}  // namespace

// ── augment ─────────────────────────────────────────────────────────────────

AugmentReport cmd_augment(const RunConfig& config) {
  config.validate();
  const SkeletonModel skel = load_skeleton(config);
  const ordered_json manifest = read_json(join(config.paths.dataset_dir, "manifest.json"));
  if (!manifest.contains("clips") || !manifest["clips"].is_array())
    throw IoError("pipeline: manifest lists no clips");

  std::vector<AugmentationRecord> records;
  int index = 0;
  for (const auto& c : manifest["clips"]) {
    const std::string id = c.at("id").get<std::string>();
    const SyntheticClip clip =
        load_clip_bundle(join(config.paths.dataset_dir, c.at("bundle").get<std::string>()));
    const ClipKeypoints clean = project_clean_keypoints(clip.world, clip.camera, skel);
    Rng rng(Rng::derive_seed(config.seed, kStreamAugment + static_cast<uint64_t>(index)));
    records.push_back({id, synthesize_closeup(clean, config.closeup, rng)});
    ++index;
  }
  ensure_dir(config.paths.output_dir);
  AugmentReport report;
  report.records = static_cast<int>(records.size());
  report.manifest_path = join(config.paths.output_dir, "augmentations.json");
  save_augmentation_manifest(records, report.manifest_path);
  return report;
}

// ── train ───────────────────────────────────────────────────────────────────

TrainCommandReport cmd_train(const RunConfig& config) {
  config.validate();
  const SkeletonModel skel = load_skeleton(config);
  const Dataset train_set = load_dataset(config.paths.dataset_dir, skel, true);
  const Dataset held_out = build_dataset(Rng::derive_seed(config.seed, kStreamHeldOut), 1,
                                         config.gen.length, skel);

  CurriculumConfig curriculum = config.curriculum;
  curriculum.seed = config.seed;
  WholeBodyModel model(config.model);
  const TrainResult result = train(model, train_set, held_out, curriculum, config.closeup,
                                   config.noise, skel, config.paths.output_dir);

  auto snapshot = [](const EvalSnapshot& s) {
    return ordered_json{{"step", s.step},
                        {"stage", s.stage},
                        {"total_loss", s.total_loss},
                        {"hand_term", s.hand_term},
                        {"hand_pa_mpjpe_mm", s.hand_pa_mpjpe}};
  };
  ordered_json j;
  j["steps"] = curriculum.stage_one_steps + curriculum.stage_two_steps;
  j["step10_ema"] = result.step10_ema;
  j["final_ema"] = result.final_ema;
  j["final_over_step10"] =
      result.step10_ema > 0 ? result.final_ema / result.step10_ema : 0.0;
  j["end_of_stage_one"] = snapshot(result.end_of_stage_one);
  j["end_of_stage_two"] = snapshot(result.end_of_stage_two);

  TrainCommandReport report;
  report.result = result;
  report.report_path = join(config.paths.output_dir, "train_report.json");
  write_text(report.report_path, j.dump(2) + "\n");
  return report;
}

// ── eval ────────────────────────────────────────────────────────────────────

EvalCommandReport cmd_eval(const RunConfig& config, const std::string& pred_path,
                           const std::string& gt_path) {
  config.validate();
  const std::string pred_file = pred_path.empty() ? config.paths.pred : pred_path;
  const std::string gt_file = gt_path.empty() ? config.paths.gt : gt_path;
  if (pred_file.empty())
    throw ConfigError("eval: a predicted motion file is required ('paths.pred')");
  if (gt_file.empty())
    throw ConfigError("eval: a ground-truth motion file is required ('paths.gt')");

  const SkeletonModel skel = load_skeleton(config);
  const MotionSequence pred = load_motion(pred_file);
  const MotionSequence gt = load_motion(gt_file);
  const MetricsReport metrics = evaluate_motion(pred, gt, skel);

  ensure_dir(config.paths.output_dir);
  EvalCommandReport report;
  report.metrics = metrics;
  report.json_path = join(config.paths.output_dir, "metrics.json");
  report.csv_path = join(config.paths.output_dir, "metrics.csv");
  write_text(report.json_path, metrics.to_json_string() + "\n");
  const std::string clip_id = fs::path(pred_file).stem().string();
  write_text(report.csv_path,
             MetricsReport::csv_header() + "\n" + metrics.csv_row(clip_id) + "\n");
  return report;
}

// ── refine ──────────────────────────────────────────────────────────────────

RefineCommandReport cmd_refine(const RunConfig& config, const std::string& motion_path) {
  config.validate();
  const std::string motion_file = motion_path.empty() ? config.paths.motion : motion_path;
  if (motion_file.empty())
    throw ConfigError("refine: an input motion file is required ('paths.motion')");

  const SkeletonModel skel = load_skeleton(config);
  const MotionSequence states = load_motion(motion_file);
  const double threshold = config.refinement.contact_threshold;

  RefineCommandReport report;
  report.before = foot_sliding(states, skel, threshold);
  const RefinementResult result = refine_trajectory(states, skel, config.refinement);
  report.after = foot_sliding(result.refined, skel, threshold);
  report.iterations = result.iterations;
  // Same tolerance the solver enforces: increases at rounding level do not
  // count against monotonicity.
  report.objective_monotone = true;
  for (size_t i = 1; i < result.objective_history.size(); ++i) {
    const double prev = result.objective_history[i - 1];
    if (result.objective_history[i] > prev + 1e-9 * (1.0 + std::abs(prev)))
      report.objective_monotone = false;
  }
  if (report.before.defined && report.after.defined && report.before.mm_per_frame > 0)
    report.reduction_percent =
        100.0 * (1.0 - report.after.mm_per_frame / report.before.mm_per_frame);

  ensure_dir(config.paths.output_dir);
  report.motion_path = join(config.paths.output_dir, "refined_motion.json");
  save_motion(result.refined, report.motion_path);

  auto sliding = [](const FootSliding& s) {
    return ordered_json{{"defined", s.defined},
                        {"mm_per_frame", s.mm_per_frame},
                        {"transitions", s.transitions}};
  };
  ordered_json j;
  j["before"] = sliding(report.before);
  j["after"] = sliding(report.after);
  j["reduction_percent"] = report.reduction_percent;
  j["iterations"] = report.iterations;
  j["objective_initial"] =
      result.objective_history.empty() ? 0.0 : result.objective_history.front();
  j["objective_final"] =
      result.objective_history.empty() ? 0.0 : result.objective_history.back();
  j["objective_monotone"] = report.objective_monotone;
  report.report_path = join(config.paths.output_dir, "sliding_report.json");
  write_text(report.report_path, j.dump(2) + "\n");
  return report;
}

// ── demo ────────────────────────────────────────────────────────────────────

namespace {

// The demo exercises the whole pipeline at a scale that finishes in
// seconds: one round of short clips and a small model trained briefly.
RunConfig demo_profile(const RunConfig& base) {
  RunConfig c = base;
  c.gen.rounds = 1;
  c.gen.length = 32;
  c.model.latent_dim = 32;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.window = 16.0;
  c.model.kp_proj_dim = 16;
  c.model.param_seed = Rng::derive_seed(base.seed, kStreamDemoModel);
  c.curriculum.stage_one_steps = 60;
  c.curriculum.stage_two_steps = 30;
  c.curriculum.warmup_steps = 10;
  c.curriculum.batch_size = 1;
  c.curriculum.window = 24;
  c.curriculum.eval_every = 30;
  c.curriculum.learning_rate = 2e-3;
  return c;
}

}  // namespace

DemoReport cmd_demo(const RunConfig& base) {
  base.validate();
  RunConfig config = demo_profile(base);
  const std::string out = config.paths.output_dir;
  ensure_dir(out);
  const SkeletonModel skel = load_skeleton(config);

  DemoReport demo;

  // 1. generate the dataset
  config.paths.dataset_dir = join(out, "dataset");
  demo.gen = cmd_gen(config);

  // 2. train the scaled-down model
  RunConfig train_cfg = config;
  train_cfg.paths.output_dir = join(out, "train");
  demo.train = cmd_train(train_cfg);

  // 3. evaluate a prediction on one held-out clip
  WholeBodyModel model = WholeBodyModel::load_checkpoint(demo.train.result.checkpoint_path);
  const Dataset eval_set = build_dataset(Rng::derive_seed(config.seed, kStreamDemoEval), 1,
                                         config.gen.length, skel);
  const DatasetEntry& eval_clip = eval_set.entries.front();
  const CropSpec eval_view =
      full_body_crop(eval_clip.clip.camera.K.width, eval_clip.clip.camera.K.height,
                     eval_clip.clean, config.closeup);
  const ObservationClip eval_obs = synthesize_observations(
      eval_clip.clip.world, eval_clip.clip.camera, skel, eval_view, config.closeup,
      config.noise, Rng::derive_seed(config.seed, kStreamDemoEvalObs));
  ModelOutput eval_out = model.forward(eval_obs);
  MotionSequence pred;
  pred.fps = eval_clip.states.fps;
  pred.betas = eval_out.beta_avg;
  pred.frames = eval_out.states();

  RunConfig eval_cfg = config;
  eval_cfg.paths.output_dir = join(out, "eval");
  ensure_dir(eval_cfg.paths.output_dir);
  const std::string pred_path = join(eval_cfg.paths.output_dir, "pred.motion.json");
  const std::string gt_path = join(eval_cfg.paths.output_dir, "gt.motion.json");
  save_motion(pred, pred_path);
  save_motion(eval_clip.states, gt_path);
  demo.eval = cmd_eval(eval_cfg, pred_path, gt_path);

  // 4. refine a drift-injected copy of the generated walk clip
  RunConfig refine_cfg = config;
  refine_cfg.paths.output_dir = join(out, "refine");
  ensure_dir(refine_cfg.paths.output_dir);
  std::string walk_states_file;
  for (size_t i = 0; i < demo.gen.clip_ids.size(); ++i)
    if (demo.gen.clip_ids[i].find("walk") != std::string::npos)
      walk_states_file = join(config.paths.dataset_dir, demo.gen.clip_ids[i] + ".states.json");
  if (walk_states_file.empty()) throw IoError("demo: generated dataset has no walk clip");
  MotionSequence drift = load_motion(walk_states_file);
  const std::vector<RootTransform> roots = canonical_roots(drift);
  const Vec3 drift_step(0.004, 0.0, 0.0025);  // meters per frame, world frame
  for (int t = 0; t < drift.length(); ++t)
    drift.frames[t].root_velocity += roots[t].R.transpose() * drift_step;
  const std::string drift_path = join(refine_cfg.paths.output_dir, "drift_input.json");
  save_motion(drift, drift_path);
  demo.refine = cmd_refine(refine_cfg, drift_path);

  // 5. summary table
  std::ostringstream table;
  auto row = [&table](const std::string& stage, const std::string& what,
                      const std::string& value) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-8s  %-34s  %s\n", stage.c_str(), what.c_str(),
                  value.c_str());
    table << line;
  };
  table << "pipeline demo summary\n";
  table << "=====================\n\n";
  row("stage", "quantity", "value");
  row("------", "--------", "-----");
  row("gen", "clips", std::to_string(demo.gen.clips));
  row("gen", "frames", std::to_string(demo.gen.frames));
  const TrainResult& tr = demo.train.result;
  row("train", "steps",
      std::to_string(config.curriculum.stage_one_steps + config.curriculum.stage_two_steps));
  row("train", "step-10 smoothed loss", fmt(tr.step10_ema));
  row("train", "final smoothed loss", fmt(tr.final_ema));
  row("train", "final / step-10",
      fmt(tr.step10_ema > 0 ? tr.final_ema / tr.step10_ema : 0.0));
  row("train", "held-out hand error, stage 1 (mm)", fmt(tr.end_of_stage_one.hand_pa_mpjpe));
  row("train", "held-out hand error, stage 2 (mm)", fmt(tr.end_of_stage_two.hand_pa_mpjpe));
  const MetricsReport& ev = demo.eval.metrics;
  row("eval", "PA-MPJPE all joints (mm)", fmt(ev.all.pa_mpjpe));
  row("eval", "PA-MPJPE hands (mm)", fmt(ev.hands.pa_mpjpe));
  row("eval", "PVE (mm)", fmt(ev.all.pve));
  row("eval", "jitter (m/s^3)", fmt(ev.jitter));
  row("refine", "sliding before (mm/frame)", fmt(demo.refine.before.mm_per_frame));
  row("refine", "sliding after (mm/frame)", fmt(demo.refine.after.mm_per_frame));
  row("refine", "reduction (%)", fmt(demo.refine.reduction_percent, 1));
  row("refine", "iterations", std::to_string(demo.refine.iterations));
  row("refine", "objective monotone", demo.refine.objective_monotone ? "yes" : "no");

  demo.summary = table.str();
  demo.summary_path = join(out, "summary.txt");
  write_text(demo.summary_path, demo.summary);
  return demo;
}

}  // namespace wbmr
