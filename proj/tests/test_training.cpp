#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wbmr/geometry.hpp"
#include "wbmr/training.hpp"

using namespace wbmr;

namespace {

SkeletonModel test_skel() { return SkeletonModel::canonical(); }

// Row of the contact vector that tracks a given joint id.
int contact_row(int joint) {
  for (int c = 0; c < kNumContacts; ++c)
    if (kContactJoints[c] == joint) return c;
  REQUIRE(false);
  return -1;
}

std::string temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("wbmr_train_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.latent_dim = 32;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.window = 16.0;
  cfg.feature_dim = 32;
  cfg.kp_proj_dim = 16;
  cfg.param_seed = 7;
  return cfg;
}

CurriculumConfig tiny_curriculum() {
  CurriculumConfig c;
  c.stage_one_steps = 40;
  c.stage_two_steps = 20;
  c.warmup_steps = 5;
  c.batch_size = 1;
  c.window = 12;
  c.eval_every = 20;
  c.learning_rate = 2e-3;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("idle clips are perfectly static with every contact planted") {
  const SkeletonModel skel = test_skel();
  const SyntheticClip clip = generate_clip("idle", 42, 30);
  const WorldMotion& w = clip.world;
  REQUIRE(w.length() == 30);

  for (int t = 1; t < w.length(); ++t) {
    for (int j = 0; j < kNumJoints; ++j)
      CHECK((w.pose[t][j] - w.pose[0][j]).norm() == 0.0);
    CHECK((w.root[t].R - w.root[0].R).norm() == 0.0);
    CHECK((w.root[t].t - w.root[0].t).norm() == 0.0);
  }

  const GravityFrame gv = make_gravity_frame(clip.camera, Vec3(0, -1, 0));
  const MotionSequence states = derive_ground_truth_state(w, clip.camera, gv, skel);
  for (const MotionState& s : states.frames) {
    CHECK(s.root_velocity.norm() == 0.0);
    for (int c = 0; c < kNumContacts; ++c) CHECK(s.contacts[c] == 1.0);
  }
  CHECK(clip.category == ClipCategory::kBodyRich);
}

TEST_CASE("walking plants each stance foot with exactly zero world velocity") {
  const SkeletonModel skel = test_skel();
  const int T = 62;  // a bit over two gait cycles
  const SyntheticClip clip = generate_clip("walk", 3, T);
  const std::vector<MatX3> joints = [&] {
    std::vector<MatX3> out(T);
    for (int t = 0; t < T; ++t)
      out[t] = forward_kinematics(skel, clip.world.pose[t], clip.world.betas,
                                  clip.world.root[t]);
    return out;
  }();

  const GravityFrame gv = make_gravity_frame(clip.camera, Vec3(0, -1, 0));
  const MotionSequence states = derive_ground_truth_state(clip.world, clip.camera, gv, skel);

  const int la = contact_row(7), lf = contact_row(10);
  const int ra = contact_row(8), rf = contact_row(11);

  for (int cycle_start = 0; cycle_start + 28 <= T; cycle_start += 28) {
    // Left support: frames [c, c+8) are bitwise identical for the left
    // ankle and toe, so the seven transitions inside label contact 1.
    for (int k = 1; k < 8; ++k) {
      CHECK((joints[cycle_start + k].row(7) - joints[cycle_start].row(7)).norm() == 0.0);
      CHECK((joints[cycle_start + k].row(10) - joints[cycle_start].row(10)).norm() == 0.0);
    }
    for (int k = 0; k < 7; ++k) {
      CHECK(states.frames[cycle_start + k].contacts[la] == 1.0);
      CHECK(states.frames[cycle_start + k].contacts[lf] == 1.0);
      // The swinging right leg is airborne through the stance.
      CHECK(states.frames[cycle_start + 1 + k].contacts[ra] == 0.0);
    }
    // Right support: frames [c+14, c+22).
    for (int k = 1; k < 8; ++k) {
      CHECK((joints[cycle_start + 14 + k].row(8) - joints[cycle_start + 14].row(8)).norm() ==
            0.0);
      CHECK(
          (joints[cycle_start + 14 + k].row(11) - joints[cycle_start + 14].row(11)).norm() ==
          0.0);
    }
    for (int k = 0; k < 7; ++k) {
      CHECK(states.frames[cycle_start + 14 + k].contacts[ra] == 1.0);
      CHECK(states.frames[cycle_start + 14 + k].contacts[rf] == 1.0);
      CHECK(states.frames[cycle_start + 15 + k].contacts[la] == 0.0);
    }
    // Both glides move the root, so no foot is planted across them.
    for (int k = 8; k < 13; ++k) {
      CHECK(states.frames[cycle_start + k].contacts[la] == 0.0);
      CHECK(states.frames[cycle_start + k].contacts[ra] == 0.0);
    }
    // Root velocity is exactly zero on stance-interior transitions.
    for (int k = 0; k < 7; ++k)
      CHECK(states.frames[cycle_start + k].root_velocity.norm() == 0.0);
    CHECK(states.frames[cycle_start + 8].root_velocity.norm() > 0.0);
  }

  CHECK(clip.category == ClipCategory::kBodyRich);
  // The walk actually travels.
  CHECK((clip.world.root.back().t - clip.world.root.front().t).norm() > 0.2);
}

TEST_CASE("generation is deterministic and rejects unknown kinds") {
  for (const std::string& kind : clip_kinds()) {
    const SyntheticClip a = generate_clip(kind, 99, 35);
    const SyntheticClip b = generate_clip(kind, 99, 35);
    REQUIRE(a.world.length() == b.world.length());
    for (int t = 0; t < a.world.length(); ++t) {
      CHECK((a.world.root[t].t - b.world.root[t].t).norm() == 0.0);
      for (int j = 0; j < kNumJoints; ++j)
        CHECK((a.world.pose[t][j] - b.world.pose[t][j]).norm() == 0.0);
      CHECK((a.camera.frames[t].R - b.camera.frames[t].R).norm() == 0.0);
      CHECK((a.camera.frames[t].t - b.camera.frames[t].t).norm() == 0.0);
    }
    CHECK((a.world.betas - b.world.betas).norm() == 0.0);

    // A different seed moves at least the shape draw.
    const SyntheticClip c = generate_clip(kind, 100, 35);
    CHECK((a.world.betas - c.world.betas).norm() > 0.0);
  }
  CHECK_THROWS_AS(generate_clip("moonwalk", 1, 30), ConfigError);
  CHECK_THROWS_AS(generate_clip("walk", 1, 1), ConfigError);
}

TEST_CASE("camera orbit stays slow and the subject stays in front") {
  for (const std::string& kind : clip_kinds()) {
    const SyntheticClip clip = generate_clip(kind, 1234, 60);
    for (int t = 0; t < 59; ++t) {
      const Mat3 rel = clip.camera.frames[t + 1].R * clip.camera.frames[t].R.transpose();
      CHECK(logmap(rel).norm() <= 0.005 + 1e-12);
    }
    const SkeletonModel skel = test_skel();
    for (int t = 0; t < 60; ++t) {
      const Vec3 root_cam =
          clip.camera.frames[t].R * clip.world.root[t].t + clip.camera.frames[t].t;
      CHECK(root_cam.z() > 0.5);  // always in front of the camera
    }
  }
}

TEST_CASE("finger articulation energy separates hand-rich clips") {
  const SyntheticClip wiggle = generate_clip("finger-wiggle", 5, 40);
  CHECK(finger_articulation_energy(wiggle.world) > 10 * kHandRichEnergyThreshold);
  CHECK(wiggle.category == ClipCategory::kHandRich);

  for (const std::string& kind : {"walk", "wave", "reach", "idle"}) {
    const SyntheticClip clip = generate_clip(kind, 5, 40);
    CHECK(finger_articulation_energy(clip.world) == 0.0);
    CHECK(clip.category == ClipCategory::kBodyRich);
  }
}

TEST_CASE("dataset construction covers every kind each round") {
  const SkeletonModel skel = test_skel();
  const Dataset data = build_dataset(77, 2, 30, skel);
  REQUIRE(data.size() == 10);
  CHECK(data.count(ClipCategory::kHandRich) == 2);
  CHECK(data.count(ClipCategory::kBodyRich) == 8);
  for (const DatasetEntry& e : data.entries) {
    CHECK(e.states.length() == 30);
    CHECK(e.clean.length() == 30);
  }
  // Rounds draw distinct seeds: same kind, different shape.
  CHECK((data.entries[0].clip.world.betas - data.entries[5].clip.world.betas).norm() > 0.0);
}

TEST_CASE("stage-two sampling multiplies the hand-rich draw weight") {
  const SkeletonModel skel = test_skel();
  // Two hand-rich and two body-rich clips with multiplier 3: the hand-rich
  // fraction converges to 3/(3+1).
  Dataset data;
  for (uint64_t s = 0; s < 2; ++s) {
    DatasetEntry hand;
    hand.clip = generate_clip("finger-wiggle", s, 16);
    DatasetEntry body;
    body.clip = generate_clip("idle", s, 16);
    const GravityFrame gh = make_gravity_frame(hand.clip.camera, Vec3(0, -1, 0));
    hand.states = derive_ground_truth_state(hand.clip.world, hand.clip.camera, gh, skel);
    hand.clean = project_clean_keypoints(hand.clip.world, hand.clip.camera, skel);
    const GravityFrame gb = make_gravity_frame(body.clip.camera, Vec3(0, -1, 0));
    body.states = derive_ground_truth_state(body.clip.world, body.clip.camera, gb, skel);
    body.clean = project_clean_keypoints(body.clip.world, body.clip.camera, skel);
    data.entries.push_back(std::move(hand));
    data.entries.push_back(std::move(body));
  }

  CurriculumConfig curriculum = tiny_curriculum();
  curriculum.window = 8;
  curriculum.batch_size = 1;
  CloseupConfig closeup;
  closeup.mix_ratio = 0.0;  // isolate the clip draw
  NoiseConfig noise;

  Rng rng(123);
  int hand_draws = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    const auto batch = sample_batch(data, 2, curriculum, closeup, noise, skel, rng);
    if (data.entries[batch[0].clip_index].clip.category == ClipCategory::kHandRich)
      ++hand_draws;
  }
  const double fraction = double(hand_draws) / trials;
  CHECK(fraction > 0.72);
  CHECK(fraction < 0.78);

  // Stage one stays uniform under the same config.
  Rng rng2(123);
  int hand_uniform = 0;
  for (int i = 0; i < trials; ++i) {
    const auto batch = sample_batch(data, 1, curriculum, closeup, noise, skel, rng2);
    if (data.entries[batch[0].clip_index].clip.category == ClipCategory::kHandRich)
      ++hand_uniform;
  }
  const double uniform_fraction = double(hand_uniform) / trials;
  CHECK(uniform_fraction > 0.47);
  CHECK(uniform_fraction < 0.53);
}

TEST_CASE("batches reproduce bit-identically from the rng state") {
  const SkeletonModel skel = test_skel();
  const Dataset data = build_dataset(5, 1, 24, skel);
  CurriculumConfig curriculum = tiny_curriculum();
  curriculum.window = 10;
  curriculum.batch_size = 3;
  CloseupConfig closeup;  // default mix ratio keeps both view branches alive
  NoiseConfig noise;
  noise.kp_sigma = 2.0;

  Rng rng_a(999), rng_b(999);
  const auto a = sample_batch(data, 2, curriculum, closeup, noise, skel, rng_a);
  const auto b = sample_batch(data, 2, curriculum, closeup, noise, skel, rng_b);
  REQUIRE(a.size() == b.size());
  bool any_closeup = false, any_full = false;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].clip_index == b[i].clip_index);
    CHECK(a[i].offset == b[i].offset);
    CHECK(a[i].closeup == b[i].closeup);
    REQUIRE(a[i].obs.length() == curriculum.window);
    REQUIRE(a[i].target.length() == curriculum.window);
    for (int t = 0; t < curriculum.window; ++t) {
      CHECK((a[i].obs.frames[t].body.points - b[i].obs.frames[t].body.points).norm() == 0.0);
      CHECK((a[i].obs.frames[t].features - b[i].obs.frames[t].features).norm() == 0.0);
      CHECK((a[i].target.frames[t].root_velocity - b[i].target.frames[t].root_velocity)
                .norm() == 0.0);
    }
    any_closeup |= a[i].closeup;
    any_full |= !a[i].closeup;
    // The window really is a slice of the stored ground truth.
    const MotionSequence& full = data.entries[a[i].clip_index].states;
    const MotionState& first = a[i].target.frames[0];
    CHECK((first.root_velocity - full.frames[a[i].offset].root_velocity).norm() == 0.0);
  }
  CHECK(data.size() == 5);

  // A clip shorter than the window is rejected.
  CurriculumConfig too_long = curriculum;
  too_long.window = 100;
  Rng rng_c(1);
  CHECK_THROWS_AS(sample_batch(data, 1, too_long, closeup, noise, skel, rng_c), ConfigError);
}

TEST_CASE("curriculum validation rejects broken settings") {
  CurriculumConfig c = tiny_curriculum();
  CHECK_NOTHROW(c.validate());
  c.stage_one_steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_curriculum();
  c.window = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_curriculum();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_curriculum();
  c.hand_rich_multiplier = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_curriculum();
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_curriculum();
  c.loss_ema_alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_curriculum();
  c.loss_ema_alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("a short curriculum run learns, logs and stays reproducible") {
  const SkeletonModel skel = test_skel();
  const Dataset train_set = build_dataset(21, 1, 24, skel);
  const Dataset held_out = build_dataset(22, 1, 24, skel);
  const CurriculumConfig curriculum = tiny_curriculum();
  CloseupConfig closeup;
  NoiseConfig noise;

  const std::string dir_a = temp_dir("a");
  WholeBodyModel model_a{tiny_model_config()};
  const size_t params_before = model_a.params().total_size();
  const TrainResult res_a =
      train(model_a, train_set, held_out, curriculum, closeup, noise, skel, dir_a);

  // The loss moved downward through stage one and kept descending after
  // the stage-two objective switch. (Long-horizon convergence is covered
  // by the acceptance suite.)
  REQUIRE(res_a.ema_history.size() == 60);
  CHECK(res_a.ema_history[39] < 0.9 * res_a.step10_ema);
  CHECK(res_a.final_ema < res_a.ema_history[39]);
  CHECK(res_a.final_ema > 0.0);

  // The parameter set is frozen in shape: training adds nothing.
  CHECK(model_a.params().total_size() == params_before);

  // Per-step JSONL with full provenance and no wall-clock fields.
  std::ifstream log(res_a.log_path);
  REQUIRE(log.good());
  std::string line;
  int steps_logged = 0, evals_logged = 0;
  while (std::getline(log, line)) {
    CHECK(line.find("time") == std::string::npos);
    if (line.find("\"eval\"") != std::string::npos) {
      ++evals_logged;
      continue;
    }
    ++steps_logged;
    CHECK(line.find("\"step\"") != std::string::npos);
    CHECK(line.find("\"stage\"") != std::string::npos);
    CHECK(line.find("\"lr\"") != std::string::npos);
    CHECK(line.find("\"terms\"") != std::string::npos);
    CHECK(line.find("\"batch\"") != std::string::npos);
  }
  CHECK(steps_logged == 60);
  CHECK(evals_logged >= 3);  // periodic + both stage ends

  // Both stage boundaries produced snapshots.
  CHECK(res_a.end_of_stage_one.step == 40);
  CHECK(res_a.end_of_stage_two.step == 60);
  CHECK(res_a.end_of_stage_one.stage == 1);
  CHECK(res_a.end_of_stage_two.stage == 2);
  CHECK(res_a.evals.size() >= 3);

  // Identical seeds give bit-identical checkpoints.
  const std::string dir_b = temp_dir("b");
  WholeBodyModel model_b{tiny_model_config()};
  const TrainResult res_b =
      train(model_b, train_set, held_out, curriculum, closeup, noise, skel, dir_b);
  CHECK(file_bytes(res_a.checkpoint_path) == file_bytes(res_b.checkpoint_path));
  CHECK(file_bytes(res_a.log_path) == file_bytes(res_b.log_path));
  REQUIRE(res_b.ema_history.size() == res_a.ema_history.size());
  for (size_t i = 0; i < res_a.ema_history.size(); ++i)
    CHECK(res_a.ema_history[i] == res_b.ema_history[i]);

  // A different seed changes the trajectory.
  CurriculumConfig other = curriculum;
  other.seed = 12;
  const std::string dir_c = temp_dir("c");
  WholeBodyModel model_c{tiny_model_config()};
  const TrainResult res_c =
      train(model_c, train_set, held_out, other, closeup, noise, skel, dir_c);
  CHECK(res_c.final_ema != res_a.final_ema);

  // Mismatched observation width is rejected up front.
  NoiseConfig wrong = noise;
  wrong.feature_dim = 16;
  WholeBodyModel model_d{tiny_model_config()};
  const std::string dir_d = temp_dir("d");
  CHECK_THROWS_AS(train(model_d, train_set, held_out, curriculum, closeup, wrong, skel, dir_d),
                  ConfigError);
}

TEST_CASE("training rejects an empty dataset") {
  const SkeletonModel skel = test_skel();
  Dataset empty;
  WholeBodyModel model{tiny_model_config()};
  CloseupConfig closeup;
  NoiseConfig noise;
  CHECK_THROWS_AS(
      train(model, empty, empty, tiny_curriculum(), closeup, noise, skel, temp_dir("e")),
      ConfigError);
}
