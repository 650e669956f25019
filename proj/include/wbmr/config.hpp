#pragma once

#include <string>
#include <vector>

#include "wbmr/augmentation.hpp"
#include "wbmr/model.hpp"
#include "wbmr/observations.hpp"
#include "wbmr/refinement.hpp"
#include "wbmr/training.hpp"

namespace wbmr {

// ── run configuration ──────────────────────────────────────────────────────
//
// One hierarchical configuration drives every pipeline command. It loads
// from a JSON file, and any leaf can be overridden with a dotted key path
// ("curriculum.batch_size", "paths.output_dir", ...). Unknown keys are
// rejected with their full path so typos cannot silently fall back to
// defaults.

struct PathsConfig {
  std::string skeleton;         // empty selects the built-in canonical skeleton
  std::string dataset_dir = "out/dataset";
  std::string output_dir = "out";
  std::string checkpoint;       // read by eval/refine-style flows when set
  std::string pred;             // predicted motion file (eval)
  std::string gt;               // ground-truth motion file (eval)
  std::string motion;           // input motion file (refine)
};

struct GenerationConfig {
  int rounds = 2;    // clip rounds; each round emits one clip per kind
  int length = 150;  // frames per clip
};

struct RunConfig {
  PathsConfig paths;
  GenerationConfig gen;
  ModelConfig model;
  CurriculumConfig curriculum;
  RefinementConfig refinement;
  NoiseConfig noise;
  CloseupConfig closeup;
  uint64_t seed = 1;
  bool deterministic = true;
  int threads = 1;

  void validate() const;  // throws ConfigError with key paths

  // Apply one "key.path=value" or ("key.path", "value") override. Values
  // parse as JSON scalars, falling back to plain strings.
  void apply_override(const std::string& dotted_key, const std::string& value);

  std::string to_json_string() const;

  static RunConfig from_json_string(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  // All dotted leaf keys with their current values rendered as strings —
  // the flag surface of the CLI.
  std::vector<std::pair<std::string, std::string>> flat_keys() const;
};

// Resolve the skeleton referenced by the config (built-in when unset).
SkeletonModel load_skeleton(const RunConfig& config);

}  // namespace wbmr
