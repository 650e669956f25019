#include "wbmr/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wbmr/errors.hpp"

namespace wbmr {
namespace {

using ordered_json = nlohmann::ordered_json;

// ── schema ─────────────────────────────────────────────────────────────────
//
// The JSON tree mirrors the config structs exactly; conversion goes through
// these two functions so the file format and the structs cannot drift.

ordered_json to_tree(const RunConfig& c) {
  ordered_json j;
  j["paths"] = {{"skeleton", c.paths.skeleton},
                {"dataset_dir", c.paths.dataset_dir},
                {"output_dir", c.paths.output_dir},
                {"checkpoint", c.paths.checkpoint},
                {"pred", c.paths.pred},
                {"gt", c.paths.gt},
                {"motion", c.paths.motion}};
  j["gen"] = {{"rounds", c.gen.rounds}, {"length", c.gen.length}};
  j["model"] = {{"latent_dim", c.model.latent_dim},
                {"layers", c.model.layers},
                {"heads", c.model.heads},
                {"window", c.model.window},
                {"feature_dim", c.model.feature_dim},
                {"kp_proj_dim", c.model.kp_proj_dim},
                {"param_seed", c.model.param_seed}};
  j["curriculum"] = {{"stage_one_steps", c.curriculum.stage_one_steps},
                     {"stage_two_steps", c.curriculum.stage_two_steps},
                     {"hand_rich_multiplier", c.curriculum.hand_rich_multiplier},
                     {"learning_rate", c.curriculum.learning_rate},
                     {"warmup_steps", c.curriculum.warmup_steps},
                     {"batch_size", c.curriculum.batch_size},
                     {"window", c.curriculum.window},
                     {"eval_every", c.curriculum.eval_every},
                     {"loss_ema_alpha", c.curriculum.loss_ema_alpha}};
  j["refinement"] = {{"contact_threshold", c.refinement.contact_threshold},
                     {"lambda_data", c.refinement.lambda_data},
                     {"lambda_contact", c.refinement.lambda_contact},
                     {"lambda_smooth", c.refinement.lambda_smooth},
                     {"max_iterations", c.refinement.max_iterations},
                     {"tolerance", c.refinement.tolerance}};
  j["noise"] = {{"kp_sigma", c.noise.kp_sigma},
                {"conf_sigma", c.noise.conf_sigma},
                {"feature_sigma", c.noise.feature_sigma},
                {"feature_dim", c.noise.feature_dim},
                {"feature_seed", c.noise.feature_seed}};
  j["closeup"] = {{"ratio_split", c.closeup.ratio_split},
                  {"margin_frac", c.closeup.margin_frac},
                  {"scale_min", c.closeup.scale_min},
                  {"scale_max", c.closeup.scale_max},
                  {"translate_frac", c.closeup.translate_frac},
                  {"blur_ratio", c.closeup.blur_ratio},
                  {"network_side", c.closeup.network_side},
                  {"mix_ratio", c.closeup.mix_ratio},
                  {"min_hand_keypoints", c.closeup.min_hand_keypoints},
                  {"min_hand_box_px", c.closeup.min_hand_box_px},
                  {"box_padding", c.closeup.box_padding}};
  j["seed"] = c.seed;
  j["deterministic"] = c.deterministic;
  j["threads"] = c.threads;
  return j;
}

template <typename T>
T field(const ordered_json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

RunConfig from_tree(const ordered_json& j) {
  RunConfig c;
  const auto& p = j.at("paths");
  c.paths.skeleton = field<std::string>(p, "skeleton");
  c.paths.dataset_dir = field<std::string>(p, "dataset_dir");
  c.paths.output_dir = field<std::string>(p, "output_dir");
  c.paths.checkpoint = field<std::string>(p, "checkpoint");
  c.paths.pred = field<std::string>(p, "pred");
  c.paths.gt = field<std::string>(p, "gt");
  c.paths.motion = field<std::string>(p, "motion");
  const auto& g = j.at("gen");
  c.gen.rounds = field<int>(g, "rounds");
  c.gen.length = field<int>(g, "length");
  const auto& m = j.at("model");
  c.model.latent_dim = field<int>(m, "latent_dim");
  c.model.layers = field<int>(m, "layers");
  c.model.heads = field<int>(m, "heads");
  c.model.window = field<double>(m, "window");
  c.model.feature_dim = field<int>(m, "feature_dim");
  c.model.kp_proj_dim = field<int>(m, "kp_proj_dim");
  c.model.param_seed = field<uint64_t>(m, "param_seed");
  const auto& cu = j.at("curriculum");
  c.curriculum.stage_one_steps = field<int>(cu, "stage_one_steps");
  c.curriculum.stage_two_steps = field<int>(cu, "stage_two_steps");
  c.curriculum.hand_rich_multiplier = field<double>(cu, "hand_rich_multiplier");
  c.curriculum.learning_rate = field<double>(cu, "learning_rate");
  c.curriculum.warmup_steps = field<int>(cu, "warmup_steps");
  c.curriculum.batch_size = field<int>(cu, "batch_size");
  c.curriculum.window = field<int>(cu, "window");
  c.curriculum.eval_every = field<int>(cu, "eval_every");
  c.curriculum.loss_ema_alpha = field<double>(cu, "loss_ema_alpha");
  const auto& r = j.at("refinement");
  c.refinement.contact_threshold = field<double>(r, "contact_threshold");
  c.refinement.lambda_data = field<double>(r, "lambda_data");
  c.refinement.lambda_contact = field<double>(r, "lambda_contact");
  c.refinement.lambda_smooth = field<double>(r, "lambda_smooth");
  c.refinement.max_iterations = field<int>(r, "max_iterations");
  c.refinement.tolerance = field<double>(r, "tolerance");
  const auto& n = j.at("noise");
  c.noise.kp_sigma = field<double>(n, "kp_sigma");
  c.noise.conf_sigma = field<double>(n, "conf_sigma");
  c.noise.feature_sigma = field<double>(n, "feature_sigma");
  c.noise.feature_dim = field<int>(n, "feature_dim");
  c.noise.feature_seed = field<uint64_t>(n, "feature_seed");
  const auto& cl = j.at("closeup");
  c.closeup.ratio_split = field<double>(cl, "ratio_split");
  c.closeup.margin_frac = field<double>(cl, "margin_frac");
  c.closeup.scale_min = field<double>(cl, "scale_min");
  c.closeup.scale_max = field<double>(cl, "scale_max");
  c.closeup.translate_frac = field<double>(cl, "translate_frac");
  c.closeup.blur_ratio = field<double>(cl, "blur_ratio");
  c.closeup.network_side = field<int>(cl, "network_side");
  c.closeup.mix_ratio = field<double>(cl, "mix_ratio");
  c.closeup.min_hand_keypoints = field<int>(cl, "min_hand_keypoints");
  c.closeup.min_hand_box_px = field<double>(cl, "min_hand_box_px");
  c.closeup.box_padding = field<double>(cl, "box_padding");
  c.seed = field<uint64_t>(j, "seed");
  c.deterministic = field<bool>(j, "deterministic");
  c.threads = field<int>(j, "threads");
  return c;
}

// Merge `user` onto `base`, rejecting any key path absent from the schema.
void merge_strict(ordered_json& base, const ordered_json& user, const std::string& prefix) {
  if (!user.is_object())
    throw ConfigError("config: expected an object at '" + (prefix.empty() ? "." : prefix) +
                      "'");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    if (base[key].is_object()) {
      merge_strict(base[key], value, path);
    } else {
      if (value.is_object() || value.is_array())
        throw ConfigError("config: key '" + path + "' expects a scalar value");
      base[key] = value;
    }
  }
}

void flatten(const ordered_json& j, const std::string& prefix,
             std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      flatten(value, path, out);
    } else {
      out.emplace_back(path, value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  curriculum.validate();
  refinement.validate();
  if (gen.rounds < 1) throw ConfigError("config: 'gen.rounds' must be positive");
  if (gen.length < 2) throw ConfigError("config: 'gen.length' must be at least 2");
  if (gen.length < curriculum.window)
    throw ConfigError("config: 'gen.length' must cover 'curriculum.window'");
  if (noise.feature_dim != model.feature_dim)
    throw ConfigError("config: 'noise.feature_dim' must equal 'model.feature_dim'");
  if (threads < 1) throw ConfigError("config: 'threads' must be positive");
  if (paths.output_dir.empty()) throw ConfigError("config: 'paths.output_dir' is required");
  if (paths.dataset_dir.empty()) throw ConfigError("config: 'paths.dataset_dir' is required");
}

void RunConfig::apply_override(const std::string& dotted_key, const std::string& value) {
  ordered_json tree = to_tree(*this);
  ordered_json* node = &tree;
  std::string done;
  std::istringstream keys(dotted_key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(keys, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("config: empty override key");
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    done = done.empty() ? parts[i] : done + "." + parts[i];
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object())
      throw ConfigError("config: unknown key '" + dotted_key + "'");
    node = &(*node)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!node->contains(leaf) || (*node)[leaf].is_object())
    throw ConfigError("config: unknown key '" + dotted_key + "'");

  ordered_json parsed;
  if ((*node)[leaf].is_string()) {
    parsed = value;  // strings are taken verbatim
  } else {
    try {
      parsed = ordered_json::parse(value);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: cannot parse value '" + value + "' for '" + dotted_key +
                        "'");
    }
    if (parsed.is_object() || parsed.is_array())
      throw ConfigError("config: key '" + dotted_key + "' expects a scalar value");
  }
  (*node)[leaf] = parsed;
  // Fields without a JSON surface (internal seeds, test hooks) must survive
  // the round trip through the tree.
  RunConfig next = from_tree(tree);
  next.curriculum.seed = curriculum.seed;
  next.model.linear_test_mode = model.linear_test_mode;
  next.model.disable_hand_fusion = model.disable_hand_fusion;
  *this = next;
}

std::string RunConfig::to_json_string() const { return to_tree(*this).dump(2); }

RunConfig RunConfig::from_json_string(const std::string& text) {
  ordered_json user;
  try {
    user = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ordered_json base = to_tree(RunConfig{});
  merge_strict(base, user, "");
  return from_tree(base);
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("config: cannot write " + path);
  out << to_json_string() << "\n";
}

std::vector<std::pair<std::string, std::string>> RunConfig::flat_keys() const {
  std::vector<std::pair<std::string, std::string>> out;
  flatten(to_tree(*this), "", out);
  return out;
}

SkeletonModel load_skeleton(const RunConfig& config) {
  if (config.paths.skeleton.empty()) return SkeletonModel::canonical();
  return SkeletonModel::load_json(config.paths.skeleton);
}

}  // namespace wbmr
