#include <cstdlib>

#include "egovideo/common/error.hpp"
#include "egovideo/common/rng.hpp"
#include "egovideo/corpus/io.hpp"
#include "egovideo/pipeline/pipeline.hpp"

namespace egovideo::pipeline {

namespace {

const std::vector<std::pair<Stage, const char*>>& stage_names() {
  static const std::vector<std::pair<Stage, const char*>> names = {
      {Stage::kCorpus, "corpus"},     {Stage::kPretrain, "pretrain"}, {Stage::kNlq, "nlq"},
      {Stage::kGoalstep, "goalstep"}, {Stage::kMq, "mq"},             {Stage::kLta, "lta"},
      {Stage::kEkAr, "ek_ar"},        {Stage::kEkMir, "ek_mir"},      {Stage::kEkUda, "ek_uda"},
      {Stage::kEnsemble, "ensemble"}, {Stage::kReport, "report"}};
  return names;
}

template <class T>
void get_if(const io::Json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

io::Json to_json(const encoders::PretrainOptions& o) {
  return {{"epochs", o.epochs},
          {"batch_size", o.batch_size},
          {"lr", o.lr},
          {"min_lr", o.min_lr},
          {"warmup_fraction", o.warmup_fraction},
          {"weight_decay", o.weight_decay}};
}

encoders::PretrainOptions pretrain_options_from_json(const io::Json& j, encoders::PretrainOptions o) {
  get_if(j, "epochs", o.epochs);
  get_if(j, "batch_size", o.batch_size);
  get_if(j, "lr", o.lr);
  get_if(j, "min_lr", o.min_lr);
  get_if(j, "warmup_fraction", o.warmup_fraction);
  get_if(j, "weight_decay", o.weight_decay);
  return o;
}

Worlds default_worlds() {
  Worlds w;
  w.pretrain.num_clips = 320;
  w.pretrain.caption_corruption_prob = 0.05;
  w.pretrain.id_prefix = "pt";

  w.grounding.num_clips = 40;
  w.grounding.min_duration_s = w.grounding.max_duration_s = 12.0;
  w.grounding.min_actions = w.grounding.max_actions = 3;
  w.grounding.min_action_s = 2.0;
  w.grounding.max_action_s = 3.5;
  w.grounding.max_gap_s = 1.0;
  w.grounding.id_prefix = "gr";

  w.lta.num_clips = 16;
  w.lta.min_actions = w.lta.max_actions = 36;
  w.lta.min_action_s = w.lta.max_action_s = 0.5;
  w.lta.max_gap_s = 0.0;
  w.lta.min_duration_s = w.lta.max_duration_s = 18.0;
  w.lta.transition_determinism = 0.9;
  w.lta.id_prefix = "lta";

  w.epic.num_clips = 80;
  w.epic.id_prefix = "ek";
  w.epic_target = w.epic;
  w.epic_target.num_clips = 40;
  w.epic_target.hue_shift_deg = 40.0;
  w.epic_target.speed_factor = 1.5;
  w.epic_target.id_prefix = "ekt";
  return w;
}

}  // namespace

std::string to_string(Stage stage) {
  for (const auto& [s, name] : stage_names()) {
    if (s == stage) return name;
  }
  throw InvalidArgument("unknown stage");
}

Stage stage_from_string(const std::string& name) {
  for (const auto& [s, n] : stage_names()) {
    if (name == n) return s;
  }
  std::string known;
  for (const auto& [s, n] : stage_names()) known += (known.empty() ? "" : ", ") + std::string(n);
  throw InvalidArgument("unknown stage '" + name + "' (expected one of: " + known + ")");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = [] {
    std::vector<Stage> out;
    for (const auto& [s, _] : stage_names()) out.push_back(s);
    return out;
  }();
  return stages;
}

std::vector<Stage> upstream(Stage stage) {
  switch (stage) {
    case Stage::kCorpus:
    case Stage::kReport:
      return {};
    case Stage::kPretrain:
      return {Stage::kCorpus};
    case Stage::kEnsemble:
      return {Stage::kCorpus, Stage::kPretrain, Stage::kNlq};
    default:
      return {Stage::kCorpus, Stage::kPretrain};
  }
}

RunConfig default_run_config(const std::string& profile) {
  RunConfig c;
  c.worlds = default_worlds();
  c.goalstep = grounding::with_step_overrides(c.nlq);
  if (profile == "paper") {
    c.profile = profile;
    return c;
  }
  if (profile != "desk") throw InvalidArgument("unknown profile '" + profile + "' (expected paper or desk)");
  c.profile = profile;
  c.pretrain.lr = 2e-3;
  c.pretrain.batch_size = 16;
  for (auto* g : {&c.nlq, &c.goalstep}) {
    g->pretrain.epochs = 20;
    g->finetune.epochs = 20;
  }
  c.lta.epochs = 30;
  c.lta.lr = 3e-3;
  c.lta.batch_size = 8;
  for (auto* r : {&c.lta_classifier, &c.ek_ar, &c.ek_uda}) {
    r->epochs = 30;
    r->lr = 1e-3;
    r->batch_size = 8;
  }
  c.ek_mir.epochs = 10;
  c.ek_mir.lr = 1e-4;
  return c;
}

io::Json to_json(const RunConfig& c) {
  io::Json j;
  j["profile"] = c.profile;
  j["seed"] = c.seed;
  j["worlds"] = {{"pretrain", corpus::to_json(c.worlds.pretrain)},
                 {"grounding", corpus::to_json(c.worlds.grounding)},
                 {"lta", corpus::to_json(c.worlds.lta)},
                 {"epic", corpus::to_json(c.worlds.epic)},
                 {"epic_target", corpus::to_json(c.worlds.epic_target)}};
  j["filter_threshold"] = c.filter_threshold;
  j["encoder"] = encoders::to_json(c.encoder);
  j["pretrain"] = to_json(c.pretrain);
  j["heldout_pairs"] = c.heldout_pairs;
  j["features"] = {{"snippet_len", c.snippet_len}, {"snippet_stride", c.snippet_stride}};
  j["val_fraction"] = c.val_fraction;
  j["nlq"] = grounding::to_json(c.nlq);
  j["goalstep"] = grounding::to_json(c.goalstep);
  j["mq"] = moments::to_json(c.mq);
  j["lta_classifier"] = retrieval::to_json(c.lta_classifier);
  j["lta"] = anticipation::to_json(c.lta);
  j["ek_ar"] = retrieval::to_json(c.ek_ar);
  j["ek_mir"] = retrieval::to_json(c.ek_mir);
  j["ek_uda"] = retrieval::to_json(c.ek_uda);
  j["ensemble"] = {{"members", c.ensemble_members}, {"weights", c.ensemble_weights}};
  return j;
}

RunConfig run_config_from_json(const io::Json& root, const std::string& profile) {
  io::Json j = root;
  if (root.contains("profiles")) {
    const auto& profiles = root.at("profiles");
    if (profiles.contains(profile)) j.merge_patch(profiles.at(profile));
    j.erase("profiles");
  }
  // The built-in profile of the same name supplies anything the file leaves out.
  RunConfig c = default_run_config(profile == "desk" ? "desk" : "paper");
  c.profile = profile;
  try {
    get_if(j, "seed", c.seed);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("worlds")) {
      const auto& w = j.at("worlds");
      if (w.contains("pretrain")) c.worlds.pretrain = corpus::world_config_from_json(w.at("pretrain"), c.worlds.pretrain);
      if (w.contains("grounding"))
        c.worlds.grounding = corpus::world_config_from_json(w.at("grounding"), c.worlds.grounding);
      if (w.contains("lta")) c.worlds.lta = corpus::world_config_from_json(w.at("lta"), c.worlds.lta);
      if (w.contains("epic")) c.worlds.epic = corpus::world_config_from_json(w.at("epic"), c.worlds.epic);
      if (w.contains("epic_target"))
        c.worlds.epic_target = corpus::world_config_from_json(w.at("epic_target"), c.worlds.epic_target);
    }
    get_if(j, "filter_threshold", c.filter_threshold);
    if (j.contains("encoder")) c.encoder = encoders::encoder_config_from_json(j.at("encoder"), c.encoder);
    if (j.contains("pretrain")) c.pretrain = pretrain_options_from_json(j.at("pretrain"), c.pretrain);
    get_if(j, "heldout_pairs", c.heldout_pairs);
    if (j.contains("features")) {
      get_if(j.at("features"), "snippet_len", c.snippet_len);
      get_if(j.at("features"), "snippet_stride", c.snippet_stride);
    }
    get_if(j, "val_fraction", c.val_fraction);
    if (j.contains("nlq")) {
      c.nlq = grounding::grounding_config_from_json(j.at("nlq"), c.nlq);
      if (!j.contains("goalstep")) c.goalstep = grounding::with_step_overrides(c.nlq);
    }
    if (j.contains("goalstep")) c.goalstep = grounding::grounding_config_from_json(j.at("goalstep"), c.goalstep);
    if (j.contains("mq")) c.mq = moments::moment_config_from_json(j.at("mq"), c.mq);
    if (j.contains("lta_classifier"))
      c.lta_classifier = retrieval::recognition_config_from_json(j.at("lta_classifier"), c.lta_classifier);
    if (j.contains("lta")) c.lta = anticipation::lta_config_from_json(j.at("lta"), c.lta);
    if (j.contains("ek_ar")) c.ek_ar = retrieval::recognition_config_from_json(j.at("ek_ar"), c.ek_ar);
    if (j.contains("ek_mir")) c.ek_mir = retrieval::retrieval_config_from_json(j.at("ek_mir"), c.ek_mir);
    if (j.contains("ek_uda")) c.ek_uda = retrieval::recognition_config_from_json(j.at("ek_uda"), c.ek_uda);
    if (j.contains("ensemble")) {
      get_if(j.at("ensemble"), "members", c.ensemble_members);
      get_if(j.at("ensemble"), "weights", c.ensemble_weights);
    }
  } catch (const io::Json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const fs::path& path, const std::string& profile) {
  if (!fs::exists(path)) throw InvalidArgument("config file not found: " + path.string());
  return run_config_from_json(io::read_json_with_comments(path), profile);
}

std::string config_hash(const RunConfig& config) { return io::hex64(io::fnv1a64(to_json(config).dump())); }

fs::path default_out_dir() {
  if (const char* env = std::getenv("EGOVIDEO_OUT"); env && *env) return env;
  return "runs";
}

void validate(const RunConfig& c) {
  for (const auto* w : {&c.worlds.pretrain, &c.worlds.grounding, &c.worlds.lta, &c.worlds.epic, &c.worlds.epic_target}) {
    corpus::validate(*w);
  }
  const std::vector<const corpus::WorldConfig*> worlds = {&c.worlds.pretrain, &c.worlds.grounding, &c.worlds.lta,
                                                          &c.worlds.epic, &c.worlds.epic_target};
  for (const auto* w : worlds) {
    require(w->num_verbs == c.worlds.pretrain.num_verbs && w->num_nouns == c.worlds.pretrain.num_nouns,
            "config: every world must share the pretrain world's label space");
    require(w->height == c.encoder.height && w->width == c.encoder.width_px && w->channels == c.encoder.channels,
            "config: world frame size must match the encoder");
  }
  require(c.worlds.epic.id_prefix != c.worlds.epic_target.id_prefix,
          "config: epic and epic_target worlds need different id prefixes");
  encoders::validate(c.encoder);
  require(c.pretrain.epochs >= 0 && c.pretrain.batch_size >= 1 && c.pretrain.lr > 0.0, "config: invalid pretrain block");
  require(c.heldout_pairs >= 1 && c.heldout_pairs < c.worlds.pretrain.num_clips,
          "config: heldout_pairs must leave training clips");
  require(c.snippet_len >= 1 && c.snippet_stride >= 1, "config: snippet geometry must be positive");
  require(c.val_fraction > 0.0 && c.val_fraction < 1.0, "config: val_fraction must be in (0, 1)");
  grounding::validate(c.nlq);
  grounding::validate(c.goalstep);
  moments::validate(c.mq);
  require(c.mq.num_categories == c.worlds.grounding.num_verbs * c.worlds.grounding.num_nouns,
          "config: mq.num_categories must equal verbs x nouns");
  anticipation::validate(c.lta);
  require(c.lta.history == c.worlds.lta.lta_history && c.lta.future == c.worlds.lta.lta_future,
          "config: lta history/future must match the lta world");
  retrieval::validate(c.lta_classifier);
  retrieval::validate(c.ek_ar);
  retrieval::validate(c.ek_mir);
  retrieval::validate(c.ek_uda);
  require(c.ensemble_members >= 1, "config: ensemble needs at least one member");
  require(c.ensemble_weights.empty() || static_cast<int>(c.ensemble_weights.size()) == c.ensemble_members,
          "config: one ensemble weight per member");
}

fs::path manifest_path(const fs::path& out_dir, Stage stage) { return out_dir / to_string(stage) / "run.json"; }

}  // namespace egovideo::pipeline
