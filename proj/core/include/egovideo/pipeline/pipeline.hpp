#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "egovideo/anticipation/anticipation.hpp"
#include "egovideo/common/jsonl.hpp"
#include "egovideo/corpus/world.hpp"
#include "egovideo/encoders/pretrain.hpp"
#include "egovideo/grounding/grounding.hpp"
#include "egovideo/moments/moments.hpp"
#include "egovideo/retrieval/retrieval.hpp"

namespace egovideo::pipeline {

namespace fs = std::filesystem;

enum class Stage { kCorpus, kPretrain, kNlq, kGoalstep, kMq, kLta, kEkAr, kEkMir, kEkUda, kEnsemble, kReport };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);
// Execution order.
const std::vector<Stage>& all_stages();
// Stages whose manifests must exist before `stage` can run.
std::vector<Stage> upstream(Stage stage);

struct Worlds {
  corpus::WorldConfig pretrain;
  corpus::WorldConfig grounding;
  corpus::WorldConfig lta;
  corpus::WorldConfig epic;
  corpus::WorldConfig epic_target;
};

struct RunConfig {
  std::string profile = "paper";
  // Every module seed is derived from this one.
  uint64_t seed = 0;
  fs::path out_dir;

  Worlds worlds;
  double filter_threshold = 0.0;
  encoders::EncoderConfig encoder;
  encoders::PretrainOptions pretrain;
  int heldout_pairs = 64;

  int snippet_len = 8;
  int snippet_stride = 4;
  double val_fraction = 0.2;
  grounding::GroundingConfig nlq;
  grounding::GroundingConfig goalstep;
  moments::MomentConfig mq;
  retrieval::RecognitionConfig lta_classifier;
  anticipation::LTAConfig lta;
  retrieval::RecognitionConfig ek_ar;
  retrieval::RetrievalConfig ek_mir;
  retrieval::RecognitionConfig ek_uda;
  int ensemble_members = 3;
  std::vector<double> ensemble_weights;  // empty = uniform
};

// Built-in profiles: "paper" keeps the full-scale hyperparameters, "desk"
// scales schedules so every stage finishes in seconds on one CPU core.
RunConfig default_run_config(const std::string& profile);

// JSON with comments. Top-level blocks override the built-in "paper" profile;
// "profiles": {name: {...}} holds per-profile overrides merged on top.
RunConfig load_run_config(const fs::path& path, const std::string& profile);
RunConfig run_config_from_json(const io::Json& j, const std::string& profile);

// Canonical form; out_dir is excluded so equal runs hash equally anywhere.
io::Json to_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

// $EGOVIDEO_OUT when set, else "runs".
fs::path default_out_dir();

void validate(const RunConfig& config);

struct StageOptions {
  // ek_mir: evaluate the stage-2 checkpoint only.
  bool zero_shot_only = false;
};

struct StageResult {
  Stage stage = Stage::kCorpus;
  fs::path manifest;
  io::Json metrics;
};

// Writes <out>/<stage>/ artifacts plus run.json with inputs, config hash,
// artifact list and metrics (percent). Throws MissingDependency naming the
// absent upstream stage.
StageResult run_stage(const RunConfig& config, Stage stage, const StageOptions& options = {});
std::vector<StageResult> run_all(const RunConfig& config);

fs::path manifest_path(const fs::path& out_dir, Stage stage);

struct ClipSplit {
  std::set<std::string> train;
  std::set<std::string> val;
};

// The last val_fraction of the clips, in generation order, form the
// validation side; each side keeps at least one clip when possible.
ClipSplit split_clips(const corpus::World& world, double val_fraction);

// ---- offline evaluation ---------------------------------------------------------
// Scores prediction files against the validation split of the worlds written
// by the corpus stage under config.out_dir. Metrics are in percent.

io::Json evaluate_grounding_file(const RunConfig& config, Stage stage, const fs::path& predictions);
io::Json evaluate_moments_file(const RunConfig& config, const fs::path& predictions);
io::Json evaluate_candidates_file(const RunConfig& config, const fs::path& candidates);

// Logit-averages per-clip detection files from several models, decodes and
// post-processes, writes prediction JSON-lines to `out` and returns its mAP.
io::Json ensemble_moment_files(const RunConfig& config, std::span<const fs::path> detections, const fs::path& out);

// Weighted merge of grounding prediction files into `out`. When the corpus
// stage has run the merged set is scored on the NLQ validation queries.
io::Json ensemble_grounding_files(const RunConfig& config, std::span<const fs::path> inputs,
                                  std::span<const double> weights, const fs::path& out);

// ---- report ------------------------------------------------------------------

struct ReportColumn {
  std::string header;
  std::string key;
};

struct ReportVariant {
  std::string label;   // appended to the row name
  std::string prefix;  // prepended to every metric key
};

struct ReportTable {
  std::string title;
  Stage stage;
  std::vector<ReportColumn> columns;
  std::vector<ReportVariant> variants;
};

const std::vector<ReportTable>& report_tables();

// One markdown table per track over every run.json below `results`; cells
// carry two decimals and "-" when absent. Unreadable manifests are skipped and
// described in `warnings`.
std::string render_report(const fs::path& results, std::vector<std::string>* warnings = nullptr);

}  // namespace egovideo::pipeline
