#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "egovideo/common/error.hpp"
#include "egovideo/common/rng.hpp"
#include "egovideo/corpus/filter.hpp"
#include "egovideo/corpus/io.hpp"
#include "egovideo/corpus/vocabulary.hpp"
#include "egovideo/ensemble/ensemble.hpp"
#include "egovideo/features/features.hpp"
#include "egovideo/metrics/metrics.hpp"
#include "egovideo/pipeline/pipeline.hpp"

namespace egovideo::pipeline {

namespace {

enum SeedTag : uint64_t {
  kWorldPretrain = 1,
  kWorldGrounding,
  kWorldLta,
  kWorldEpic,
  kWorldEpicTarget,
  kSelect,
  kEncoderInit,
  kPretrainRun,
  kNlq,
  kNaq,
  kGoalstep,
  kGoalstepNaq,
  kMq,
  kLtaClassifier,
  kLtaModel,
  kLtaRollout,
  kEkAr,
  kEkMir,
  kEkUda,
  kEnsemble,
};

uint64_t derive(const RunConfig& c, uint64_t tag) { return mix_seed(c.seed, tag); }

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Collects artifacts relative to the output root and writes run.json.
class StageWriter {
 public:
  StageWriter(const RunConfig& config, Stage stage) : config_(config), stage_(stage) {
    dir_ = config.out_dir / to_string(stage);
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }
  void add(const fs::path& absolute) { artifacts_.insert(fs::relative(absolute, config_.out_dir).generic_string()); }

  StageResult finish(io::Json metrics) {
    io::Json inputs = io::Json::object();
    for (Stage up : upstream(stage_)) {
      inputs[to_string(up)] = io::hex64(io::fnv1a64(read_bytes(manifest_path(config_.out_dir, up))));
    }
    io::Json manifest = {{"stage", to_string(stage_)},
                         {"profile", config_.profile},
                         {"seed", config_.seed},
                         {"config_hash", config_hash(config_)},
                         {"inputs", inputs},
                         {"artifacts", std::vector<std::string>(artifacts_.begin(), artifacts_.end())},
                         {"metrics", metrics}};
    const fs::path path = dir_ / "run.json";
    io::write_json(path, manifest);
    return {stage_, path, metrics};
  }

 private:
  const RunConfig& config_;
  Stage stage_;
  fs::path dir_;
  std::set<std::string> artifacts_;
};

void check_upstream(const RunConfig& config, Stage stage) {
  std::vector<std::string> missing;
  for (Stage up : upstream(stage)) {
    if (!fs::exists(manifest_path(config.out_dir, up))) missing.push_back(to_string(up));
  }
  if (missing.empty()) return;
  std::string names;
  for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
  throw MissingDependency("stage " + to_string(stage) + " needs upstream stage(s) " + names + " in " +
                          config.out_dir.string() + "; run `egovideo run --stage " + missing.front() + "` first");
}

fs::path world_dir(const RunConfig& c, const std::string& name) { return c.out_dir / "corpus" / name; }

corpus::World load_world(const RunConfig& c, const std::string& name) { return corpus::read_world(world_dir(c, name)); }

encoders::TwoTowerModel load_stage2(const RunConfig& c) {
  return encoders::load_checkpoint(c.out_dir / "pretrain" / "checkpoint.bin").model;
}

template <class T>
std::vector<T> on_clips(const std::vector<T>& items, const std::set<std::string>& clips) {
  std::vector<T> out;
  for (const auto& x : items) {
    if (clips.count(x.clip_id)) out.push_back(x);
  }
  return out;
}

corpus::World subworld(const corpus::World& world, const std::set<std::string>& clips) {
  corpus::World out;
  out.config = world.config;
  for (const auto& c : world.clips) {
    if (clips.count(c.id)) out.clips.push_back(c);
  }
  return out;
}

double pct(double x) { return 100.0 * x; }

std::string tiou_key(const char* prefix, double t) {
  std::ostringstream s;
  s << prefix << t;
  return s.str();
}

io::Json recall_metrics(const grounding::RecallTable& t) {
  io::Json m;
  for (int k : t.ks) {
    for (double tiou : t.tious) m["R" + std::to_string(k) + tiou_key("@", tiou)] = pct(t.at(k, tiou));
  }
  m["queries"] = t.num_queries;
  return m;
}

grounding::TrackIndex extract_tracks(const RunConfig& c, const corpus::World& world,
                                     const encoders::TwoTowerModel& encoder, const fs::path* save_dir,
                                     StageWriter* writer) {
  std::vector<features::SnippetFeatureTrack> tracks;
  for (const auto& clip : world.clips) {
    tracks.push_back(features::extract_snippet_track(clip, encoder, c.snippet_len, c.snippet_stride));
  }
  if (save_dir) {
    features::write_track_set(*save_dir, tracks);
    for (const auto& e : fs::recursive_directory_iterator(*save_dir)) {
      if (e.is_regular_file()) writer->add(e.path());
    }
  }
  return grounding::index_tracks(std::move(tracks));
}

// ---- stages -------------------------------------------------------------------

StageResult stage_corpus(const RunConfig& c) {
  StageWriter w(c, Stage::kCorpus);
  io::Json metrics;
  const std::vector<std::pair<std::string, corpus::WorldConfig>> worlds = {
      {"pretrain", c.worlds.pretrain}, {"grounding", c.worlds.grounding}, {"lta", c.worlds.lta},
      {"epic", c.worlds.epic},         {"epic_target", c.worlds.epic_target}};
  const uint64_t tags[] = {kWorldPretrain, kWorldGrounding, kWorldLta, kWorldEpic, kWorldEpicTarget};
  for (size_t i = 0; i < worlds.size(); ++i) {
    auto cfg = worlds[i].second;
    cfg.seed = derive(c, tags[i]);
    const auto world = corpus::generate_world(cfg);
    const fs::path dir = world_dir(c, worlds[i].first);
    fs::remove_all(dir);
    for (const auto& rel : corpus::write_world(dir, world)) w.add(dir / rel);
    metrics[worlds[i].first] = {{"clips", world.clips.size()}, {"pairs", world.pairs.size()}};
    if (worlds[i].first == "pretrain") {
      const auto rules = corpus::FilterRules::for_vocabulary(corpus::Vocabulary::for_world(cfg));
      auto scored = world.pairs;
      const auto q = corpus::score_pairs(scored, rules);
      for (size_t k = 0; k < scored.size(); ++k) scored[k].quality = q[k];
      corpus::SelectionOptions sel;
      sel.threshold = c.filter_threshold;
      sel.seed = derive(c, kSelect);
      const auto selected = corpus::select_corpus(scored, sel);
      const fs::path path = w.dir() / "pretrain_selected.jsonl";
      corpus::write_manifest(path, selected);
      w.add(path);
      metrics["pretrain"]["selected"] = selected.size();
    }
  }
  return w.finish(metrics);
}

StageResult stage_pretrain(const RunConfig& c) {
  StageWriter w(c, Stage::kPretrain);
  const auto world = load_world(c, "pretrain");
  const auto selected = corpus::read_manifest(c.out_dir / "corpus" / "pretrain_selected.jsonl");

  std::set<std::string> heldout;
  const size_t n = world.clips.size();
  for (size_t i = n - static_cast<size_t>(c.heldout_pairs); i < n; ++i) heldout.insert(world.clips[i].id);
  std::vector<corpus::ClipTextPair> train_pairs, eval_pairs;
  for (const auto& p : selected) {
    const auto [clip, _] = corpus::split_clip_ref(p.clip_id);
    if (!heldout.count(clip)) train_pairs.push_back(p);
  }
  std::set<std::string> seen;
  for (const auto& p : world.pairs) {
    const auto [clip, _] = corpus::split_clip_ref(p.clip_id);
    if (heldout.count(clip) && seen.insert(p.clip_id).second) eval_pairs.push_back(p);
  }

  const encoders::TwoTowerModel init(c.encoder, corpus::Vocabulary::for_world(world.config), derive(c, kEncoderInit));
  auto opts = c.pretrain;
  opts.seed = derive(c, kPretrainRun);
  const auto result = encoders::post_pretrain(init, encoders::training_pairs(world, train_pairs), opts);
  const fs::path ckpt = w.dir() / "checkpoint.bin";
  encoders::save_checkpoint(ckpt, result.model, result.state);
  w.add(ckpt);
  w.add(fs::path(ckpt.string() + ".json"));

  const auto emb = retrieval::embed_pairs(result.model, encoders::training_pairs(world, eval_pairs));
  const double r1 = retrieval::paired_recall_at_k(retrieval::similarity_matrix(emb.video, emb.text), 1);
  const auto& losses = result.state.epoch_losses;
  io::Json metrics = {{"train_pairs", train_pairs.size()},
                      {"heldout_pairs", eval_pairs.size()},
                      {"first_epoch_loss", losses.empty() ? 0.0 : losses.front()},
                      {"final_epoch_loss", losses.empty() ? 0.0 : losses.back()},
                      {"zero_shot_t2v_r1", pct(r1)}};
  return w.finish(metrics);
}

struct GroundingRun {
  grounding::GroundingPredictions val_predictions;
  std::vector<grounding::GroundingQuery> val_queries;
  io::Json metrics;
};

GroundingRun train_and_eval_grounding(const RunConfig& c, const corpus::World& world,
                                      const std::vector<corpus::GroundingAnnotation>& annotations,
                                      grounding::GroundingConfig cfg, uint64_t naq_seed,
                                      const encoders::TwoTowerModel& encoder, const grounding::TrackIndex& tracks) {
  const auto split = split_clips(world, c.val_fraction);
  const auto all = grounding::queries_from(annotations);
  const auto train = on_clips(all, split.train);
  GroundingRun run;
  run.val_queries = on_clips(all, split.val);
  const auto naq = grounding::synthesize_pretrain_queries(
      subworld(world, split.train), cfg.pretrain_multiplier * static_cast<int>(train.size()), naq_seed);
  const grounding::GroundingModel init(encoder, encoder.config().embed_dim, cfg);
  const auto model = grounding::train_grounding(init, naq, train, tracks);
  run.val_predictions = grounding::predict_queries(model, run.val_queries, tracks);
  run.metrics = recall_metrics(grounding::eval_grounding(run.val_predictions, run.val_queries));
  const auto fit = grounding::eval_grounding(grounding::predict_queries(model, train, tracks), train);
  run.metrics["train_R1@0.5"] = pct(fit.at(1, 0.5));
  run.metrics["train_queries"] = train.size();
  run.metrics["pretrain_queries"] = naq.size();
  return run;
}

StageResult stage_grounding(const RunConfig& c, Stage stage) {
  StageWriter w(c, stage);
  const auto world = load_world(c, "grounding");
  const auto encoder = load_stage2(c);
  const fs::path feat = w.dir() / "features";
  fs::remove_all(feat);
  const auto tracks = extract_tracks(c, world, encoder, &feat, &w);
  const bool nlq = stage == Stage::kNlq;
  auto cfg = nlq ? c.nlq : c.goalstep;
  cfg.seed = derive(c, nlq ? kNlq : kGoalstep);
  const auto run = train_and_eval_grounding(c, world, nlq ? world.annotations.nlq : world.annotations.goalstep, cfg,
                                            derive(c, nlq ? kNaq : kGoalstepNaq), encoder, tracks);
  const fs::path preds = w.dir() / "predictions_val.jsonl";
  grounding::write_predictions(preds, run.val_predictions);
  w.add(preds);
  return w.finish(run.metrics);
}

io::Json map_metrics(const moments::MapResult& r) {
  io::Json m;
  for (size_t i = 0; i < r.tious.size(); ++i) m[tiou_key("mAP@", r.tious[i])] = pct(r.map_per_tiou[i]);
  m["avg_mAP"] = pct(r.average_map);
  m["R1@0.5"] = pct(r.recall_1x_at_05);
  return m;
}

StageResult stage_mq(const RunConfig& c) {
  StageWriter w(c, Stage::kMq);
  const auto world = load_world(c, "grounding");
  const auto encoder = load_stage2(c);
  const fs::path feat = w.dir() / "features";
  fs::remove_all(feat);
  const auto tracks = extract_tracks(c, world, encoder, &feat, &w);
  const auto split = split_clips(world, c.val_fraction);
  auto cfg = c.mq;
  cfg.seed = derive(c, kMq);
  const moments::MomentModel init(encoder.config().embed_dim, cfg);
  const auto train = on_clips(world.annotations.moments, split.train);
  const auto val = on_clips(world.annotations.moments, split.val);
  const auto model = moments::train_moments(init, train, tracks);

  std::vector<moments::DetectionOutput> detections;
  std::vector<moments::MomentPrediction> preds;
  for (const auto& clip : world.clips) {
    if (!split.val.count(clip.id)) continue;
    auto det = moments::detect_moments(tracks.at(clip.id), model);
    for (auto& p : moments::postprocess(det, cfg.nms_sigma, cfg.score_floor, cfg.max_per_category)) {
      preds.push_back(std::move(p));
    }
    detections.push_back(std::move(det));
  }
  const fs::path pred_path = w.dir() / "predictions_val.jsonl";
  const fs::path det_path = w.dir() / "detections_val.jsonl";
  moments::write_predictions(pred_path, preds);
  moments::write_detections(det_path, detections);
  w.add(pred_path);
  w.add(det_path);
  auto metrics = map_metrics(moments::average_map(preds, val, cfg.num_categories));
  metrics["train_clips"] = split.train.size();
  metrics["val_clips"] = split.val.size();
  return w.finish(metrics);
}

StageResult stage_lta(const RunConfig& c) {
  StageWriter w(c, Stage::kLta);
  const auto world = load_world(c, "lta");
  const auto encoder = load_stage2(c);
  const auto split = split_clips(world, c.val_fraction);
  const int nv = world.config.num_verbs, nn_ = world.config.num_nouns;

  auto clf_cfg = c.lta_classifier;
  clf_cfg.seed = derive(c, kLtaClassifier);
  const auto rec_train = on_clips(world.annotations.recognition, split.train);
  const auto rec_val = on_clips(world.annotations.recognition, split.val);
  const auto clf = retrieval::recognize_train(encoder, retrieval::labeled_clips(world, rec_train), nv, nn_, clf_cfg);
  const auto cls = retrieval::evaluate_recognition(clf, retrieval::labeled_clips(world, rec_val));

  auto cfg = c.lta;
  cfg.seed = derive(c, kLtaModel);
  const auto train = on_clips(world.annotations.anticipation, split.train);
  const auto val = on_clips(world.annotations.anticipation, split.val);
  const auto model = anticipation::train_sequence_model(anticipation::ActionSequenceModel(nv, nn_, cfg),
                                                        anticipation::examples_from(train));
  std::vector<anticipation::CandidateRecord> records;
  std::vector<std::vector<anticipation::Sequence>> cands;
  std::vector<anticipation::Sequence> gt;
  for (const auto& a : val) {
    const auto history = anticipation::infer_history(world.clip(a.clip_id), a, clf);
    auto k = anticipation::predict_future(history, model, cfg.candidates,
                                          mix_seed(derive(c, kLtaRollout), io::fnv1a64(a.example_id)));
    records.push_back({a.example_id, k});
    cands.push_back(std::move(k));
    gt.push_back(a.future);
  }
  const fs::path path = w.dir() / "candidates_val.jsonl";
  anticipation::write_candidates(path, records);
  w.add(path);
  io::Json metrics = {{"verb_top1", pct(cls.verb_top1)}, {"noun_top1", pct(cls.noun_top1)},
                      {"action_top1", pct(cls.action_top1)}, {"examples", val.size()}};
  if (!gt.empty()) {
    const auto ed = anticipation::edit_distance_eval(cands, gt, nn_);
    metrics["verb_ED"] = ed.verb;
    metrics["noun_ED"] = ed.noun;
    metrics["action_ED"] = ed.action;
  }
  return w.finish(metrics);
}

io::Json accuracy_metrics(const retrieval::RecognitionAccuracy& a) {
  return {{"verb_top1", pct(a.verb_top1)}, {"noun_top1", pct(a.noun_top1)}, {"action_top1", pct(a.action_top1)},
          {"verb_top5", pct(a.verb_top5)}, {"noun_top5", pct(a.noun_top5)}, {"clips", a.count}};
}

StageResult stage_ek_ar(const RunConfig& c) {
  StageWriter w(c, Stage::kEkAr);
  const auto world = load_world(c, "epic");
  const auto encoder = load_stage2(c);
  const auto split = split_clips(world, c.val_fraction);
  auto cfg = c.ek_ar;
  cfg.seed = derive(c, kEkAr);
  const auto train = on_clips(world.annotations.recognition, split.train);
  const auto val = on_clips(world.annotations.recognition, split.val);
  const auto model = retrieval::recognize_train(encoder, retrieval::labeled_clips(world, train),
                                                world.config.num_verbs, world.config.num_nouns, cfg);
  const auto val_clips = retrieval::labeled_clips(world, val);
  std::vector<corpus::FrameView> views;
  for (const auto& v : val_clips) views.push_back(v.frames);
  const auto scores = encoders::predict_logits(model, views);
  std::vector<retrieval::RecognitionRow> rows;
  for (size_t i = 0; i < val.size(); ++i) {
    const auto r = static_cast<nn::Index>(i);
    rows.push_back({val[i].clip_ref, metrics::argmax_row(scores.verb, r), metrics::argmax_row(scores.noun, r)});
  }
  const fs::path path = w.dir() / "predictions_val.csv";
  retrieval::write_recognition_csv(path, rows);
  w.add(path);
  return w.finish(accuracy_metrics(retrieval::evaluate_recognition(model, val_clips)));
}

io::Json retrieval_metrics(const retrieval::RetrievalReport& r) {
  return {{"mAP_avg", pct(r.map.avg)},   {"mAP_t2v", pct(r.map.t2v)},   {"mAP_v2t", pct(r.map.v2t)},
          {"nDCG_avg", pct(r.ndcg.avg)}, {"nDCG_t2v", pct(r.ndcg.t2v)}, {"nDCG_v2t", pct(r.ndcg.v2t)}};
}

StageResult stage_ek_mir(const RunConfig& c, const StageOptions& options) {
  StageWriter w(c, Stage::kEkMir);
  const auto world = load_world(c, "epic");
  const auto encoder = load_stage2(c);
  const auto split = split_clips(world, c.val_fraction);
  const auto train = retrieval::retrieval_pairs(world, on_clips(world.annotations.recognition, split.train));
  const auto val = retrieval::retrieval_pairs(world, on_clips(world.annotations.recognition, split.val));
  io::Json metrics;
  const auto zs = retrieval::evaluate_retrieval(encoder, val);
  const auto zs_metrics = retrieval_metrics(zs);
  for (const auto& [k, v] : zs_metrics.items()) metrics["zs_" + k] = v;
  const auto zs_emb = retrieval::embed_pairs(encoder, val);
  const fs::path zs_path = w.dir() / "embeddings_zero_shot_video.egvf";
  retrieval::write_embeddings(zs_path, zs_emb.video, "ek_mir_zero_shot");
  w.add(zs_path);
  if (!options.zero_shot_only) {
    auto cfg = c.ek_mir;
    cfg.seed = derive(c, kEkMir);
    const auto tuned = retrieval::finetune_retrieval(encoder, train, cfg).model;
    const auto ft = retrieval::evaluate_retrieval(tuned, val);
    const auto ft_metrics = retrieval_metrics(ft);
    for (const auto& [k, v] : ft_metrics.items()) metrics["ft_" + k] = v;
    const fs::path ft_path = w.dir() / "embeddings_fine_tuned_video.egvf";
    retrieval::write_embeddings(ft_path, retrieval::embed_pairs(tuned, val).video, "ek_mir_fine_tuned");
    w.add(ft_path);
  }
  metrics["queries"] = val.size();
  return w.finish(metrics);
}

StageResult stage_ek_uda(const RunConfig& c) {
  StageWriter w(c, Stage::kEkUda);
  const auto source = load_world(c, "epic");
  const auto target = load_world(c, "epic_target");
  const auto encoder = load_stage2(c);
  std::vector<std::string> sid, tid;
  for (const auto& a : source.annotations.recognition) sid.push_back(a.clip_ref);
  for (const auto& a : target.annotations.recognition) tid.push_back(a.clip_ref);
  const auto built =
      retrieval::DomainSplit::make(retrieval::labeled_clips(source, source.annotations.recognition), sid,
                                   retrieval::labeled_clips(target, target.annotations.recognition), tid);
  auto cfg = c.ek_uda;
  cfg.seed = derive(c, kEkUda);
  const auto model = retrieval::domain_adapt_train(encoder, built.split, source.config.num_verbs,
                                                   source.config.num_nouns, cfg);
  const auto acc = retrieval::evaluate_target(model, built.split, built.target_labels);
  std::vector<corpus::FrameView> views(built.split.target().begin(), built.split.target().end());
  const auto scores = encoders::predict_logits(model, views);
  std::vector<retrieval::RecognitionRow> rows;
  for (size_t i = 0; i < tid.size(); ++i) {
    const auto r = static_cast<nn::Index>(i);
    rows.push_back({tid[i], metrics::argmax_row(scores.verb, r), metrics::argmax_row(scores.noun, r)});
  }
  const fs::path path = w.dir() / "predictions_target.csv";
  retrieval::write_recognition_csv(path, rows);
  w.add(path);
  return w.finish(accuracy_metrics(acc));
}

StageResult stage_ensemble(const RunConfig& c) {
  StageWriter w(c, Stage::kEnsemble);
  const auto world = load_world(c, "grounding");
  const auto encoder = load_stage2(c);
  const auto tracks = extract_tracks(c, world, encoder, nullptr, nullptr);
  const fs::path first = c.out_dir / "nlq" / "predictions_val.jsonl";
  if (!fs::exists(first)) throw MissingDependency("ensemble needs " + first.string() + " from stage nlq");

  std::vector<grounding::GroundingPredictions> members{grounding::read_predictions(first)};
  std::vector<grounding::GroundingQuery> val_queries;
  io::Json metrics;
  for (int m = 1; m < c.ensemble_members; ++m) {
    auto cfg = c.nlq;
    cfg.seed = derive(c, kEnsemble + 2 * static_cast<uint64_t>(m));
    const auto run = train_and_eval_grounding(c, world, world.annotations.nlq, cfg,
                                              derive(c, kEnsemble + 2 * static_cast<uint64_t>(m) + 1), encoder, tracks);
    const fs::path path = w.dir() / ("member" + std::to_string(m) + "_predictions_val.jsonl");
    grounding::write_predictions(path, run.val_predictions);
    w.add(path);
    members.push_back(run.val_predictions);
    val_queries = run.val_queries;
    metrics["member" + std::to_string(m)] = run.metrics;
  }
  if (val_queries.empty()) {
    const auto split = split_clips(world, c.val_fraction);
    val_queries = on_clips(grounding::queries_from(world.annotations.nlq), split.val);
  }
  metrics["member0"] = recall_metrics(grounding::eval_grounding(members.front(), val_queries));
  const auto weights = c.ensemble_weights.empty() ? ensemble::uniform_weights(members.size()) : c.ensemble_weights;
  const auto merged = ensemble::merge_prediction_sets(members, weights);
  const fs::path path = w.dir() / "predictions_val.jsonl";
  grounding::write_predictions(path, merged);
  w.add(path);
  const auto merged_metrics = recall_metrics(grounding::eval_grounding(merged, val_queries));
  for (const auto& [k, v] : merged_metrics.items()) metrics[k] = v;
  return w.finish(metrics);
}

StageResult stage_report(const RunConfig& c) {
  StageWriter w(c, Stage::kReport);
  std::vector<std::string> warnings;
  const std::string text = render_report(c.out_dir, &warnings);
  const fs::path path = w.dir() / "report.md";
  std::ofstream(path) << text;
  w.add(path);
  return w.finish({{"warnings", warnings.size()}});
}

}  // namespace

ClipSplit split_clips(const corpus::World& world, double val_fraction) {
  const size_t n = world.clips.size();
  size_t n_val = static_cast<size_t>(std::llround(static_cast<double>(n) * val_fraction));
  n_val = std::clamp<size_t>(n_val, n >= 2 ? 1 : 0, n >= 2 ? n - 1 : n);
  ClipSplit s;
  for (size_t i = 0; i < n; ++i) (i < n - n_val ? s.train : s.val).insert(world.clips[i].id);
  return s;
}

StageResult run_stage(const RunConfig& config, Stage stage, const StageOptions& options) {
  validate(config);
  require(!config.out_dir.empty(), "run_stage: output directory is not set");
  check_upstream(config, stage);
  switch (stage) {
    case Stage::kCorpus: return stage_corpus(config);
    case Stage::kPretrain: return stage_pretrain(config);
    case Stage::kNlq:
    case Stage::kGoalstep: return stage_grounding(config, stage);
    case Stage::kMq: return stage_mq(config);
    case Stage::kLta: return stage_lta(config);
    case Stage::kEkAr: return stage_ek_ar(config);
    case Stage::kEkMir: return stage_ek_mir(config, options);
    case Stage::kEkUda: return stage_ek_uda(config);
    case Stage::kEnsemble: return stage_ensemble(config);
    case Stage::kReport: return stage_report(config);
  }
  throw InvalidArgument("unknown stage");
}

std::vector<StageResult> run_all(const RunConfig& config) {
  std::vector<StageResult> out;
  for (Stage s : all_stages()) out.push_back(run_stage(config, s));
  return out;
}

io::Json evaluate_grounding_file(const RunConfig& config, Stage stage, const fs::path& predictions) {
  require(stage == Stage::kNlq || stage == Stage::kGoalstep, "evaluate_grounding_file: stage must be nlq or goalstep");
  check_upstream(config, Stage::kPretrain);
  if (!fs::exists(predictions)) throw MissingDependency("predictions not found: " + predictions.string());
  const auto world = load_world(config, "grounding");
  const auto& ann = stage == Stage::kNlq ? world.annotations.nlq : world.annotations.goalstep;
  const auto val = on_clips(grounding::queries_from(ann), split_clips(world, config.val_fraction).val);
  return recall_metrics(grounding::eval_grounding(grounding::read_predictions(predictions), val));
}

io::Json evaluate_moments_file(const RunConfig& config, const fs::path& predictions) {
  check_upstream(config, Stage::kPretrain);
  if (!fs::exists(predictions)) throw MissingDependency("predictions not found: " + predictions.string());
  const auto world = load_world(config, "grounding");
  const auto val = on_clips(world.annotations.moments, split_clips(world, config.val_fraction).val);
  return map_metrics(moments::average_map(moments::read_predictions(predictions), val, world.num_categories()));
}

io::Json evaluate_candidates_file(const RunConfig& config, const fs::path& candidates) {
  check_upstream(config, Stage::kPretrain);
  const auto world = load_world(config, "lta");
  const auto val = on_clips(world.annotations.anticipation, split_clips(world, config.val_fraction).val);
  std::map<std::string, std::vector<anticipation::Sequence>> by_id;
  for (auto& r : anticipation::read_candidates(candidates)) by_id[r.example_id] = std::move(r.candidates);
  std::vector<std::vector<anticipation::Sequence>> cands;
  std::vector<anticipation::Sequence> gt;
  for (const auto& a : val) {
    const auto it = by_id.find(a.example_id);
    if (it == by_id.end()) throw InvalidArgument("candidates missing example " + a.example_id);
    cands.push_back(it->second);
    gt.push_back(a.future);
  }
  const auto ed = anticipation::edit_distance_eval(cands, gt, world.config.num_nouns);
  return {{"verb_ED", ed.verb}, {"noun_ED", ed.noun}, {"action_ED", ed.action}, {"examples", gt.size()}};
}

io::Json ensemble_moment_files(const RunConfig& config, std::span<const fs::path> detections, const fs::path& out) {
  require(!detections.empty(), "ensemble_moment_files: no inputs");
  std::vector<std::vector<moments::DetectionOutput>> members;
  for (const auto& path : detections) {
    if (!fs::exists(path)) throw MissingDependency("detections not found: " + path.string());
    members.push_back(moments::read_detections(path));
  }
  std::vector<moments::MomentPrediction> preds;
  for (size_t i = 0; i < members.front().size(); ++i) {
    std::vector<moments::DetectionOutput> same;
    for (const auto& m : members) {
      require(m.size() == members.front().size() && m[i].clip_id == members.front()[i].clip_id,
              "ensemble_moment_files: inputs cover different clips");
      same.push_back(m[i]);
    }
    for (auto& p : moments::postprocess(moments::ensemble_detections(same), config.mq.nms_sigma,
                                        config.mq.score_floor, config.mq.max_per_category)) {
      preds.push_back(std::move(p));
    }
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  moments::write_predictions(out, preds);
  return evaluate_moments_file(config, out);
}

io::Json ensemble_grounding_files(const RunConfig& config, std::span<const fs::path> inputs,
                                  std::span<const double> weights, const fs::path& out) {
  require(!inputs.empty(), "ensemble_grounding_files: no inputs");
  std::vector<grounding::GroundingPredictions> sets;
  for (const auto& path : inputs) {
    if (!fs::exists(path)) throw MissingDependency("predictions not found: " + path.string());
    sets.push_back(grounding::read_predictions(path));
  }
  const auto w = weights.empty() ? ensemble::uniform_weights(sets.size())
                                 : std::vector<double>(weights.begin(), weights.end());
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  grounding::write_predictions(out, ensemble::merge_prediction_sets(sets, w));
  if (!fs::exists(world_dir(config, "grounding"))) return io::Json::object();
  return evaluate_grounding_file(config, Stage::kNlq, out);
}

}  // namespace egovideo::pipeline
