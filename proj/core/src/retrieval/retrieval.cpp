#include "egovideo/retrieval/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "egovideo/common/error.hpp"
#include "egovideo/features/features.hpp"
#include "egovideo/metrics/metrics.hpp"

namespace egovideo::retrieval {

namespace fs = std::filesystem;

namespace {

thread_local bool g_source_only = false;

struct SourceOnlyScope {
  SourceOnlyScope() { g_source_only = true; }
  ~SourceOnlyScope() { g_source_only = false; }
  SourceOnlyScope(const SourceOnlyScope&) = delete;
  SourceOnlyScope& operator=(const SourceOnlyScope&) = delete;
};

template <class T>
void get_if(const io::Json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

double jaccard(const std::set<int>& a, const std::set<int>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::vector<int> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  const double uni = static_cast<double>(a.size() + b.size() - inter.size());
  return static_cast<double>(inter.size()) / uni;
}

double ndcg_row(const std::vector<int>& order, const Matrix& rel, nn::Index row) {
  double dcg = 0.0;
  for (size_t r = 0; r < order.size(); ++r) dcg += rel(row, order[r]) / std::log2(static_cast<double>(r) + 2.0);
  std::vector<double> ideal(static_cast<size_t>(rel.cols()));
  for (nn::Index g = 0; g < rel.cols(); ++g) ideal[static_cast<size_t>(g)] = rel(row, g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (size_t r = 0; r < ideal.size(); ++r) idcg += ideal[r] / std::log2(static_cast<double>(r) + 2.0);
  return idcg > 0.0 ? dcg / idcg : -1.0;
}

void check_metric_inputs(const Matrix& sim, const Matrix& rel) {
  if (sim.rows() != rel.rows() || sim.cols() != rel.cols()) {
    throw InvalidArgument("retrieval metric: similarity and relevance shapes differ");
  }
  if ((rel.array() < 0.0).any() || (rel.array() > 1.0).any()) {
    throw InvalidArgument("retrieval metric: relevance outside [0, 1]");
  }
}

// Mean of per-row scores; rows scoring < 0 are excluded and counted.
std::pair<double, int> directional(const Matrix& sim, const Matrix& rel, bool ndcg) {
  double sum = 0.0;
  int used = 0, excluded = 0;
  for (nn::Index q = 0; q < sim.rows(); ++q) {
    const auto order = rank_gallery(sim, q);
    double score = -1.0;
    if (ndcg) {
      score = ndcg_row(order, rel, q);
    } else if ((rel.row(q).array() > 0.0).any()) {
      std::vector<bool> flags;
      for (int g : order) flags.push_back(rel(q, g) > 0.0);
      score = metrics::average_precision(flags);
    }
    if (score < 0.0) {
      ++excluded;
    } else {
      sum += score;
      ++used;
    }
  }
  return {used > 0 ? sum / used : 0.0, excluded};
}

DirectionalScores both_directions(const Matrix& sim, const Matrix& rel, bool ndcg) {
  check_metric_inputs(sim, rel);
  const auto [t2v, ex_t] = directional(sim, rel, ndcg);
  const Matrix sim_t = sim.transpose(), rel_t = rel.transpose();
  const auto [v2t, ex_v] = directional(sim_t, rel_t, ndcg);
  return {t2v, v2t, 0.5 * (t2v + v2t), ex_t, ex_v};
}

}  // namespace

// ---- recognition ----------------------------------------------------------------

void validate(const RecognitionConfig& c) {
  require(c.epochs >= 0, "recognition: epochs must be >= 0");
  require(c.lr > 0.0, "recognition: lr must be positive");
  require(c.batch_size >= 1, "recognition: batch size must be >= 1");
  require(c.warmup_epochs >= 0, "recognition: warmup must be >= 0");
}

io::Json to_json(const RecognitionConfig& c) {
  return {{"epochs", c.epochs},         {"lr", c.lr},
          {"batch_size", c.batch_size}, {"warmup_epochs", c.warmup_epochs},
          {"weight_decay", c.weight_decay}, {"seed", c.seed}};
}

RecognitionConfig recognition_config_from_json(const io::Json& j, RecognitionConfig c) {
  get_if(j, "epochs", c.epochs);
  get_if(j, "lr", c.lr);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "warmup_epochs", c.warmup_epochs);
  get_if(j, "weight_decay", c.weight_decay);
  get_if(j, "seed", c.seed);
  return c;
}

std::vector<encoders::LabeledClip> labeled_clips(const corpus::World& world,
                                                 std::span<const corpus::RecognitionAnnotation> annotations) {
  std::vector<encoders::LabeledClip> out;
  out.reserve(annotations.size());
  for (const auto& a : annotations) out.push_back({world.resolve(a.clip_ref), a.verb_id, a.noun_id});
  return out;
}

encoders::ActionClassifier recognize_train(const encoders::TwoTowerModel& backbone,
                                           std::span<const encoders::LabeledClip> train, int num_verbs,
                                           int num_nouns, const RecognitionConfig& config,
                                           std::function<void(int, double)> on_epoch) {
  validate(config);
  if (train.empty()) throw InvalidArgument("recognize_train: empty training set");
  const encoders::ActionClassifier init(backbone, num_verbs, num_nouns, mix_seed(config.seed, 0x6172ULL));
  encoders::ClassifierTrainOptions opts;
  opts.epochs = config.epochs;
  opts.lr = config.lr;
  opts.batch_size = config.batch_size;
  opts.warmup_epochs = config.warmup_epochs;
  opts.weight_decay = config.weight_decay;
  opts.seed = config.seed;
  opts.on_epoch = std::move(on_epoch);
  return encoders::train_classifier(init, train, opts);
}

RecognitionAccuracy recognition_accuracy(const encoders::ClassifierScores& scores,
                                         std::span<const corpus::ActionToken> labels) {
  if (scores.verb.rows() != static_cast<nn::Index>(labels.size()) || scores.noun.rows() != scores.verb.rows()) {
    throw InvalidArgument("recognition_accuracy: scores and labels disagree in length");
  }
  RecognitionAccuracy out;
  out.count = static_cast<int>(labels.size());
  if (labels.empty()) return out;
  std::vector<int> verbs, nouns;
  int action = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    verbs.push_back(labels[i].verb_id);
    nouns.push_back(labels[i].noun_id);
    const auto row = static_cast<nn::Index>(i);
    action += metrics::argmax_row(scores.verb, row) == labels[i].verb_id &&
              metrics::argmax_row(scores.noun, row) == labels[i].noun_id;
  }
  out.verb_top1 = metrics::topk_accuracy(scores.verb, verbs, 1);
  out.noun_top1 = metrics::topk_accuracy(scores.noun, nouns, 1);
  out.verb_top5 = metrics::topk_accuracy(scores.verb, verbs, 5);
  out.noun_top5 = metrics::topk_accuracy(scores.noun, nouns, 5);
  out.action_top1 = static_cast<double>(action) / static_cast<double>(labels.size());
  return out;
}

RecognitionAccuracy evaluate_recognition(const encoders::ActionClassifier& model,
                                         std::span<const encoders::LabeledClip> data) {
  std::vector<corpus::FrameView> views;
  std::vector<corpus::ActionToken> labels;
  for (const auto& d : data) {
    views.push_back(d.frames);
    labels.push_back({d.verb_id, d.noun_id});
  }
  if (views.empty()) return {};
  return recognition_accuracy(encoders::predict_logits(model, views), labels);
}

void write_recognition_csv(const fs::path& path, std::span<const RecognitionRow> rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << "clip_id,verb_id,noun_id\n";
  for (const auto& r : rows) out << r.clip_id << ',' << r.verb_id << ',' << r.noun_id << '\n';
}

std::vector<RecognitionRow> read_recognition_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingDependency("recognition file not found: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "clip_id,verb_id,noun_id") throw InvalidArgument("unexpected recognition CSV header in " + path.string());
  std::vector<RecognitionRow> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.rfind(',');
    const auto b = line.rfind(',', a - 1);
    if (a == std::string::npos || b == std::string::npos) throw InvalidArgument("malformed CSV row: " + line);
    out.push_back({line.substr(0, b), std::stoi(line.substr(b + 1, a - b - 1)), std::stoi(line.substr(a + 1))});
  }
  return out;
}

// ---- retrieval metrics -------------------------------------------------------------

Matrix similarity_matrix(const Matrix& video, const Matrix& text) {
  if (video.cols() != text.cols()) throw InvalidArgument("similarity_matrix: embedding dims differ");
  return text * video.transpose();
}

RelevanceMatrix build_relevance(std::span<const std::string> queries, std::span<const std::string> gallery,
                                const corpus::Vocabulary& vocab) {
  RelevanceMatrix out;
  out.values = Matrix::Zero(static_cast<nn::Index>(queries.size()), static_cast<nn::Index>(gallery.size()));
  std::vector<corpus::Vocabulary::ParsedCaption> g;
  for (const auto& c : gallery) g.push_back(vocab.parse(c));
  for (size_t q = 0; q < queries.size(); ++q) {
    const auto pq = vocab.parse(queries[q]);
    if (pq.verbs.empty() && pq.nouns.empty()) {
      out.unparsed_rows.push_back(static_cast<int>(q));
      continue;
    }
    for (size_t k = 0; k < g.size(); ++k) {
      out.values(static_cast<nn::Index>(q), static_cast<nn::Index>(k)) =
          0.5 * (jaccard(pq.verbs, g[k].verbs) + jaccard(pq.nouns, g[k].nouns));
    }
  }
  out.row_ids.assign(queries.begin(), queries.end());
  out.col_ids.assign(gallery.begin(), gallery.end());
  return out;
}

std::vector<int> rank_gallery(const Matrix& sim, nn::Index row) {
  std::vector<int> order(static_cast<size_t>(sim.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sim(row, a) > sim(row, b); });
  return order;
}

double paired_recall_at_k(const Matrix& sim, int k) {
  if (sim.rows() != sim.cols()) throw InvalidArgument("paired_recall_at_k: similarity must be square");
  if (k < 1) throw InvalidArgument("paired_recall_at_k: k must be >= 1");
  if (sim.rows() == 0) return 0.0;
  int hits = 0;
  for (nn::Index q = 0; q < sim.rows(); ++q) {
    const auto order = rank_gallery(sim, q);
    const auto end = order.begin() + std::min<nn::Index>(k, sim.cols());
    hits += std::find(order.begin(), end, static_cast<int>(q)) != end;
  }
  return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

DirectionalScores retrieval_map(const Matrix& sim, const Matrix& rel) { return both_directions(sim, rel, false); }

DirectionalScores retrieval_ndcg(const Matrix& sim, const Matrix& rel) { return both_directions(sim, rel, true); }

// ---- retrieval fine-tuning ---------------------------------------------------------

void validate(const RetrievalConfig& c) {
  require(c.epochs >= 0, "retrieval: epochs must be >= 0");
  require(c.lr > 0.0, "retrieval: lr must be positive");
  require(c.batch_size >= 2, "retrieval: contrastive batches need at least two pairs");
  require(c.warmup_epochs >= 0, "retrieval: warmup must be >= 0");
}

io::Json to_json(const RetrievalConfig& c) {
  return {{"epochs", c.epochs},         {"lr", c.lr},
          {"batch_size", c.batch_size}, {"warmup_epochs", c.warmup_epochs},
          {"weight_decay", c.weight_decay}, {"seed", c.seed}};
}

RetrievalConfig retrieval_config_from_json(const io::Json& j, RetrievalConfig c) {
  get_if(j, "epochs", c.epochs);
  get_if(j, "lr", c.lr);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "warmup_epochs", c.warmup_epochs);
  get_if(j, "weight_decay", c.weight_decay);
  get_if(j, "seed", c.seed);
  return c;
}

std::vector<encoders::TrainingPair> retrieval_pairs(const corpus::World& world,
                                                    std::span<const corpus::RecognitionAnnotation> annotations) {
  std::vector<encoders::TrainingPair> out;
  for (const auto& a : annotations) out.push_back({world.resolve(a.clip_ref), a.caption});
  return out;
}

encoders::PretrainResult finetune_retrieval(const encoders::TwoTowerModel& stage2,
                                            std::span<const encoders::TrainingPair> pairs,
                                            const RetrievalConfig& config) {
  validate(config);
  if (pairs.empty()) throw InvalidArgument("finetune_retrieval: empty corpus");
  encoders::PretrainOptions opts;
  opts.epochs = config.epochs;
  opts.lr = config.lr;
  opts.batch_size = config.batch_size;
  opts.warmup_fraction =
      config.epochs > 0 ? std::min(1.0, static_cast<double>(config.warmup_epochs) / config.epochs) : 0.0;
  opts.weight_decay = config.weight_decay;
  opts.seed = mix_seed(config.seed, 0x6d6972ULL);
  return encoders::post_pretrain(stage2, pairs, opts);
}

Embeddings embed_pairs(const encoders::TwoTowerModel& model, std::span<const encoders::TrainingPair> pairs) {
  nn::NoGradGuard guard;
  Embeddings out;
  out.video = Matrix(static_cast<nn::Index>(pairs.size()), model.config().embed_dim);
  out.text = Matrix(static_cast<nn::Index>(pairs.size()), model.config().embed_dim);
  constexpr size_t kBatch = 64;
  for (size_t start = 0; start < pairs.size(); start += kBatch) {
    const size_t end = std::min(pairs.size(), start + kBatch);
    std::vector<corpus::FrameView> views;
    std::vector<std::string> captions;
    for (size_t i = start; i < end; ++i) {
      views.push_back(pairs[i].frames);
      captions.push_back(pairs[i].caption);
    }
    const auto n = static_cast<nn::Index>(end - start);
    out.video.middleRows(static_cast<nn::Index>(start), n) = model.embed_video(views).value();
    out.text.middleRows(static_cast<nn::Index>(start), n) = model.embed_text(captions).value();
  }
  return out;
}

RetrievalReport evaluate_retrieval(const encoders::TwoTowerModel& model,
                                   std::span<const encoders::TrainingPair> pairs) {
  const auto emb = embed_pairs(model, pairs);
  std::vector<std::string> captions;
  for (const auto& p : pairs) captions.push_back(p.caption);
  const auto rel = build_relevance(captions, captions, model.vocabulary());
  const Matrix sim = similarity_matrix(emb.video, emb.text);
  return {retrieval_map(sim, rel.values), retrieval_ndcg(sim, rel.values)};
}

void write_embeddings(const fs::path& path, const Matrix& rows, const std::string& id) {
  features::SnippetFeatureTrack t;
  t.features = rows;
  t.snippet_len = 1;
  t.stride = 1;
  t.fps = 1.0;
  t.clip_id = id;
  t.duration_s = static_cast<double>(rows.rows());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  features::write_track(path, t);
}

Matrix read_embeddings(const fs::path& path) { return features::read_track(path).features; }

// ---- domain adaptation ---------------------------------------------------------------

const std::vector<corpus::ActionToken>& HeldOutLabels::get() const {
  if (g_source_only) throw InvariantViolation("target labels read during source-only training");
  return labels_;
}

DomainSplit::Built DomainSplit::make(std::vector<encoders::LabeledClip> source, std::vector<std::string> source_ids,
                                     std::vector<encoders::LabeledClip> target,
                                     std::vector<std::string> target_ids) {
  if (source.size() != source_ids.size() || target.size() != target_ids.size()) {
    throw InvalidArgument("DomainSplit: ids and clips disagree in length");
  }
  const std::unordered_set<std::string> src(source_ids.begin(), source_ids.end());
  for (const auto& id : target_ids) {
    if (src.count(id)) throw InvalidArgument("DomainSplit: clip " + id + " is on both sides");
  }
  Built out;
  out.split.source_ = std::move(source);
  out.split.source_ids_ = std::move(source_ids);
  out.split.target_ids_ = std::move(target_ids);
  for (const auto& t : target) {
    out.split.target_.push_back(t.frames);
    out.target_labels.labels_.push_back({t.verb_id, t.noun_id});
  }
  return out;
}

bool source_only_training_active() { return g_source_only; }

encoders::ActionClassifier domain_adapt_train(const encoders::TwoTowerModel& backbone, const DomainSplit& split,
                                              int num_verbs, int num_nouns, const RecognitionConfig& config,
                                              std::function<void(int, double)> on_epoch) {
  SourceOnlyScope scope;
  return recognize_train(backbone, split.source(), num_verbs, num_nouns, config, std::move(on_epoch));
}

RecognitionAccuracy evaluate_target(const encoders::ActionClassifier& model, const DomainSplit& split,
                                    const HeldOutLabels& labels) {
  const auto& y = labels.get();
  if (y.size() != split.target().size()) throw InvalidArgument("evaluate_target: label count mismatch");
  if (y.empty()) return {};
  return recognition_accuracy(encoders::predict_logits(model, split.target()), y);
}

}  // namespace egovideo::retrieval
