#include "egovideo/moments/moments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "egovideo/common/error.hpp"
#include "egovideo/ensemble/ensemble.hpp"
#include "egovideo/metrics/metrics.hpp"
#include "egovideo/nn/optim.hpp"

namespace egovideo::moments {

namespace fs = std::filesystem;

void validate(const MomentConfig& c) {
  require(c.num_categories >= 1, "moments: need at least one category");
  require(c.levels >= 1, "moments: levels must be >= 1");
  require(c.width >= 1 && c.heads >= 1 && c.width % c.heads == 0, "moments: width must divide into heads");
  require(c.blocks_per_level >= 1, "moments: blocks_per_level must be >= 1");
  require(c.nms_sigma > 0.0, "moments: soft-NMS sigma must be positive");
  require(c.score_floor >= 0.0, "moments: score floor must be nonnegative");
  require(c.max_per_category >= 1, "moments: max_per_category must be positive");
  require(c.batch_size >= 1 && c.epochs >= 0 && c.warmup_epochs >= 0, "moments: invalid schedule");
  require(c.epochs == 0 || c.warmup_epochs < c.epochs, "moments: warmup must be shorter than training");
  require(c.lr > 0.0, "moments: learning rate must be positive");
  require(c.dropout >= 0.0 && c.dropout < 1.0, "moments: dropout must lie in [0, 1)");
}

io::Json to_json(const MomentConfig& c) {
  return {{"num_categories", c.num_categories},
          {"levels", c.levels},
          {"width", c.width},
          {"heads", c.heads},
          {"blocks_per_level", c.blocks_per_level},
          {"use_gate", c.use_gate},
          {"focal_alpha", c.focal_alpha},
          {"focal_gamma", c.focal_gamma},
          {"reg_weight", c.reg_weight},
          {"gate_weight", c.gate_weight},
          {"nms_sigma", c.nms_sigma},
          {"score_floor", c.score_floor},
          {"max_per_category", c.max_per_category},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"dropout", c.dropout},
          {"seed", c.seed}};
}

MomentConfig moment_config_from_json(const io::Json& j, MomentConfig c) {
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("num_categories", c.num_categories);
  get("levels", c.levels);
  get("width", c.width);
  get("heads", c.heads);
  get("blocks_per_level", c.blocks_per_level);
  get("use_gate", c.use_gate);
  get("focal_alpha", c.focal_alpha);
  get("focal_gamma", c.focal_gamma);
  get("reg_weight", c.reg_weight);
  get("gate_weight", c.gate_weight);
  get("nms_sigma", c.nms_sigma);
  get("score_floor", c.score_floor);
  get("max_per_category", c.max_per_category);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("warmup_epochs", c.warmup_epochs);
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("dropout", c.dropout);
  get("seed", c.seed);
  return c;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void decode_candidates(DetectionOutput& out) {
  const auto p = static_cast<Eigen::Index>(out.anchors.size());
  if (out.logits.rows() != p || out.offsets.rows() != p || out.offsets.cols() != 2 ||
      (out.gate_logits.size() != 0 && out.gate_logits.rows() != p)) {
    throw InvalidArgument("detection output shapes disagree with its anchors");
  }
  std::vector<TemporalSegment> boxes;
  std::vector<double> weights;
  for (Eigen::Index i = 0; i < p; ++i) {
    boxes.push_back(grounding::decode_offsets(out.anchors[static_cast<size_t>(i)], out.offsets(i, 0),
                                              out.offsets(i, 1), out.duration_s));
    weights.push_back(out.gate_logits.size() == 0 ? 1.0 : sigmoid(out.gate_logits(i, 0)));
  }
  out.candidates.assign(static_cast<size_t>(out.logits.cols()), {});
  for (Eigen::Index c = 0; c < out.logits.cols(); ++c) {
    auto& list = out.candidates[static_cast<size_t>(c)];
    for (Eigen::Index i = 0; i < p; ++i) {
      TemporalSegment s = boxes[static_cast<size_t>(i)];
      s.score = sigmoid(out.logits(i, c)) * weights[static_cast<size_t>(i)];
      s.label = static_cast<int>(c);
      list.push_back(s);
    }
    std::stable_sort(list.begin(), list.end(),
                     [](const TemporalSegment& a, const TemporalSegment& b) { return a.score > b.score; });
  }
}

MomentModel::MomentModel(int feature_dim, MomentConfig config) : feature_dim_(feature_dim), config_(config) {
  validate(config_);
  require(feature_dim >= 1, "moments: feature dimension must be positive");
  Rng rng(mix_seed(config_.seed, 0x6d6f6d73ULL));
  pyramid_ = grounding::TemporalPyramidEncoder(feature_dim, config_.width, config_.heads, config_.levels,
                                               config_.blocks_per_level, 0, rng);
  cls_head_ = nn::Mlp(config_.width, config_.width, config_.num_categories, rng);
  cls_head_.fc2.bias.mutable_value().setConstant(-std::log(99.0));
  reg_hidden_ = nn::Linear(config_.width, config_.width, rng);
  reg_out_ = nn::Linear(config_.width, 2, rng);
  reg_out_.bias.mutable_value().setConstant(1.0);
  gate_head_ = nn::Linear(config_.width, 1, rng);
}

MomentModel MomentModel::clone() const {
  MomentModel copy(feature_dim_, config_);
  nn::copy_parameter_values(parameters(), copy.parameters());
  return copy;
}

MomentModel::Heads MomentModel::forward(const features::SnippetFeatureTrack& track,
                                        const nn::ForwardContext& ctx) const {
  if (track.length() == 0) throw InvalidArgument("detect_moments: empty track");
  if (track.dim() != feature_dim_) {
    throw InvalidArgument("moment model expects " + std::to_string(feature_dim_) + "-d features, got " +
                          std::to_string(track.dim()));
  }
  const Var h = pyramid_.forward(nn::constant(track.features), Var(), Var(), ctx);
  Heads out;
  out.logits = cls_head_.forward(h);
  out.offsets = nn::relu(reg_out_.forward(nn::gelu(reg_hidden_.forward(h))));
  if (config_.use_gate) out.gate_logits = gate_head_.forward(h);
  out.anchors = grounding::pyramid_anchors(track, config_.levels);
  return out;
}

void MomentModel::zero_regression_head() const {
  reg_out_.weight.mutable_value().setZero();
  reg_out_.bias.mutable_value().setZero();
}

nn::ParamList MomentModel::parameters() const {
  nn::ParamList out;
  pyramid_.collect("mq.encoder", out);
  cls_head_.collect("mq.cls", out);
  reg_hidden_.collect("mq.reg.hidden", out);
  reg_out_.collect("mq.reg.out", out);
  if (config_.use_gate) gate_head_.collect("mq.gate", out);
  return out;
}

DetectionOutput detect_moments(const features::SnippetFeatureTrack& track, const MomentModel& model) {
  nn::NoGradGuard guard;
  const auto heads = model.forward(track);
  DetectionOutput out;
  out.clip_id = track.clip_id;
  out.duration_s = track.duration_s;
  out.anchors = heads.anchors;
  out.logits = heads.logits.value();
  out.offsets = heads.offsets.value();
  if (heads.gate_logits.defined()) out.gate_logits = heads.gate_logits.value();
  decode_candidates(out);
  return out;
}

std::vector<TemporalSegment> soft_nms(std::vector<TemporalSegment> candidates, double sigma, double score_floor) {
  require(sigma > 0.0, "soft_nms: sigma must be positive");
  std::vector<TemporalSegment> remaining;
  for (auto& c : candidates) {
    if (c.score >= score_floor) remaining.push_back(c);
  }
  std::vector<TemporalSegment> kept;
  while (!remaining.empty()) {
    size_t best = 0;
    for (size_t i = 1; i < remaining.size(); ++i) {
      if (remaining[i].score > remaining[best].score) best = i;
    }
    const TemporalSegment chosen = remaining[best];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    kept.push_back(chosen);
    std::vector<TemporalSegment> next;
    for (auto& r : remaining) {
      const double iou = metrics::tiou(chosen, r);
      r.score *= std::exp(-iou * iou / sigma);
      if (r.score >= score_floor) next.push_back(r);
    }
    remaining = std::move(next);
  }
  return kept;
}

std::vector<MomentPrediction> postprocess(const DetectionOutput& out, double sigma, double score_floor,
                                          int max_per_category) {
  std::vector<MomentPrediction> preds;
  for (size_t c = 0; c < out.candidates.size(); ++c) {
    auto segs = soft_nms(out.candidates[c], sigma, score_floor);
    if (static_cast<int>(segs.size()) > max_per_category) segs.resize(static_cast<size_t>(max_per_category));
    if (segs.empty()) continue;
    preds.push_back({out.clip_id, static_cast<int>(c), std::move(segs)});
  }
  return preds;
}

DetectionOutput ensemble_detections(std::span<const DetectionOutput> outputs) {
  require(!outputs.empty(), "ensemble_detections: no outputs");
  const auto& first = outputs.front();
  for (const auto& o : outputs) {
    bool same = o.clip_id == first.clip_id && o.anchors.size() == first.anchors.size() &&
                o.logits.rows() == first.logits.rows() && o.logits.cols() == first.logits.cols() &&
                o.gate_logits.size() == first.gate_logits.size();
    for (size_t i = 0; same && i < o.anchors.size(); ++i) {
      same = o.anchors[i].level == first.anchors[i].level && o.anchors[i].position == first.anchors[i].position;
    }
    if (!same) throw InvalidArgument("ensemble_detections: outputs have different pyramid geometry");
  }
  auto mean_of = [&](auto member) {
    std::vector<Matrix> members;
    for (const auto& o : outputs) members.push_back(o.*member);
    return ensemble::average_logits(members);
  };
  DetectionOutput out;
  out.clip_id = first.clip_id;
  out.duration_s = first.duration_s;
  out.anchors = first.anchors;
  out.logits = mean_of(&DetectionOutput::logits);
  out.offsets = mean_of(&DetectionOutput::offsets);
  out.gate_logits = mean_of(&DetectionOutput::gate_logits);
  decode_candidates(out);
  return out;
}

namespace {

struct ClipTargets {
  const features::SnippetFeatureTrack* track = nullptr;
  Matrix cls;                 // P x C
  Matrix foreground;          // P x 1
  std::vector<int> positive;  // anchor indices
  Matrix reg;                 // |positive| x 2
};

ClipTargets make_targets(const features::SnippetFeatureTrack& track, const std::vector<TemporalSegment>& gts,
                         const std::vector<int>& cats, int levels, int num_categories) {
  const auto anchors = grounding::pyramid_anchors(track, levels);
  const auto p = static_cast<Eigen::Index>(anchors.size());
  ClipTargets t;
  t.track = &track;
  t.cls = Matrix::Zero(p, num_categories);
  t.foreground = Matrix::Zero(p, 1);
  // Each anchor regresses the shortest gt that contains its centre.
  std::vector<int> owner(anchors.size(), -1);
  for (size_t i = 0; i < anchors.size(); ++i) {
    for (size_t g = 0; g < gts.size(); ++g) {
      const double c = anchors[i].center_s;
      if (c < gts[g].start_s || c > gts[g].end_s) continue;
      if (owner[i] < 0 || gts[g].length() < gts[static_cast<size_t>(owner[i])].length()) owner[i] = static_cast<int>(g);
    }
  }
  for (size_t g = 0; g < gts.size(); ++g) {
    if (std::find(owner.begin(), owner.end(), static_cast<int>(g)) != owner.end()) continue;
    const double mid = 0.5 * (gts[g].start_s + gts[g].end_s);
    size_t best = 0;
    for (size_t i = 0; i < anchors.size() && anchors[i].level == 0; ++i) {
      if (std::abs(anchors[i].center_s - mid) < std::abs(anchors[best].center_s - mid)) best = i;
    }
    owner[best] = static_cast<int>(g);
  }
  for (size_t i = 0; i < anchors.size(); ++i) {
    if (owner[i] < 0) continue;
    const auto& g = gts[static_cast<size_t>(owner[i])];
    t.positive.push_back(static_cast<int>(i));
    t.cls(static_cast<Eigen::Index>(i), cats[static_cast<size_t>(owner[i])]) = 1.0;
    t.foreground(static_cast<Eigen::Index>(i), 0) = 1.0;
  }
  t.reg.resize(static_cast<Eigen::Index>(t.positive.size()), 2);
  for (size_t k = 0; k < t.positive.size(); ++k) {
    const auto& a = anchors[static_cast<size_t>(t.positive[k])];
    const auto& g = gts[static_cast<size_t>(owner[static_cast<size_t>(t.positive[k])])];
    t.reg(static_cast<Eigen::Index>(k), 0) = std::max(0.0, (a.center_s - g.start_s) / a.unit_s);
    t.reg(static_cast<Eigen::Index>(k), 1) = std::max(0.0, (g.end_s - a.center_s) / a.unit_s);
  }
  return t;
}

}  // namespace

MomentModel train_moments(const MomentModel& init, std::span<const corpus::MomentAnnotation> annotations,
                          const TrackIndex& tracks, std::vector<MomentTrainLog>* log) {
  if (annotations.empty()) throw InvalidArgument("train_moments: empty training set");
  const MomentConfig& cfg = init.config();
  MomentModel model = init.clone();

  std::map<std::string, std::pair<std::vector<TemporalSegment>, std::vector<int>>> by_clip;
  for (const auto& a : annotations) {
    if (a.category_id < 0 || a.category_id >= cfg.num_categories) {
      throw InvalidArgument("train_moments: category " + std::to_string(a.category_id) + " out of range");
    }
    auto& [segs, cats] = by_clip[a.clip_id];
    for (const auto& s : a.segments) {
      if (!s.valid()) throw InvalidArgument("train_moments: malformed segment in " + a.clip_id);
      segs.push_back(s);
      cats.push_back(a.category_id);
    }
  }
  std::vector<ClipTargets> data;
  for (const auto& [clip_id, sc] : by_clip) {
    const auto it = tracks.find(clip_id);
    if (it == tracks.end()) throw MissingDependency("no feature track for clip " + clip_id);
    data.push_back(make_targets(it->second, sc.first, sc.second, cfg.levels, cfg.num_categories));
  }
  if (cfg.epochs == 0) return model;

  nn::AdamW opt(model.parameters(), {.weight_decay = cfg.weight_decay});
  const long long per_epoch = (static_cast<long long>(data.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const long long total = per_epoch * cfg.epochs;
  const long long warmup = std::min<long long>(per_epoch * cfg.warmup_epochs, total - 1);
  Rng rng(mix_seed(cfg.seed, 0x6d71ULL));
  const nn::ForwardContext ctx{true, cfg.dropout, 0.0, &rng};
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Var loss;
      for (size_t i = start; i < end; ++i) {
        const auto& t = data[order[i]];
        const auto heads = model.forward(*t.track, ctx);
        const double npos = static_cast<double>(std::max<size_t>(1, t.positive.size()));
        // The gate weights the detection losses without receiving their gradient.
        Matrix w = Matrix::Ones(t.cls.rows(), 1);
        if (heads.gate_logits.defined()) {
          w = heads.gate_logits.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
        }
        Matrix w_pos(static_cast<Eigen::Index>(t.positive.size()), 1);
        for (size_t k = 0; k < t.positive.size(); ++k) w_pos(static_cast<Eigen::Index>(k), 0) = w(t.positive[k], 0);
        Var l = nn::sigmoid_focal_loss(heads.logits, t.cls, w, cfg.focal_alpha, cfg.focal_gamma, npos);
        if (!t.positive.empty()) {
          Var reg = nn::interval_iou_loss(nn::gather_rows(heads.offsets, t.positive), t.reg, w_pos, npos);
          l = nn::add(l, nn::scale(reg, cfg.reg_weight));
        }
        if (heads.gate_logits.defined()) {
          l = nn::add(l, nn::scale(nn::bce_with_logits(heads.gate_logits, t.foreground), cfg.gate_weight));
        }
        loss = loss.defined() ? nn::add(loss, l) : l;
      }
      loss = nn::scale(loss, 1.0 / static_cast<double>(end - start));
      nn::backward(loss);
      opt.step(nn::warmup_cosine_lr(opt.steps(), warmup, total, cfg.lr));
      sum += loss.item();
    }
    if (log) log->push_back({epoch, sum / static_cast<double>(per_epoch)});
  }
  return model;
}

MapResult average_map(std::span<const MomentPrediction> predictions, std::span<const corpus::MomentAnnotation> gt,
                      int num_categories, std::span<const double> tious) {
  require(num_categories >= 1, "average_map: need at least one category");
  MapResult result;
  result.tious.assign(tious.begin(), tious.end());

  // gt instances per category, each tagged with its clip.
  std::vector<std::vector<std::pair<std::string, TemporalSegment>>> gts(static_cast<size_t>(num_categories));
  std::map<std::pair<std::string, int>, std::vector<TemporalSegment>> gt_by_key;
  for (const auto& a : gt) {
    require(a.category_id >= 0 && a.category_id < num_categories, "average_map: gt category out of range");
    for (const auto& s : a.segments) {
      require(s.valid(), "average_map: malformed gt segment");
      gts[static_cast<size_t>(a.category_id)].emplace_back(a.clip_id, s);
      gt_by_key[{a.clip_id, a.category_id}].push_back(s);
    }
  }
  struct Pred {
    std::string clip;
    TemporalSegment seg;
  };
  std::vector<std::vector<Pred>> preds(static_cast<size_t>(num_categories));
  std::map<std::pair<std::string, int>, std::vector<TemporalSegment>> pred_by_key;
  for (const auto& p : predictions) {
    if (p.category_id < 0 || p.category_id >= num_categories) {
      result.unknown_category_predictions += static_cast<int>(p.segments.size());
      continue;
    }
    for (const auto& s : p.segments) {
      require(s.valid(), "average_map: malformed predicted segment");
      preds[static_cast<size_t>(p.category_id)].push_back({p.clip_id, s});
      pred_by_key[{p.clip_id, p.category_id}].push_back(s);
    }
  }
  for (auto& list : preds) {
    std::stable_sort(list.begin(), list.end(), [](const Pred& a, const Pred& b) { return a.seg.score > b.seg.score; });
  }

  for (double t : tious) {
    double sum_ap = 0.0;
    int counted = 0;
    for (int c = 0; c < num_categories; ++c) {
      const auto& g = gts[static_cast<size_t>(c)];
      if (g.empty()) continue;
      std::vector<bool> used(g.size(), false);
      std::vector<bool> hits;
      for (const auto& p : preds[static_cast<size_t>(c)]) {
        int best = -1;
        double best_iou = -1.0;
        for (size_t k = 0; k < g.size(); ++k) {
          if (used[k] || g[k].first != p.clip) continue;
          const double iou = metrics::tiou(p.seg, g[k].second);
          if (iou >= t && iou > best_iou) {
            best_iou = iou;
            best = static_cast<int>(k);
          }
        }
        if (best >= 0) used[static_cast<size_t>(best)] = true;
        hits.push_back(best >= 0);
      }
      // average_precision normalizes by hits; rescale to the gt count.
      const double n_hits = static_cast<double>(std::count(hits.begin(), hits.end(), true));
      const double ap = n_hits == 0 ? 0.0 : metrics::average_precision(hits) * n_hits / static_cast<double>(g.size());
      sum_ap += ap;
      ++counted;
    }
    result.map_per_tiou.push_back(counted == 0 ? 0.0 : sum_ap / counted);
  }
  if (!result.map_per_tiou.empty()) {
    result.average_map = std::accumulate(result.map_per_tiou.begin(), result.map_per_tiou.end(), 0.0) /
                         static_cast<double>(result.map_per_tiou.size());
  }

  int total = 0, matched = 0;
  for (const auto& [key, g] : gt_by_key) {
    total += static_cast<int>(g.size());
    const auto it = pred_by_key.find(key);
    if (it == pred_by_key.end()) continue;
    auto ranked = it->second;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const TemporalSegment& a, const TemporalSegment& b) { return a.score > b.score; });
    if (ranked.size() > g.size()) ranked.resize(g.size());
    std::vector<bool> used(g.size(), false);
    for (const auto& p : ranked) {
      int best = -1;
      double best_iou = -1.0;
      for (size_t k = 0; k < g.size(); ++k) {
        if (used[k]) continue;
        const double iou = metrics::tiou(p, g[k]);
        if (iou >= 0.5 && iou > best_iou) {
          best_iou = iou;
          best = static_cast<int>(k);
        }
      }
      if (best >= 0) {
        used[static_cast<size_t>(best)] = true;
        ++matched;
      }
    }
  }
  result.recall_1x_at_05 = total == 0 ? 0.0 : static_cast<double>(matched) / total;
  return result;
}

void write_predictions(const fs::path& path, std::span<const MomentPrediction> predictions) {
  std::vector<io::Json> records;
  for (const auto& p : predictions) {
    io::Json arr = io::Json::array();
    for (const auto& s : p.segments) arr.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"score", s.score}});
    records.push_back({{"clip_id", p.clip_id}, {"category_id", p.category_id}, {"segments", arr}});
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_jsonl(path, records);
}

std::vector<MomentPrediction> read_predictions(const fs::path& path) {
  if (!fs::exists(path)) throw MissingDependency("prediction file not found: " + path.string());
  std::vector<MomentPrediction> out;
  for (const auto& r : io::read_jsonl(path)) {
    MomentPrediction p{r.at("clip_id").get<std::string>(), r.at("category_id").get<int>(), {}};
    for (const auto& s : r.at("segments")) {
      TemporalSegment seg{s.at("start_s").get<double>(), s.at("end_s").get<double>(), s.value("score", 0.0),
                          p.category_id};
      if (!seg.valid()) throw InvalidArgument("malformed segment in " + path.string());
      p.segments.push_back(seg);
    }
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

io::Json matrix_json(const Matrix& m) {
  io::Json rows = io::Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    io::Json row = io::Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from(const io::Json& rows, Eigen::Index cols_if_empty) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix m(n, n == 0 ? cols_if_empty : static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)].get<double>();
  return m;
}

}  // namespace

void write_detections(const fs::path& path, std::span<const DetectionOutput> outputs) {
  std::vector<io::Json> records;
  for (const auto& o : outputs) {
    io::Json anchors = io::Json::array();
    for (const auto& a : o.anchors) anchors.push_back({a.level, a.position, a.center_s, a.unit_s});
    records.push_back({{"clip_id", o.clip_id},
                       {"duration_s", o.duration_s},
                       {"anchors", anchors},
                       {"logits", matrix_json(o.logits)},
                       {"offsets", matrix_json(o.offsets)},
                       {"gate_logits", matrix_json(o.gate_logits)}});
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_jsonl(path, records);
}

std::vector<DetectionOutput> read_detections(const fs::path& path) {
  if (!fs::exists(path)) throw MissingDependency("detection file not found: " + path.string());
  std::vector<DetectionOutput> out;
  for (const auto& r : io::read_jsonl(path)) {
    DetectionOutput o;
    o.clip_id = r.at("clip_id").get<std::string>();
    o.duration_s = r.at("duration_s").get<double>();
    for (const auto& a : r.at("anchors")) {
      o.anchors.push_back({a[0].get<int>(), a[1].get<int>(), a[2].get<double>(), a[3].get<double>()});
    }
    o.logits = matrix_from(r.at("logits"), 0);
    o.offsets = matrix_from(r.at("offsets"), 2);
    o.gate_logits = matrix_from(r.at("gate_logits"), 0);
    if (o.gate_logits.rows() == 0) o.gate_logits.resize(0, 0);
    decode_candidates(o);
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace egovideo::moments
