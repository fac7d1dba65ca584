#include "egovideo/grounding/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "egovideo/common/error.hpp"
#include "egovideo/metrics/metrics.hpp"
#include "egovideo/nn/optim.hpp"

namespace egovideo::grounding {

namespace fs = std::filesystem;

Matrix downsample_matrix(int n) {
  require(n >= 1, "downsample_matrix: empty input");
  const int m = (n + 1) / 2;
  Matrix p = Matrix::Zero(m, n);
  for (int j = 0; j < m; ++j) {
    if (2 * j + 1 < n) {
      p(j, 2 * j) = 0.5;
      p(j, 2 * j + 1) = 0.5;
    } else {
      p(j, 2 * j) = 1.0;
    }
  }
  return p;
}

std::vector<PyramidLevel> build_pyramid(const SnippetFeatureTrack& track, int levels) {
  require(track.length() >= 1, "build_pyramid: empty track");
  require(levels >= 1, "build_pyramid: need at least one level");
  require(track.fps > 0.0, "build_pyramid: track has no frame rate");
  std::vector<PyramidLevel> out;
  PyramidLevel base;
  base.features = track.features;
  base.unit_s = track.stride / track.fps;
  for (int i = 0; i < track.length(); ++i) base.stamps_s.push_back(track.snippet_center_s(i));
  out.push_back(std::move(base));
  for (int l = 1; l < levels; ++l) {
    const auto& prev = out.back();
    const int n = static_cast<int>(prev.stamps_s.size());
    const Matrix p = downsample_matrix(n);
    PyramidLevel next;
    next.features = p * prev.features;
    next.unit_s = prev.unit_s * 2.0;
    for (int j = 0; j < p.rows(); ++j) {
      next.stamps_s.push_back(2 * j + 1 < n ? 0.5 * (prev.stamps_s[2 * j] + prev.stamps_s[2 * j + 1])
                                            : prev.stamps_s[2 * j]);
    }
    out.push_back(std::move(next));
  }
  return out;
}

std::vector<Anchor> pyramid_anchors(const SnippetFeatureTrack& track, int levels) {
  SnippetFeatureTrack stamps_only = track;
  stamps_only.features = Matrix::Zero(track.length(), 1);
  std::vector<Anchor> out;
  const auto pyramid = build_pyramid(stamps_only, levels);
  for (int l = 0; l < levels; ++l) {
    const auto& lv = pyramid[static_cast<size_t>(l)];
    for (size_t j = 0; j < lv.stamps_s.size(); ++j) {
      out.push_back({l, static_cast<int>(j), lv.stamps_s[j], lv.unit_s});
    }
  }
  return out;
}

TemporalSegment decode_offsets(const Anchor& a, double left, double right, double duration_s) {
  double s = a.center_s - left * a.unit_s;
  double e = a.center_s + right * a.unit_s;
  s = std::clamp(s, 0.0, duration_s);
  e = std::clamp(e, s, duration_s);
  return {s, e, 0.0, std::nullopt};
}

TemporalPyramidEncoder::TemporalPyramidEncoder(int in_dim, int width, int heads, int levels, int blocks_per_level,
                                               int context_dim, Rng& rng)
    : levels_(levels), width_(width), in_proj_(in_dim, width, rng), out_norm_(width) {
  if (context_dim > 0) context_proj_ = nn::Linear(context_dim, width, rng);
  for (int l = 0; l < levels; ++l) {
    std::vector<nn::SelfAttentionBlock> level;
    for (int b = 0; b < blocks_per_level; ++b) level.emplace_back(width, heads, 2 * width, rng);
    blocks_.push_back(std::move(level));
    if (context_dim > 0) cross_.emplace_back(width, heads, rng);
  }
}

Var TemporalPyramidEncoder::forward(const Var& x, const Var& input_bias, const Var& context,
                                    const nn::ForwardContext& ctx) const {
  Var h = in_proj_.forward(x);
  if (input_bias.defined()) h = nn::add_row(h, input_bias);
  h = nn::gelu(h);
  Var ctx_states;
  if (!cross_.empty() && context.defined()) ctx_states = context_proj_.forward(context);
  std::vector<Var> levels;
  for (int l = 0; l < levels_; ++l) {
    if (l > 0) h = nn::matmul(nn::constant(downsample_matrix(static_cast<int>(h.rows()))), h);
    for (const auto& block : blocks_[static_cast<size_t>(l)]) h = block.forward(h, Matrix(), ctx);
    if (ctx_states.defined()) h = cross_[static_cast<size_t>(l)].forward(h, ctx_states, Matrix(), ctx);
    levels.push_back(h);
  }
  return out_norm_.forward(nn::concat_rows(levels));
}

void TemporalPyramidEncoder::collect(const std::string& prefix, nn::ParamList& out) const {
  in_proj_.collect(prefix + ".in_proj", out);
  if (!cross_.empty()) context_proj_.collect(prefix + ".context_proj", out);
  for (size_t l = 0; l < blocks_.size(); ++l) {
    for (size_t b = 0; b < blocks_[l].size(); ++b) {
      blocks_[l][b].collect(prefix + ".level" + std::to_string(l) + ".block" + std::to_string(b), out);
    }
    if (!cross_.empty()) cross_[l].collect(prefix + ".level" + std::to_string(l) + ".cross", out);
  }
  out_norm_.collect(prefix + ".norm", out);
}

// ---- configuration ----------------------------------------------------------

namespace {

void validate_phase(const PhaseConfig& p, const std::string& name) {
  require(p.batch_size >= 1, name + ": batch size must be positive");
  require(p.epochs >= 0, name + ": epochs must be nonnegative");
  require(p.warmup_epochs >= 0, name + ": warmup must be nonnegative");
  require(p.epochs == 0 || p.warmup_epochs < p.epochs, name + ": warmup must be shorter than training");
  require(p.max_lr > 0.0, name + ": learning rate must be positive");
}

io::Json phase_json(const PhaseConfig& p) {
  return {{"batch_size", p.batch_size}, {"epochs", p.epochs}, {"warmup_epochs", p.warmup_epochs},
          {"max_lr", p.max_lr}};
}

PhaseConfig phase_from(const io::Json& j, PhaseConfig p) {
  if (j.contains("batch_size")) j.at("batch_size").get_to(p.batch_size);
  if (j.contains("epochs")) j.at("epochs").get_to(p.epochs);
  if (j.contains("warmup_epochs")) j.at("warmup_epochs").get_to(p.warmup_epochs);
  if (j.contains("max_lr")) j.at("max_lr").get_to(p.max_lr);
  return p;
}

}  // namespace

void validate(const GroundingConfig& c) {
  require(c.levels >= 1, "grounding: levels must be >= 1");
  require(c.width >= 1 && c.heads >= 1 && c.width % c.heads == 0, "grounding: width must divide into heads");
  require(c.blocks_per_level >= 1, "grounding: blocks_per_level must be >= 1");
  require(c.top_k >= 1, "grounding: top_k must be >= 1");
  require(c.dropout >= 0.0 && c.dropout < 1.0, "grounding: dropout must lie in [0, 1)");
  require(c.drop_path >= 0.0 && c.drop_path < 1.0, "grounding: drop_path must lie in [0, 1)");
  require(c.pretrain_multiplier >= 0, "grounding: pretrain_multiplier must be nonnegative");
  validate_phase(c.pretrain, "grounding pretrain phase");
  validate_phase(c.finetune, "grounding finetune phase");
}

GroundingConfig with_step_overrides(GroundingConfig c) {
  c.finetune.batch_size = 8;
  c.dropout = 0.2;
  c.drop_path = 0.2;
  return c;
}

io::Json to_json(const GroundingConfig& c) {
  return {{"levels", c.levels},
          {"width", c.width},
          {"heads", c.heads},
          {"blocks_per_level", c.blocks_per_level},
          {"cross_modal", c.cross_modal},
          {"top_k", c.top_k},
          {"focal_alpha", c.focal_alpha},
          {"focal_gamma", c.focal_gamma},
          {"reg_weight", c.reg_weight},
          {"dropout", c.dropout},
          {"drop_path", c.drop_path},
          {"weight_decay", c.weight_decay},
          {"pretrain", phase_json(c.pretrain)},
          {"finetune", phase_json(c.finetune)},
          {"pretrain_multiplier", c.pretrain_multiplier},
          {"seed", c.seed}};
}

GroundingConfig grounding_config_from_json(const io::Json& j, GroundingConfig c) {
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("levels", c.levels);
  get("width", c.width);
  get("heads", c.heads);
  get("blocks_per_level", c.blocks_per_level);
  get("cross_modal", c.cross_modal);
  get("top_k", c.top_k);
  get("focal_alpha", c.focal_alpha);
  get("focal_gamma", c.focal_gamma);
  get("reg_weight", c.reg_weight);
  get("dropout", c.dropout);
  get("drop_path", c.drop_path);
  get("weight_decay", c.weight_decay);
  if (j.contains("pretrain")) c.pretrain = phase_from(j.at("pretrain"), c.pretrain);
  if (j.contains("finetune")) c.finetune = phase_from(j.at("finetune"), c.finetune);
  get("pretrain_multiplier", c.pretrain_multiplier);
  get("seed", c.seed);
  return c;
}

// ---- data -------------------------------------------------------------------

std::vector<GroundingQuery> queries_from(std::span<const corpus::GroundingAnnotation> annotations) {
  std::vector<GroundingQuery> out;
  out.reserve(annotations.size());
  for (const auto& a : annotations) out.push_back({a.query_id, a.clip_id, a.query_text, a.gt});
  return out;
}

std::vector<GroundingQuery> synthesize_pretrain_queries(const corpus::World& world, int count, uint64_t seed) {
  require(count >= 0, "synthesize_pretrain_queries: negative count");
  static const std::vector<std::string> kTemplates = {"C {verb} the {noun}", "C {verb} a {noun}",
                                                      "{verb_base} the {noun}", "{verb_base} {noun}"};
  // Only entries whose action is unique within their clip have an unambiguous answer.
  std::vector<std::pair<size_t, size_t>> eligible;
  for (size_t c = 0; c < world.clips.size(); ++c) {
    const auto& entries = world.clips[c].script.entries;
    for (size_t k = 0; k < entries.size(); ++k) {
      const auto same = std::count_if(entries.begin(), entries.end(), [&](const corpus::ActionEntry& o) {
        return o.verb_id == entries[k].verb_id && o.noun_id == entries[k].noun_id;
      });
      if (same == 1) eligible.emplace_back(c, k);
    }
  }
  std::vector<GroundingQuery> out;
  if (eligible.empty()) return out;
  Rng rng(mix_seed(seed, 0x6e6171ULL));
  for (int i = 0; i < count; ++i) {
    const auto [c, k] = eligible[static_cast<size_t>(rng.uniform_int(static_cast<int>(eligible.size())))];
    const auto& clip = world.clips[c];
    const auto& e = clip.script.entries[k];
    const auto& tmpl = kTemplates[static_cast<size_t>(rng.uniform_int(static_cast<int>(kTemplates.size())))];
    out.push_back({"naq" + std::to_string(i), clip.id, corpus::render_caption(tmpl, e.verb_id, e.noun_id),
                   {e.start_s, e.end_s, 1.0, std::nullopt}});
  }
  return out;
}

TrackIndex index_tracks(std::vector<SnippetFeatureTrack> tracks) {
  TrackIndex index;
  for (auto& t : tracks) {
    const std::string id = t.clip_id;
    if (!index.emplace(id, std::move(t)).second) throw InvalidArgument("duplicate feature track for " + id);
  }
  return index;
}

// ---- model ------------------------------------------------------------------

GroundingModel::GroundingModel(const encoders::TwoTowerModel& encoder, int feature_dim, GroundingConfig config)
    : encoder_(encoder.clone()), feature_dim_(feature_dim), config_(std::move(config)) {
  validate(config_);
  require(feature_dim >= 1, "grounding: feature dimension must be positive");
  const int d = encoder.config().embed_dim;
  similarity_channel_ = feature_dim == d;
  Rng rng(mix_seed(config_.seed, 0x67726e64ULL));
  query_proj_ = nn::Linear(d, config_.width, rng, false);
  pyramid_ = TemporalPyramidEncoder(feature_dim + (similarity_channel_ ? 1 : 0), config_.width, config_.heads,
                                    config_.levels, config_.blocks_per_level,
                                    config_.cross_modal ? encoder.config().width : 0, rng);
  cls_head_ = nn::Mlp(config_.width, config_.width, 1, rng);
  // Foreground prior of 0.01 keeps the focal loss stable at the start.
  cls_head_.fc2.bias.mutable_value().setConstant(-std::log(99.0));
  reg_hidden_ = nn::Linear(config_.width, config_.width, rng);
  reg_out_ = nn::Linear(config_.width, 2, rng);
  reg_out_.bias.mutable_value().setConstant(1.0);
}

GroundingModel GroundingModel::clone() const {
  GroundingModel copy(encoder_, feature_dim_, config_);
  nn::copy_parameter_values(parameters(), copy.parameters());
  return copy;
}

GroundingModel::QueryFeatures GroundingModel::encode_query(const std::string& text) const {
  nn::NoGradGuard guard;
  return {encoders::encode_text(encoder_, text), encoder_.text_tokens(text).value()};
}

GroundingModel::Output GroundingModel::forward(const SnippetFeatureTrack& track, const QueryFeatures& query,
                                               const nn::ForwardContext& ctx) const {
  if (track.length() == 0) throw InvalidArgument("ground_query: empty track");
  if (track.dim() != feature_dim_) {
    throw InvalidArgument("grounding model expects " + std::to_string(feature_dim_) + "-d features, got " +
                          std::to_string(track.dim()));
  }
  Matrix x = track.features;
  if (similarity_channel_) {
    x.conservativeResize(Eigen::NoChange, feature_dim_ + 1);
    const Matrix normed = track.features.rowwise().normalized();
    x.col(feature_dim_) = normed * query.embed.transpose();
  }
  const Var bias = query_proj_.forward(nn::constant(query.embed));
  const Var context = config_.cross_modal ? nn::constant(query.tokens) : Var();
  const Var h = pyramid_.forward(nn::constant(std::move(x)), bias, context, ctx);
  Output out;
  out.logits = cls_head_.forward(h);
  out.offsets = nn::relu(reg_out_.forward(nn::gelu(reg_hidden_.forward(h))));
  out.anchors = pyramid_anchors(track, config_.levels);
  return out;
}

void GroundingModel::zero_regression_head() const {
  reg_out_.weight.mutable_value().setZero();
  reg_out_.bias.mutable_value().setZero();
}

nn::ParamList GroundingModel::parameters() const {
  nn::ParamList out;
  query_proj_.collect("ground.query", out);
  pyramid_.collect("ground.encoder", out);
  cls_head_.collect("ground.cls", out);
  reg_hidden_.collect("ground.reg.hidden", out);
  reg_out_.collect("ground.reg.out", out);
  return out;
}

std::vector<TemporalSegment> decode(const GroundingModel::Output& out, double duration_s, int top_k) {
  const Matrix& logits = out.logits.value();
  const Matrix& offsets = out.offsets.value();
  std::vector<TemporalSegment> segs;
  segs.reserve(out.anchors.size());
  for (size_t i = 0; i < out.anchors.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    auto s = decode_offsets(out.anchors[i], offsets(r, 0), offsets(r, 1), duration_s);
    s.score = 1.0 / (1.0 + std::exp(-logits(r, 0)));
    segs.push_back(s);
  }
  std::stable_sort(segs.begin(), segs.end(),
                   [](const TemporalSegment& a, const TemporalSegment& b) { return a.score > b.score; });
  if (static_cast<int>(segs.size()) > top_k) segs.resize(static_cast<size_t>(top_k));
  return segs;
}

std::vector<TemporalSegment> ground_query(const SnippetFeatureTrack& track, const std::string& query_text,
                                          const GroundingModel& model) {
  nn::NoGradGuard guard;
  const auto out = model.forward(track, model.encode_query(query_text));
  return decode(out, track.duration_s, model.config().top_k);
}

namespace {

struct Targets {
  Matrix cls;                 // P x 1
  std::vector<int> positive;  // anchor indices
  Matrix reg;                 // |positive| x 2, in level units
};

Targets make_targets(const std::vector<Anchor>& anchors, const TemporalSegment& gt) {
  Targets t;
  t.cls = Matrix::Zero(static_cast<Eigen::Index>(anchors.size()), 1);
  for (size_t i = 0; i < anchors.size(); ++i) {
    const double c = anchors[i].center_s;
    if (c >= gt.start_s && c <= gt.end_s) t.positive.push_back(static_cast<int>(i));
  }
  if (t.positive.empty()) {
    // Answer shorter than the snippet spacing: use the closest level-0 position.
    const double mid = 0.5 * (gt.start_s + gt.end_s);
    int best = 0;
    for (size_t i = 0; i < anchors.size() && anchors[i].level == 0; ++i) {
      if (std::abs(anchors[i].center_s - mid) < std::abs(anchors[static_cast<size_t>(best)].center_s - mid)) {
        best = static_cast<int>(i);
      }
    }
    t.positive.push_back(best);
  }
  t.reg.resize(static_cast<Eigen::Index>(t.positive.size()), 2);
  for (size_t k = 0; k < t.positive.size(); ++k) {
    const auto& a = anchors[static_cast<size_t>(t.positive[k])];
    t.cls(t.positive[k], 0) = 1.0;
    t.reg(static_cast<Eigen::Index>(k), 0) = std::max(0.0, (a.center_s - gt.start_s) / a.unit_s);
    t.reg(static_cast<Eigen::Index>(k), 1) = std::max(0.0, (gt.end_s - a.center_s) / a.unit_s);
  }
  return t;
}

const SnippetFeatureTrack& find_track(const TrackIndex& tracks, const std::string& clip_id) {
  const auto it = tracks.find(clip_id);
  if (it == tracks.end()) throw MissingDependency("no feature track for clip " + clip_id);
  return it->second;
}

}  // namespace

GroundingModel train_grounding(const GroundingModel& init, std::span<const GroundingQuery> pretrain,
                               std::span<const GroundingQuery> finetune, const TrackIndex& tracks,
                               std::vector<GroundingTrainLog>* log) {
  if (finetune.empty()) throw InvalidArgument("train_grounding: empty finetune set");
  const GroundingConfig& cfg = init.config();
  GroundingModel model = init.clone();

  std::map<std::string, GroundingModel::QueryFeatures> text_cache;
  auto query_features = [&](const std::string& text) -> const GroundingModel::QueryFeatures& {
    auto it = text_cache.find(text);
    if (it == text_cache.end()) it = text_cache.emplace(text, model.encode_query(text)).first;
    return it->second;
  };

  auto run_phase = [&](const std::string& name, std::span<const GroundingQuery> data, const PhaseConfig& phase,
                       uint64_t phase_id) {
    if (data.empty() || phase.epochs == 0) return;
    std::vector<Targets> targets;
    for (const auto& q : data) {
      if (!q.gt.valid()) throw InvalidArgument("malformed ground-truth segment for " + q.query_id);
      const auto& track = find_track(tracks, q.clip_id);
      targets.push_back(make_targets(pyramid_anchors(track, cfg.levels), q.gt));
    }
    nn::AdamW opt(model.parameters(), {.weight_decay = cfg.weight_decay});
    const long long per_epoch = (static_cast<long long>(data.size()) + phase.batch_size - 1) / phase.batch_size;
    const long long total = per_epoch * phase.epochs;
    const long long warmup = std::min<long long>(per_epoch * phase.warmup_epochs, total - 1);
    Rng rng(mix_seed(cfg.seed, phase_id));
    const nn::ForwardContext ctx{true, cfg.dropout, cfg.drop_path, &rng};
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), size_t{0});
    for (int epoch = 0; epoch < phase.epochs; ++epoch) {
      rng.shuffle(order);
      double sum = 0.0;
      for (size_t start = 0; start < order.size(); start += static_cast<size_t>(phase.batch_size)) {
        const size_t end = std::min(order.size(), start + static_cast<size_t>(phase.batch_size));
        Var loss;
        for (size_t i = start; i < end; ++i) {
          const auto& q = data[order[i]];
          const auto& t = targets[order[i]];
          const auto out = model.forward(find_track(tracks, q.clip_id), query_features(q.query_text), ctx);
          const double npos = static_cast<double>(t.positive.size());
          Var l = nn::sigmoid_focal_loss(out.logits, t.cls, Matrix(), cfg.focal_alpha, cfg.focal_gamma, npos);
          Var reg = nn::interval_iou_loss(nn::gather_rows(out.offsets, t.positive), t.reg, Matrix(), npos);
          l = nn::add(l, nn::scale(reg, cfg.reg_weight));
          loss = loss.defined() ? nn::add(loss, l) : l;
        }
        loss = nn::scale(loss, 1.0 / static_cast<double>(end - start));
        nn::backward(loss);
        opt.step(nn::warmup_cosine_lr(opt.steps(), warmup, total, phase.max_lr));
        sum += loss.item();
      }
      if (log) log->push_back({name, epoch, sum / static_cast<double>(per_epoch)});
    }
  };

  run_phase("pretrain", pretrain, cfg.pretrain, 0x7072ULL);
  run_phase("finetune", finetune, cfg.finetune, 0x6674ULL);
  return model;
}

GroundingPredictions predict_queries(const GroundingModel& model, std::span<const GroundingQuery> queries,
                                     const TrackIndex& tracks) {
  GroundingPredictions out;
  for (const auto& q : queries) out[q.query_id] = ground_query(find_track(tracks, q.clip_id), q.query_text, model);
  return out;
}

RecallTable eval_grounding(const GroundingPredictions& predictions, std::span<const GroundingQuery> gt,
                           std::span<const int> ks, std::span<const double> tious) {
  RecallTable table;
  table.ks.assign(ks.begin(), ks.end());
  table.tious.assign(tious.begin(), tious.end());
  table.num_queries = static_cast<int>(gt.size());
  std::map<std::pair<int, double>, int> hits;
  for (int k : ks) {
    require(k >= 1, "eval_grounding: k must be positive");
    for (double t : tious) hits[{k, t}] = 0;
  }
  for (const auto& q : gt) {
    const auto it = predictions.find(q.query_id);
    if (it == predictions.end()) {
      ++table.missing;
      continue;
    }
    std::vector<TemporalSegment> ranked = it->second;
    for (const auto& s : ranked) {
      if (!s.valid()) throw InvalidArgument("malformed predicted segment for " + q.query_id);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const TemporalSegment& a, const TemporalSegment& b) { return a.score > b.score; });
    for (int k : ks) {
      const size_t n = std::min(ranked.size(), static_cast<size_t>(k));
      for (double t : tious) {
        const bool hit = std::any_of(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n),
                                     [&](const TemporalSegment& s) { return metrics::tiou(s, q.gt) >= t; });
        if (hit) ++hits[{k, t}];
      }
    }
  }
  for (const auto& [key, h] : hits) {
    table.cells[key] = gt.empty() ? 0.0 : static_cast<double>(h) / static_cast<double>(gt.size());
  }
  return table;
}

void write_predictions(const fs::path& path, const GroundingPredictions& predictions) {
  std::vector<io::Json> records;
  for (const auto& [id, segs] : predictions) {
    io::Json arr = io::Json::array();
    for (const auto& s : segs) arr.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"score", s.score}});
    records.push_back({{"query_id", id}, {"segments", arr}});
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_jsonl(path, records);
}

GroundingPredictions read_predictions(const fs::path& path) {
  if (!fs::exists(path)) throw MissingDependency("prediction file not found: " + path.string());
  GroundingPredictions out;
  for (const auto& r : io::read_jsonl(path)) {
    auto& segs = out[r.at("query_id").get<std::string>()];
    for (const auto& s : r.at("segments")) {
      TemporalSegment seg{s.at("start_s").get<double>(), s.at("end_s").get<double>(), s.value("score", 0.0),
                          std::nullopt};
      if (!seg.valid()) throw InvalidArgument("malformed segment in " + path.string());
      segs.push_back(seg);
    }
  }
  return out;
}

}  // namespace egovideo::grounding
