#include "egovideo/anticipation/anticipation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "egovideo/common/error.hpp"
#include "egovideo/metrics/metrics.hpp"
#include "egovideo/nn/optim.hpp"

namespace egovideo::anticipation {

namespace fs = std::filesystem;

ClipLogits classify_clip(const corpus::FrameView& clip, const encoders::ActionClassifier& model) {
  const auto scores = encoders::predict_logits(model, std::span(&clip, 1));
  return {scores.verb, scores.noun};
}

ActionToken predicted_action(const ClipLogits& logits) {
  return {metrics::argmax_row(logits.verb, 0), metrics::argmax_row(logits.noun, 0)};
}

ClassificationTop1 classification_top1(const Matrix& verb_logits, const Matrix& noun_logits,
                                       std::span<const ActionToken> labels) {
  if (verb_logits.rows() != static_cast<Eigen::Index>(labels.size()) || noun_logits.rows() != verb_logits.rows()) {
    throw InvalidArgument("classification_top1: logits and labels disagree in length");
  }
  ClassificationTop1 out;
  if (labels.empty()) return out;
  int verb = 0, noun = 0, action = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    const bool v = metrics::argmax_row(verb_logits, static_cast<Eigen::Index>(i)) == labels[i].verb_id;
    const bool n = metrics::argmax_row(noun_logits, static_cast<Eigen::Index>(i)) == labels[i].noun_id;
    verb += v;
    noun += n;
    action += v && n;
  }
  const double total = static_cast<double>(labels.size());
  return {verb / total, noun / total, action / total};
}

Sequence infer_history(const corpus::Clip& clip, const corpus::AnticipationAnnotation& annotation,
                       const encoders::ActionClassifier& model) {
  if (annotation.clip_id != clip.id) {
    throw InvalidArgument("infer_history: annotation " + annotation.example_id + " is not on clip " + clip.id);
  }
  std::vector<corpus::FrameView> views;
  for (const auto& seg : annotation.history_segments) views.push_back(clip.window(seg.start_s, seg.end_s));
  const auto scores = encoders::predict_logits(model, views);
  Sequence out;
  for (Eigen::Index i = 0; i < scores.verb.rows(); ++i) {
    out.push_back({metrics::argmax_row(scores.verb, i), metrics::argmax_row(scores.noun, i)});
  }
  return out;
}

void validate(const LTAConfig& c) {
  require(c.history >= 1 && c.future >= 1, "lta: history and future lengths must be positive");
  require(c.width >= 1 && c.heads >= 1 && c.width % c.heads == 0, "lta: width must divide into heads");
  require(c.layers >= 1, "lta: need at least one layer");
  require(c.lr > 0.0 && c.gamma > 0.0, "lta: lr and gamma must be positive");
  require(c.batch_size >= 1 && c.epochs >= 0, "lta: invalid schedule");
  require(c.candidates >= 1, "lta: K must be >= 1");
  require(c.temperature > 0.0, "lta: temperature must be positive");
}

io::Json to_json(const LTAConfig& c) {
  return {{"history", c.history}, {"future", c.future},         {"width", c.width},
          {"heads", c.heads},     {"layers", c.layers},         {"lr", c.lr},
          {"gamma", c.gamma},     {"batch_size", c.batch_size}, {"epochs", c.epochs},
          {"candidates", c.candidates}, {"temperature", c.temperature}, {"weight_decay", c.weight_decay},
          {"seed", c.seed}};
}

LTAConfig lta_config_from_json(const io::Json& j, LTAConfig c) {
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("history", c.history);
  get("future", c.future);
  get("width", c.width);
  get("heads", c.heads);
  get("layers", c.layers);
  get("lr", c.lr);
  get("gamma", c.gamma);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("candidates", c.candidates);
  get("temperature", c.temperature);
  get("weight_decay", c.weight_decay);
  get("seed", c.seed);
  return c;
}

ActionSequenceModel::ActionSequenceModel(int num_verbs, int num_nouns, LTAConfig config)
    : num_verbs_(num_verbs), num_nouns_(num_nouns), config_(config) {
  validate(config_);
  require(num_verbs >= 1 && num_nouns >= 1, "lta: empty label space");
  Rng rng(mix_seed(config_.seed, 0x6c7461ULL));
  Matrix tok(num_actions(), config_.width), pos(config_.history + config_.future, config_.width);
  for (Eigen::Index i = 0; i < tok.size(); ++i) tok.data()[i] = 0.5 * rng.normal();
  for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = 0.02 * rng.normal();
  token_embed_ = nn::parameter(tok);
  pos_embed_ = nn::parameter(pos);
  for (int l = 0; l < config_.layers; ++l) blocks_.emplace_back(config_.width, config_.heads, 2 * config_.width, rng);
  norm_ = nn::LayerNorm(config_.width);
  head_ = nn::Linear(config_.width, num_actions(), rng);
}

ActionSequenceModel ActionSequenceModel::clone() const {
  ActionSequenceModel copy(num_verbs_, num_nouns_, config_);
  nn::copy_parameter_values(parameters(), copy.parameters());
  return copy;
}

Var ActionSequenceModel::forward(const std::vector<std::vector<int>>& ids, const nn::ForwardContext& ctx) const {
  require(!ids.empty(), "lta forward: empty batch");
  const int len = static_cast<int>(ids.front().size());
  require(len >= 1 && len <= pos_embed_.rows(), "lta forward: sequence longer than the context window");
  std::vector<int> flat, positions;
  for (const auto& seq : ids) {
    require(static_cast<int>(seq.size()) == len, "lta forward: ragged batch");
    for (int t = 0; t < len; ++t) {
      require(seq[static_cast<size_t>(t)] >= 0 && seq[static_cast<size_t>(t)] < num_actions(),
              "lta forward: action id out of range");
      flat.push_back(seq[static_cast<size_t>(t)]);
      positions.push_back(t);
    }
  }
  Var h = nn::add(nn::gather_rows(token_embed_, flat), nn::gather_rows(pos_embed_, positions));
  // Causal within each sequence, blocked across sequences.
  const auto b = static_cast<Eigen::Index>(ids.size());
  Matrix mask = Matrix::Constant(b * len, b * len, nn::kMaskedLogit);
  const Matrix causal = nn::causal_mask(len);
  for (Eigen::Index i = 0; i < b; ++i) mask.block(i * len, i * len, len, len) = causal;
  for (const auto& block : blocks_) h = block.forward(h, mask, ctx);
  return head_.forward(norm_.forward(h));
}

nn::ParamList ActionSequenceModel::parameters() const {
  nn::ParamList out;
  out.push_back({"lta.token_embed", token_embed_});
  out.push_back({"lta.pos_embed", pos_embed_});
  for (size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect("lta.block." + std::to_string(l), out);
  norm_.collect("lta.norm", out);
  head_.collect("lta.head", out);
  return out;
}

std::vector<LTAExample> examples_from(std::span<const corpus::AnticipationAnnotation> annotations) {
  std::vector<LTAExample> out;
  for (const auto& a : annotations) out.push_back({a.example_id, a.history, a.future});
  return out;
}

ActionSequenceModel train_sequence_model(const ActionSequenceModel& init, std::span<const LTAExample> data,
                                         std::vector<LTATrainLog>* log) {
  if (data.empty()) throw InvalidArgument("train_sequence_model: empty training set");
  const LTAConfig& cfg = init.config();
  ActionSequenceModel model = init.clone();
  std::vector<std::vector<int>> inputs, targets;
  for (const auto& ex : data) {
    if (static_cast<int>(ex.history.size()) != cfg.history || static_cast<int>(ex.future.size()) != cfg.future) {
      throw InvalidArgument("example " + ex.example_id + " does not have " + std::to_string(cfg.history) + " + " +
                            std::to_string(cfg.future) + " actions");
    }
    std::vector<int> in, tgt;
    for (const auto& t : ex.history) in.push_back(t.action_id(model.num_nouns()));
    for (int k = 0; k + 1 < cfg.future; ++k) in.push_back(ex.future[static_cast<size_t>(k)].action_id(model.num_nouns()));
    for (const auto& t : ex.future) tgt.push_back(t.action_id(model.num_nouns()));
    inputs.push_back(std::move(in));
    targets.push_back(std::move(tgt));
  }
  if (cfg.epochs == 0) return model;

  nn::AdamW opt(model.parameters(), {.weight_decay = cfg.weight_decay});
  Rng rng(mix_seed(cfg.seed, 0x6c7474ULL));
  const int len = cfg.history + cfg.future - 1;
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = nn::step_decay_lr(epoch, cfg.lr, cfg.gamma);
    rng.shuffle(order);
    double sum = 0.0;
    int steps = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<std::vector<int>> batch;
      std::vector<int> labels;
      std::vector<int> rows;
      for (size_t i = start; i < end; ++i) {
        batch.push_back(inputs[order[i]]);
        const auto offset = static_cast<int>(i - start) * len;
        for (int k = 0; k < cfg.future; ++k) {
          rows.push_back(offset + cfg.history - 1 + k);
          labels.push_back(targets[order[i]][static_cast<size_t>(k)]);
        }
      }
      const Var logits = nn::gather_rows(model.forward(batch, {true, 0.0, 0.0, &rng}), rows);
      const Var loss = nn::cross_entropy(logits, labels);
      nn::backward(loss);
      opt.step(lr);
      sum += loss.item();
      ++steps;
    }
    if (log) log->push_back({epoch, lr, sum / steps});
  }
  return model;
}

std::vector<Sequence> predict_future(const Sequence& history, const ActionSequenceModel& model, int k,
                                     uint64_t seed) {
  if (k < 1) throw InvalidArgument("predict_future: K must be >= 1");
  const LTAConfig& cfg = model.config();
  if (static_cast<int>(history.size()) != cfg.history) {
    throw InvalidArgument("predict_future: history must hold " + std::to_string(cfg.history) + " actions");
  }
  nn::NoGradGuard guard;
  Rng rng(mix_seed(seed, 0x726f6c6cULL));
  std::vector<Sequence> out;
  for (int c = 0; c < k; ++c) {
    std::vector<int> ids;
    for (const auto& t : history) ids.push_back(t.action_id(model.num_nouns()));
    Sequence rollout;
    for (int step = 0; step < cfg.future; ++step) {
      const Matrix logits = model.forward({ids}).value();
      const auto last = logits.rows() - 1;
      int next = 0;
      if (c == 0) {
        next = metrics::argmax_row(logits, last);
      } else {
        const Eigen::RowVectorXd z = logits.row(last) / cfg.temperature;
        const Eigen::RowVectorXd p = (z.array() - z.maxCoeff()).exp();
        double u = rng.uniform() * p.sum();
        next = static_cast<int>(p.size()) - 1;
        for (Eigen::Index a = 0; a < p.size(); ++a) {
          u -= p(a);
          if (u < 0.0) {
            next = static_cast<int>(a);
            break;
          }
        }
      }
      ids.push_back(next);
      rollout.push_back(ActionToken::from_action_id(next, model.num_nouns()));
    }
    out.push_back(std::move(rollout));
  }
  return out;
}

EditDistances edit_distance_eval(std::span<const std::vector<Sequence>> candidates, std::span<const Sequence> gt,
                                 int num_nouns) {
  if (candidates.size() != gt.size()) throw InvalidArgument("edit_distance_eval: candidate and gt counts differ");
  EditDistances out;
  if (gt.empty()) return out;
  auto channel = [&](const Sequence& s, int which) {
    std::vector<int> v;
    for (const auto& t : s) v.push_back(which == 0 ? t.verb_id : which == 1 ? t.noun_id : t.action_id(num_nouns));
    return v;
  };
  double sums[3] = {0.0, 0.0, 0.0};
  for (size_t e = 0; e < gt.size(); ++e) {
    if (candidates[e].empty()) throw InvalidArgument("edit_distance_eval: example without candidates");
    const double len = static_cast<double>(gt[e].size());
    require(len > 0, "edit_distance_eval: empty gt sequence");
    for (const auto& cand : candidates[e]) {
      if (cand.size() != gt[e].size()) throw InvalidArgument("edit_distance_eval: sequence length mismatch");
    }
    for (int which = 0; which < 3; ++which) {
      const auto g = channel(gt[e], which);
      double best = 1.0;
      for (const auto& cand : candidates[e]) {
        best = std::min(best, metrics::levenshtein(channel(cand, which), g) / len);
      }
      sums[which] += best;
    }
  }
  const double n = static_cast<double>(gt.size());
  return {100.0 * sums[0] / n, 100.0 * sums[1] / n, 100.0 * sums[2] / n};
}

void write_candidates(const fs::path& path, std::span<const CandidateRecord> records) {
  std::vector<io::Json> rows;
  for (const auto& r : records) {
    io::Json cands = io::Json::array();
    for (const auto& seq : r.candidates) {
      io::Json s = io::Json::array();
      for (const auto& t : seq) s.push_back({{"verb", t.verb_id}, {"noun", t.noun_id}});
      cands.push_back(std::move(s));
    }
    rows.push_back({{"example_id", r.example_id}, {"candidates", cands}});
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_jsonl(path, rows);
}

std::vector<CandidateRecord> read_candidates(const fs::path& path) {
  if (!fs::exists(path)) throw MissingDependency("candidate file not found: " + path.string());
  std::vector<CandidateRecord> out;
  for (const auto& r : io::read_jsonl(path)) {
    CandidateRecord rec{r.at("example_id").get<std::string>(), {}};
    for (const auto& seq : r.at("candidates")) {
      Sequence s;
      for (const auto& t : seq) s.push_back({t.at("verb").get<int>(), t.at("noun").get<int>()});
      rec.candidates.push_back(std::move(s));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace egovideo::anticipation
