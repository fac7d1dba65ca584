#include "egovideo/encoders/classifier.hpp"

#include <algorithm>
#include <numeric>

#include "egovideo/common/error.hpp"
#include "egovideo/nn/optim.hpp"

namespace egovideo::encoders {

ActionClassifier::ActionClassifier(const TwoTowerModel& backbone, int num_verbs, int num_nouns,
                                   uint64_t seed)
    : backbone_(backbone.clone()), num_verbs_(num_verbs), num_nouns_(num_nouns), seed_(seed) {
  require(num_verbs >= 1 && num_nouns >= 1, "classifier needs at least one verb and noun");
  if (backbone.vocabulary().num_verbs() != num_verbs || backbone.vocabulary().num_nouns() != num_nouns) {
    throw InvalidArgument("classifier label space does not match the checkpoint vocabulary");
  }
  Rng rng(mix_seed(seed, 0x68656164ULL));
  verb_head_ = nn::Linear(backbone.config().width, num_verbs, rng);
  noun_head_ = nn::Linear(backbone.config().width, num_nouns, rng);
}

ActionClassifier ActionClassifier::clone() const {
  ActionClassifier copy(backbone_, num_verbs_, num_nouns_, seed_);
  nn::copy_parameter_values(parameters(), copy.parameters());
  return copy;
}

ActionClassifier::Logits ActionClassifier::forward(std::span<const corpus::FrameView> clips,
                                                   const nn::ForwardContext& ctx) const {
  Var h = backbone_.pooled_video(clips, ctx);
  if (ctx.training && ctx.dropout > 0.0 && ctx.rng) h = nn::dropout(h, ctx.dropout, *ctx.rng);
  return {verb_head_.forward(h), noun_head_.forward(h)};
}

nn::ParamList ActionClassifier::parameters() const {
  auto out = backbone_.video_parameters();
  verb_head_.collect("head.verb", out);
  noun_head_.collect("head.noun", out);
  return out;
}

ActionClassifier train_classifier(const ActionClassifier& init, std::span<const LabeledClip> data,
                                  const ClassifierTrainOptions& o) {
  if (data.empty()) throw InvalidArgument("train_classifier: empty training set");
  require(o.epochs >= 0 && o.batch_size >= 1, "train_classifier: invalid options");
  ActionClassifier model = init.clone();
  if (o.epochs == 0) return model;

  nn::AdamW opt(model.parameters(), {.weight_decay = o.weight_decay});
  const long long per_epoch = (static_cast<long long>(data.size()) + o.batch_size - 1) / o.batch_size;
  const long long total = per_epoch * o.epochs;
  const long long warmup = std::min<long long>(per_epoch * o.warmup_epochs, total - 1);
  Rng rng(mix_seed(o.seed, 0x636c6173ULL));
  nn::ForwardContext ctx{true, o.dropout, 0.0, &rng};
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int epoch = 0; epoch < o.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(o.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(o.batch_size));
      std::vector<corpus::FrameView> clips;
      std::vector<int> verbs, nouns;
      for (size_t i = start; i < end; ++i) {
        const auto& ex = data[order[i]];
        if (ex.verb_id < 0 || ex.verb_id >= model.num_verbs() || ex.noun_id < 0 ||
            ex.noun_id >= model.num_nouns()) {
          throw InvalidArgument("train_classifier: label out of range");
        }
        clips.push_back(ex.frames);
        verbs.push_back(ex.verb_id);
        nouns.push_back(ex.noun_id);
      }
      const auto logits = model.forward(clips, ctx);
      auto loss = nn::add(nn::cross_entropy(logits.verb, verbs), nn::cross_entropy(logits.noun, nouns));
      nn::backward(loss);
      opt.step(nn::warmup_cosine_lr(opt.steps(), warmup, total, o.lr));
      sum += loss.item();
    }
    if (o.on_epoch) o.on_epoch(epoch, sum / static_cast<double>(per_epoch));
  }
  return model;
}

ClassifierScores predict_logits(const ActionClassifier& model, std::span<const corpus::FrameView> clips,
                                int batch_size) {
  nn::NoGradGuard guard;
  ClassifierScores out{nn::Matrix(static_cast<nn::Index>(clips.size()), model.num_verbs()),
                       nn::Matrix(static_cast<nn::Index>(clips.size()), model.num_nouns())};
  for (size_t start = 0; start < clips.size(); start += static_cast<size_t>(batch_size)) {
    const size_t n = std::min(clips.size() - start, static_cast<size_t>(batch_size));
    const auto logits = model.forward(clips.subspan(start, n));
    out.verb.middleRows(static_cast<nn::Index>(start), static_cast<nn::Index>(n)) = logits.verb.value();
    out.noun.middleRows(static_cast<nn::Index>(start), static_cast<nn::Index>(n)) = logits.noun.value();
  }
  return out;
}

}  // namespace egovideo::encoders
