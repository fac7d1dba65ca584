#include "egovideo/encoders/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "egovideo/common/error.hpp"
#include "egovideo/common/jsonl.hpp"
#include "egovideo/encoders/contrastive.hpp"
#include "egovideo/nn/optim.hpp"

namespace egovideo::encoders {

namespace fs = std::filesystem;

std::vector<TrainingPair> training_pairs(const corpus::World& world,
                                         std::span<const corpus::ClipTextPair> pairs) {
  std::vector<TrainingPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({world.resolve(p.clip_id), p.caption});
  return out;
}

PretrainResult post_pretrain(const TwoTowerModel& init, std::span<const TrainingPair> corpus,
                             const PretrainOptions& o) {
  if (corpus.empty()) throw InvalidArgument("post_pretrain: empty corpus");
  require(o.epochs >= 0 && o.batch_size >= 1 && o.lr >= 0.0, "post_pretrain: invalid options");
  PretrainResult result{init.clone(), {}};
  if (o.epochs == 0) return result;

  auto& model = result.model;
  nn::AdamW opt(model.trainable_parameters(), {.weight_decay = o.weight_decay});
  const long long per_epoch = (static_cast<long long>(corpus.size()) + o.batch_size - 1) / o.batch_size;
  const long long total = per_epoch * o.epochs;
  const auto warmup = static_cast<long long>(std::llround(o.warmup_fraction * total));

  Rng rng(mix_seed(o.seed, 0x73746167653232ULL));
  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int epoch = 0; epoch < o.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(o.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(o.batch_size));
      std::vector<corpus::FrameView> clips;
      std::vector<std::string> captions;
      for (size_t i = start; i < end; ++i) {
        clips.push_back(corpus[order[i]].frames);
        captions.push_back(corpus[order[i]].caption);
      }
      auto loss = contrastive_loss(model.embed_video(clips), model.embed_text(captions),
                                   model.log_temperature());
      nn::backward(loss);
      opt.step(nn::warmup_cosine_lr(opt.steps(), warmup, total, o.lr, o.min_lr));
      model.clamp_temperature();
      sum += loss.item();
    }
    const double mean = sum / static_cast<double>(per_epoch);
    result.state.epoch_losses.push_back(mean);
    if (o.on_epoch) o.on_epoch(epoch, mean);
  }
  result.state.epoch = o.epochs;
  result.state.optimizer_steps = opt.steps();
  result.state.optimizer_moments = opt.state();
  return result;
}

void save_checkpoint(const fs::path& path, const TwoTowerModel& model, const TrainingState& state) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nn::NamedTensors tensors;
  for (const auto& p : model.parameters()) tensors.emplace_back(p.name, p.var.value());
  tensors.insert(tensors.end(), state.optimizer_moments.begin(), state.optimizer_moments.end());
  nn::save_tensors(path, tensors);

  const auto& vocab = model.vocabulary();
  io::Json meta = {{"format", "egovideo-checkpoint"},
                   {"version", 1},
                   {"config", to_json(model.config())},
                   {"seed", model.seed()},
                   {"vocabulary", {{"tokens", vocab.tokens()},
                                   {"num_verbs", vocab.num_verbs()},
                                   {"num_nouns", vocab.num_nouns()}}},
                   {"epoch", state.epoch},
                   {"epoch_losses", state.epoch_losses},
                   {"optimizer_steps", state.optimizer_steps}};
  io::write_json(fs::path(path.string() + ".json"), meta);
}

PretrainResult load_checkpoint(const fs::path& path) {
  const fs::path sidecar(path.string() + ".json");
  if (!fs::exists(path) || !fs::exists(sidecar)) {
    throw MissingDependency("checkpoint not found: " + path.string());
  }
  const auto meta = io::read_json_with_comments(sidecar);
  if (meta.value("format", "") != "egovideo-checkpoint" || meta.value("version", 0) != 1) {
    throw InvalidArgument("unsupported checkpoint sidecar: " + sidecar.string());
  }
  const auto& v = meta.at("vocabulary");
  corpus::Vocabulary vocab(v.at("tokens").get<std::vector<std::string>>(), v.at("num_verbs").get<int>(),
                           v.at("num_nouns").get<int>());
  PretrainResult out{TwoTowerModel(encoder_config_from_json(meta.at("config")), std::move(vocab),
                                   meta.at("seed").get<uint64_t>()),
                     {}};
  out.state.epoch = meta.at("epoch").get<int>();
  out.state.epoch_losses = meta.at("epoch_losses").get<std::vector<double>>();
  out.state.optimizer_steps = meta.at("optimizer_steps").get<long long>();

  auto tensors = nn::load_tensors(path);
  nn::ParamList stored;
  for (auto& [name, value] : tensors) {
    if (name.rfind("adam.", 0) == 0) {
      out.state.optimizer_moments.emplace_back(name, value);
    } else {
      stored.push_back({name, nn::constant(value)});
    }
  }
  nn::copy_parameter_values(stored, out.model.parameters());
  return out;
}

}  // namespace egovideo::encoders
