#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "egovideo/common/error.hpp"
#include "egovideo/corpus/io.hpp"
#include "egovideo/encoders/pretrain.hpp"
#include "egovideo/ensemble/ensemble.hpp"
#include "egovideo/pipeline/pipeline.hpp"

namespace {

using namespace egovideo;
using namespace egovideo::pipeline;

struct Common {
  std::string config;
  std::string profile = "paper";
  std::string out;
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* app, Common& c, bool with_out = true) {
  app->add_option("--config", c.config, "JSON config (comments allowed)")->check(CLI::ExistingFile);
  app->add_option("--profile", c.profile, "paper or desk");
  if (with_out) app->add_option("--out", c.out, "output root (default $EGOVIDEO_OUT or ./runs)");
  app->add_option("--seed", c.seed, "run seed");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? default_run_config(c.profile) : load_run_config(c.config, c.profile);
  if (c.seed) cfg.seed = *c.seed;
  cfg.out_dir = c.out.empty() ? default_out_dir() : fs::path(c.out);
  validate(cfg);
  return cfg;
}

void print(const io::Json& j) { std::cout << j.dump(2) << "\n"; }

void run_and_print(const RunConfig& cfg, Stage stage, const StageOptions& opts = {}) {
  const auto r = run_stage(cfg, stage, opts);
  std::cerr << "wrote " << r.manifest.string() << "\n";
  print(r.metrics);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Synthetic egocentric video-language pipeline"};
  app.require_subcommand(1);
  Common common;

  auto* corpus = app.add_subcommand("corpus", "generate worlds and select the pretraining corpus");
  add_common(corpus, common);
  corpus->callback([&] { run_and_print(resolve(common), Stage::kCorpus); });

  std::string manifest, world, ckpt;
  std::optional<int> epochs;
  auto* stage2 = app.add_subcommand("stage2", "contrastive post-pretraining from a corpus manifest");
  add_common(stage2, common, false);
  stage2->add_option("--corpus", manifest, "selected pairs (JSON-lines)")->required()->check(CLI::ExistingFile);
  stage2->add_option("--world", world, "world directory (default <manifest dir>/pretrain)");
  stage2->add_option("--epochs", epochs, "training epochs");
  stage2->add_option("--out", ckpt, "checkpoint path")->required();
  stage2->callback([&] {
    const auto cfg = resolve(common);
    const fs::path wdir = world.empty() ? fs::path(manifest).parent_path() / "pretrain" : fs::path(world);
    if (!fs::exists(wdir)) throw MissingDependency("world not found: " + wdir.string() + "; run `egovideo corpus` first");
    const auto w = corpus::read_world(wdir);
    const auto pairs = corpus::read_manifest(manifest);
    auto opts = cfg.pretrain;
    if (epochs) opts.epochs = *epochs;
    opts.seed = mix_seed(cfg.seed, 8);
    opts.on_epoch = [](int e, double loss) { std::cerr << "epoch " << e << " loss " << loss << "\n"; };
    const encoders::TwoTowerModel init(cfg.encoder, corpus::Vocabulary::for_world(w.config), mix_seed(cfg.seed, 7));
    const auto result = encoders::post_pretrain(init, encoders::training_pairs(w, pairs), opts);
    if (fs::path(ckpt).has_parent_path()) fs::create_directories(fs::path(ckpt).parent_path());
    encoders::save_checkpoint(ckpt, result.model, result.state);
    print({{"pairs", pairs.size()}, {"epoch_losses", result.state.epoch_losses}, {"checkpoint", ckpt}});
  });

  std::string stage_name = "all";
  auto* run = app.add_subcommand("run", "run one pipeline stage or all of them");
  add_common(run, common);
  run->add_option("--stage", stage_name, "stage name or all");
  run->callback([&] {
    const auto cfg = resolve(common);
    if (stage_name == "all") {
      for (const auto& r : run_all(cfg)) std::cerr << "wrote " << r.manifest.string() << "\n";
      std::cout << render_report(cfg.out_dir);
    } else {
      run_and_print(cfg, stage_from_string(stage_name));
    }
  });

  std::string predictions;
  for (const auto& [name, stage] : {std::pair{"nlq", Stage::kNlq}, std::pair{"goalstep", Stage::kGoalstep}}) {
    auto* track = app.add_subcommand(name, std::string(name) + " grounding track");
    track->require_subcommand(1);
    auto* train = track->add_subcommand("train", "train and write validation predictions");
    add_common(train, common);
    train->callback([&common, stage = stage] { run_and_print(resolve(common), stage); });
    auto* eval = track->add_subcommand("eval", "score a prediction file on the validation queries");
    add_common(eval, common);
    eval->add_option("--predictions", predictions, "prediction JSON-lines");
    eval->callback([&common, &predictions, stage = stage] {
      const auto cfg = resolve(common);
      const fs::path p = predictions.empty() ? cfg.out_dir / to_string(stage) / "predictions_val.jsonl"
                                             : fs::path(predictions);
      print(evaluate_grounding_file(cfg, stage, p));
    });
  }

  std::vector<std::string> inputs;
  std::string weights, merged;
  auto* mq = app.add_subcommand("mq", "moment queries track");
  mq->require_subcommand(1);
  auto* mq_train = mq->add_subcommand("train", "train and write validation detections");
  add_common(mq_train, common);
  mq_train->callback([&] { run_and_print(resolve(common), Stage::kMq); });
  auto* mq_eval = mq->add_subcommand("eval", "score a prediction file");
  add_common(mq_eval, common);
  mq_eval->add_option("--predictions", predictions, "prediction JSON-lines");
  mq_eval->callback([&] {
    const auto cfg = resolve(common);
    print(evaluate_moments_file(cfg, predictions.empty() ? cfg.out_dir / "mq" / "predictions_val.jsonl"
                                                         : fs::path(predictions)));
  });
  auto* mq_ens = mq->add_subcommand("ensemble", "average detection logits of several models");
  add_common(mq_ens, common);
  mq_ens->add_option("--inputs", inputs, "detection JSON-lines files")->required()->expected(1, -1);
  mq_ens->add_option("--merged", merged, "output prediction file")->required();
  mq_ens->callback([&] {
    const auto cfg = resolve(common);
    const std::vector<fs::path> paths(inputs.begin(), inputs.end());
    print(ensemble_moment_files(cfg, paths, merged));
  });

  auto* lta = app.add_subcommand("lta", "long-term anticipation track");
  lta->require_subcommand(1);
  for (const char* verb : {"classify", "predict"}) {
    auto* sub = lta->add_subcommand(verb, std::string(verb) == "classify"
                                              ? "train the clip classifier and the sequence model, report top-1"
                                              : "train and write K candidate futures per example");
    add_common(sub, common);
    sub->callback([&] { run_and_print(resolve(common), Stage::kLta); });
  }
  std::string candidates;
  auto* lta_eval = lta->add_subcommand("eval", "edit distance of a candidate file");
  add_common(lta_eval, common);
  lta_eval->add_option("--candidates", candidates, "candidate JSON-lines");
  lta_eval->callback([&] {
    const auto cfg = resolve(common);
    print(evaluate_candidates_file(cfg, candidates.empty() ? cfg.out_dir / "lta" / "candidates_val.jsonl"
                                                           : fs::path(candidates)));
  });

  bool zero_shot = false;
  auto* ek = app.add_subcommand("ek", "kitchen tracks");
  ek->require_subcommand(1);
  for (const auto& [name, stage] :
       {std::pair{"ar", Stage::kEkAr}, std::pair{"mir", Stage::kEkMir}, std::pair{"uda", Stage::kEkUda}}) {
    auto* sub = ek->add_subcommand(name, std::string("kitchen ") + name);
    add_common(sub, common);
    if (stage == Stage::kEkMir) sub->add_flag("--zero-shot", zero_shot, "evaluate the stage-2 checkpoint only");
    sub->callback([&common, &zero_shot, stage = stage] {
      StageOptions opts;
      opts.zero_shot_only = zero_shot;
      run_and_print(resolve(common), stage, opts);
    });
  }

  auto* ens = app.add_subcommand("ensemble", "merge grounding prediction files");
  add_common(ens, common);
  ens->add_option("--inputs", inputs, "prediction JSON-lines files")->required()->expected(1, -1);
  ens->add_option("--weights", weights, "comma-separated weights (default uniform)");
  ens->add_option("--merged", merged, "output prediction file")->required();
  ens->callback([&] {
    const auto cfg = resolve(common);
    const std::vector<fs::path> paths(inputs.begin(), inputs.end());
    const auto w = ensemble::parse_weights(weights, paths.size());
    print(ensemble_grounding_files(cfg, paths, w, merged));
  });

  auto* report = app.add_subcommand("report", "render result tables from every manifest under --out");
  add_common(report, common);
  report->callback([&] {
    const auto cfg = resolve(common);
    std::vector<std::string> warnings;
    const auto text = render_report(cfg.out_dir, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    std::cout << text;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const egovideo::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const egovideo::MissingDependency& e) {
    std::cerr << "missing dependency: " << e.what() << "\n";
    return 3;
  } catch (const egovideo::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
