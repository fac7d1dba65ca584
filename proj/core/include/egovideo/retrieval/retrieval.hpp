#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "egovideo/common/jsonl.hpp"
#include "egovideo/encoders/classifier.hpp"
#include "egovideo/encoders/pretrain.hpp"

namespace egovideo::retrieval {

using nn::Matrix;

// ---- recognition ----------------------------------------------------------------

struct RecognitionConfig {
  int epochs = 100;
  double lr = 1e-5;
  int batch_size = 48;
  int warmup_epochs = 2;
  double weight_decay = 0.01;
  uint64_t seed = 0;
};

void validate(const RecognitionConfig& config);
io::Json to_json(const RecognitionConfig& config);
RecognitionConfig recognition_config_from_json(const io::Json& j, RecognitionConfig base = {});

std::vector<encoders::LabeledClip> labeled_clips(const corpus::World& world,
                                                 std::span<const corpus::RecognitionAnnotation> annotations);

encoders::ActionClassifier recognize_train(const encoders::TwoTowerModel& backbone,
                                           std::span<const encoders::LabeledClip> train, int num_verbs,
                                           int num_nouns, const RecognitionConfig& config,
                                           std::function<void(int epoch, double mean_loss)> on_epoch = {});

struct RecognitionAccuracy {
  double verb_top1 = 0.0;
  double noun_top1 = 0.0;
  double action_top1 = 0.0;
  double verb_top5 = 0.0;
  double noun_top5 = 0.0;
  int count = 0;
};

RecognitionAccuracy recognition_accuracy(const encoders::ClassifierScores& scores,
                                         std::span<const corpus::ActionToken> labels);
RecognitionAccuracy evaluate_recognition(const encoders::ActionClassifier& model,
                                         std::span<const encoders::LabeledClip> data);

struct RecognitionRow {
  std::string clip_id;
  int verb_id = 0;
  int noun_id = 0;
};

// CSV with header clip_id,verb_id,noun_id.
void write_recognition_csv(const std::filesystem::path& path, std::span<const RecognitionRow> rows);
std::vector<RecognitionRow> read_recognition_csv(const std::filesystem::path& path);

// ---- retrieval metrics -------------------------------------------------------------

// Q x G inner products of unit-norm text rows with unit-norm video rows.
Matrix similarity_matrix(const Matrix& video, const Matrix& text);

struct RelevanceMatrix {
  Matrix values;  // Q x G in [0, 1]
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  // Queries whose caption names no verb and no noun; their rows are zero.
  std::vector<int> unparsed_rows;
};

// 0.5 * (verb-set Jaccard + noun-set Jaccard); an empty pair of sets counts 0.
RelevanceMatrix build_relevance(std::span<const std::string> queries, std::span<const std::string> gallery,
                                const corpus::Vocabulary& vocab);

struct DirectionalScores {
  double t2v = 0.0;
  double v2t = 0.0;
  double avg = 0.0;
  int excluded_t2v = 0;
  int excluded_v2t = 0;
};

// Ranking is descending similarity with ties on the lower gallery index.
std::vector<int> rank_gallery(const Matrix& sim, nn::Index row);

// Fraction of rows whose paired column (same index) ranks within the top k.
double paired_recall_at_k(const Matrix& sim, int k);

DirectionalScores retrieval_map(const Matrix& sim, const Matrix& rel);
DirectionalScores retrieval_ndcg(const Matrix& sim, const Matrix& rel);

// ---- retrieval fine-tuning ---------------------------------------------------------

struct RetrievalConfig {
  int epochs = 50;
  double lr = 1e-5;
  int batch_size = 8;
  int warmup_epochs = 1;
  double weight_decay = 0.01;
  uint64_t seed = 0;
};

void validate(const RetrievalConfig& config);
io::Json to_json(const RetrievalConfig& config);
RetrievalConfig retrieval_config_from_json(const io::Json& j, RetrievalConfig base = {});

// Clip windows paired with their short "<verb> <noun>" narrations.
std::vector<encoders::TrainingPair> retrieval_pairs(const corpus::World& world,
                                                    std::span<const corpus::RecognitionAnnotation> annotations);

// epochs = 0 returns the stage-2 checkpoint unchanged (the zero-shot path).
encoders::PretrainResult finetune_retrieval(const encoders::TwoTowerModel& stage2,
                                            std::span<const encoders::TrainingPair> pairs,
                                            const RetrievalConfig& config);

struct Embeddings {
  Matrix video;  // G x D
  Matrix text;   // Q x D
};

Embeddings embed_pairs(const encoders::TwoTowerModel& model, std::span<const encoders::TrainingPair> pairs);

struct RetrievalReport {
  DirectionalScores map;
  DirectionalScores ndcg;
};

RetrievalReport evaluate_retrieval(const encoders::TwoTowerModel& model,
                                   std::span<const encoders::TrainingPair> pairs);

// Rows stored as a feature file with unit snippet geometry.
void write_embeddings(const std::filesystem::path& path, const Matrix& rows, const std::string& id);
Matrix read_embeddings(const std::filesystem::path& path);

// ---- domain adaptation ---------------------------------------------------------------

class DomainSplit;

// Target labels, readable only while no source-only training is running.
class HeldOutLabels {
 public:
  const std::vector<corpus::ActionToken>& get() const;
  size_t size() const { return labels_.size(); }

 private:
  friend class DomainSplit;
  std::vector<corpus::ActionToken> labels_;
};

class DomainSplit {
 public:
  struct Built;
  // Throws InvalidArgument when the two sides share a clip id.
  static Built make(std::vector<encoders::LabeledClip> source, std::vector<std::string> source_ids,
                    std::vector<encoders::LabeledClip> target, std::vector<std::string> target_ids);

  std::span<const encoders::LabeledClip> source() const { return source_; }
  std::span<const corpus::FrameView> target() const { return target_; }
  const std::vector<std::string>& source_ids() const { return source_ids_; }
  const std::vector<std::string>& target_ids() const { return target_ids_; }

 private:
  std::vector<encoders::LabeledClip> source_;
  std::vector<corpus::FrameView> target_;
  std::vector<std::string> source_ids_;
  std::vector<std::string> target_ids_;
};

struct DomainSplit::Built {
  DomainSplit split;
  HeldOutLabels target_labels;
};

// True while domain_adapt_train runs on this thread.
bool source_only_training_active();

// recognize_train on the source side only. on_epoch runs inside the
// source-only scope.
encoders::ActionClassifier domain_adapt_train(const encoders::TwoTowerModel& backbone, const DomainSplit& split,
                                              int num_verbs, int num_nouns, const RecognitionConfig& config,
                                              std::function<void(int epoch, double mean_loss)> on_epoch = {});

RecognitionAccuracy evaluate_target(const encoders::ActionClassifier& model, const DomainSplit& split,
                                    const HeldOutLabels& labels);

}  // namespace egovideo::retrieval
