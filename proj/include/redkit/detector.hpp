#pragma once

// Veracity detection: a trainable text encoder feeds the fusion module, the
// concatenated [post; controversy] feature goes through a linear classifier,
// and training early-stops on validation macro F1. Evaluation reports
// accuracy, macro F1/precision/recall, and rank-based AUC.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "redkit/dataset.hpp"
#include "redkit/fusion.hpp"
#include "redkit/model.hpp"

namespace redkit {

struct DetectorConfig {
  int model_dim = 32;
  int encoder_layers = 1;
  int ffn_dim = 64;
  int max_len = 64;
  int n_classes = 2;
  double lr = 7e-5;
  int batch_size = 64;
  int patience = 10;
  int max_epochs = 200;
  std::uint64_t seed = 1;
  // Replaces controversy fusion with a plain mean over comment embeddings.
  bool mean_pool_fusion = false;
};

struct DetectorParams {
  TextEncoder encoder;
  FusionParams fusion;
  Tensor classifier;       // [2d, C]
  Tensor classifier_bias;  // [C]
  DetectorConfig config;

  static DetectorParams init(const Vocabulary& vocab,
                             const DetectorConfig& config,
                             std::mt19937_64& rng);
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  void set_trainable(bool trainable);
  DetectorParams clone() const;

  void save(const std::string& path,
            const nlohmann::json& extra_meta = nlohmann::json::object()) const;
  static DetectorParams load(const std::string& path);
};

// Class probability vector for a post given at least one comment.
std::vector<double> predict(const std::string& post_text,
                            const std::vector<std::string>& comments,
                            const DetectorParams& params);

// Forward used by training and evaluation; tolerates zero comments (the
// comment feature is then the zero vector).
Tensor detector_logits(const std::string& post_text,
                       const std::vector<std::string>& comments,
                       const DetectorParams& params);

// ---------------------------------------------------------------------------
// Metrics

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int support = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double auc = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  std::vector<ClassMetrics> per_class;
  int n_samples = 0;

  nlohmann::json to_json() const;
};

// Rank-based (Mann-Whitney) AUC with midrank tie correction. Labels are
// binary; both classes must be present.
double compute_auc(const std::vector<double>& scores,
                   const std::vector<int>& labels);

// Metrics from labels, argmax predictions, and per-class scores. AUC is the
// unweighted one-vs-rest mean over classes present in the labels.
MetricsReport compute_metrics(const std::vector<int>& labels,
                              const std::vector<int>& predictions,
                              const std::vector<std::vector<double>>& scores);

// ---------------------------------------------------------------------------
// Training and evaluation

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_macro_f1 = 0.0;
};

struct TrainedDetector {
  DetectorParams params;
  std::vector<EpochRecord> history;
  double best_valid_macro_f1 = 0.0;
  int best_epoch = 0;
};

// Adam training of the classification loss over encoder, fusion, and
// classifier; stops when validation macro F1 has not improved for
// `patience` consecutive epochs and returns the best-validation checkpoint.
TrainedDetector train_detector(const std::vector<PostRecord>& train_records,
                               const std::vector<PostRecord>& valid_records,
                               const Vocabulary& vocab,
                               const DetectorConfig& config);

// Produces extra comments for a test post: (record, how_many) -> texts.
using CommentGenerator =
    std::function<std::vector<std::string>(const PostRecord&, int)>;

// Appends `generated_per_post` generated comments to each record's
// originals, predicts, and scores. The generator may be null only when
// generated_per_post is zero.
MetricsReport evaluate(const std::vector<PostRecord>& test_records,
                       const DetectorParams& params, int generated_per_post,
                       const CommentGenerator& generator);

}  // namespace redkit
