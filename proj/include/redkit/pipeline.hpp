#pragma once

// End-to-end orchestration: data preparation, per-seed pipeline runs
// (backbone pretraining, generator tuning, comment generation, detector
// training, evaluation, quality metrics), seed aggregation, and the
// train/test comment-count sweep.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "redkit/config.hpp"
#include "redkit/dataset.hpp"
#include "redkit/detector.hpp"
#include "redkit/gen_training.hpp"
#include "redkit/knowledge.hpp"

namespace redkit {

// Generated-comment counts (K, K') that equalize train and test totals.
struct BalancedCounts {
  int train_generated = 0;
  int test_generated = 0;
};

BalancedCounts balance_counts(int train_originals, int test_originals,
                              int target);

// Copy of the records with comment lists truncated to `cap` entries.
std::vector<PostRecord> cap_comments(std::vector<PostRecord> records,
                                     int cap);

struct PreparedData {
  std::vector<PostRecord> train, valid, test;  // caps already applied
  KnowledgeBase kb;
  Vocabulary vocab;
  int n_classes = 2;
  DatasetStats stats;
};

// Loads or synthesizes the corpus, applies the comment caps, builds the
// shared vocabulary, and loads or synthesizes the knowledge base.
PreparedData prepare_data(const RunConfig& config);

struct GeneratorArtifacts {
  Seq2SeqBackbone backbone;
  TunedGenerator tuned;
};
using GeneratorHandle = std::shared_ptr<GeneratorArtifacts>;

// Pretrains and freezes a backbone, builds the knowledge dataset (unless
// ablated), and tunes the expert bank for one seed.
GeneratorHandle build_generator(const PreparedData& data,
                                const RunConfig& config, int seed);

// Deterministic per-post comment generator closing over the artifacts.
CommentGenerator make_comment_generator(GeneratorHandle generator,
                                        const RunConfig& config,
                                        std::uint64_t run_seed);

struct QualityScores {
  double style_similarity = 0.0;
  double diversity = 0.0;
  bool available = false;
};

struct SeedOutcome {
  int seed = 0;
  MetricsReport metrics;
  QualityScores quality;
  std::vector<EpochLog> generator_log;
  int detector_epochs = 0;
  double best_valid_macro_f1 = 0.0;
  std::string error;  // non-empty when this seed failed

  nlohmann::json to_json() const;
};

struct SeedRunResult {
  SeedOutcome outcome;
  GeneratorHandle generator;                  // null when generation is off
  std::shared_ptr<TrainedDetector> detector;  // null on failure
};

// One full pipeline pass for a seed, honoring every ablation switch.
SeedRunResult run_seed(const PreparedData& data, const RunConfig& config,
                       int seed);

struct MetricAggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

struct ExperimentReport {
  nlohmann::json config;
  nlohmann::json dataset;
  std::vector<SeedOutcome> per_seed;
  std::map<std::string, MetricAggregate> aggregate;

  nlohmann::json to_json() const;
  std::string metrics_csv() const;
};

// Runs every configured seed (sequentially, or in parallel when
// seed_parallel is set) and aggregates. Individual seed failures are
// recorded in the report instead of aborting the whole run.
ExperimentReport run_experiment(const RunConfig& config);

// ---------------------------------------------------------------------------
// Comment-count sensitivity sweep

struct SweepCell {
  int train_count = 0;
  int test_count = 0;
  double macro_f1_mean = 0.0;
  double macro_f1_std = 0.0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  std::vector<double> per_seed_macro_f1;
};

struct SweepResult {
  std::vector<int> train_counts;
  std::vector<int> test_counts;
  std::vector<SweepCell> raw;       // original comments only, hard caps
  std::vector<SweepCell> balanced;  // generated comments fill to the target

  nlohmann::json to_json() const;
  std::string csv() const;
};

SweepResult sweep_comments(const RunConfig& config);

// Writes report.json/metrics.csv (or sweep.csv) under config.out_dir.
void write_report_files(const ExperimentReport& report,
                        const std::string& out_dir);
void write_sweep_files(const SweepResult& result, const std::string& out_dir);

}  // namespace redkit
