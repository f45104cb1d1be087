#pragma once

// Dataset records, the JSON-lines loader, per-split statistics, and the
// synthetic corpus generator used for self-contained experiments.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "redkit/common.hpp"

namespace redkit {

enum class Split { kTrain, kValid, kTest };

std::string split_name(Split split);
Split split_from_name(const std::string& name);

struct PostRecord {
  std::string id;
  std::string text;
  std::vector<std::string> comments;
  int label = 0;
  Split split = Split::kTrain;
};

// One JSON object per line: {"id","text","comments","label","split"}.
// Malformed lines and duplicate ids raise ValidationError with the line
// number; an empty file yields an empty dataset (the caller warns).
std::vector<PostRecord> load_dataset(const std::string& path);
void save_dataset(const std::string& path,
                  const std::vector<PostRecord>& records);

struct SplitStats {
  int posts = 0;
  double avg_comments = 0.0;
};

struct DatasetStats {
  SplitStats train, valid, test;
  int n_classes = 0;
};

DatasetStats dataset_stats(const std::vector<PostRecord>& records);

std::vector<PostRecord> split_of(const std::vector<PostRecord>& records,
                                 Split split);

// Mean comment token count over the given records (tokenizer rules).
double mean_comment_token_length(const std::vector<PostRecord>& records);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct KnowledgeEntry {
  std::string entity;
  std::string description;
};

struct SyntheticConfig {
  std::uint64_t seed = 7;
  int posts = 400;
  int comments_per_post = 16;
  int vocab_size = 120;
  int n_classes = 2;
  // Probability that a content token comes from the class-exclusive pool
  // instead of the shared pool. 1.0 makes class vocabularies disjoint.
  double class_separation = 0.5;
  // Fraction of posts carrying one knowledge-base entity mention.
  double kb_entity_rate = 0.4;
  // Fraction of comments that are off-topic chatter (shared/style tokens
  // only, no class signal). Off-topic comments sit far from their post in
  // embedding space, which is what makes the stance split informative.
  double noise_comment_rate = 0.35;
  double valid_fraction = 0.15;
  double test_fraction = 0.15;
};

struct SyntheticCorpus {
  std::vector<PostRecord> posts;
  std::vector<KnowledgeEntry> knowledge;
};

// Posts and comments are drawn from class-conditional token distributions
// with controllable overlap; a pool of style tokens appears in comments of
// every class so comment style is distinguishable from post style. Equal
// seeds give byte-identical corpora.
SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config);

}  // namespace redkit
