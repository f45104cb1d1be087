#pragma once

// Collaborative generator tuning. Three objectives combine per batch:
//   - generation loss: teacher-forced token cross-entropy of real comments
//     through routed expert combinations, plus the same over synthesized
//     knowledge comments;
//   - human-style loss: the same teacher-forced loss through the dedicated
//     human-style expert, real comments only;
//   - style-adversary loss: a linear discriminator separates routed outputs
//     from human-expert outputs; a gradient-reversal layer in front of it
//     turns the experts' update into the opposing direction, so one
//     optimizer step realizes the min-max game.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "redkit/dataset.hpp"
#include "redkit/knowledge.hpp"
#include "redkit/model.hpp"
#include "redkit/routing.hpp"
#include "redkit/tensor.hpp"

namespace redkit {

struct StyleDiscriminator {
  Tensor proj;  // [d,2]; label 1 = human-style, 0 = routed output
  Tensor bias;  // [2]

  static StyleDiscriminator init(int dim, std::mt19937_64& rng);
  Tensor logits(const Tensor& pooled) const;  // [1,2]
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  void set_trainable(bool trainable);
};

struct TuningConfig {
  int experts = 10;
  int adapter_rank = 4;
  double adapter_scale = 1.0;
  double alpha = 1.0;  // weight of the human-style loss
  double beta = 1.0;   // weight of the style-adversary loss
  int epochs = 5;
  int batch_size = 8;
  double epsilon = 0.5;  // similarity-graph pruning threshold
  double lr = 2e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  // Per-epoch cap on real comment targets sampled per post.
  int comments_per_post = 2;
  int max_target_len = 16;
  bool disable_style_alignment = false;  // drops the beta term
  bool disable_routing = false;  // one uniformly chosen expert per target
};

// One teacher-forcing target with its routed expert subset.
struct TuningTarget {
  std::vector<int> post_tokens;
  std::vector<int> target_tokens;
  bool from_knowledge = false;
  std::vector<int> expert_subset;
};

// Mean over real targets of token-mean cross-entropy through the combined
// experts, plus the same mean over knowledge targets (zero when absent).
// Gradients reach the routed adapters only.
Tensor loss_generation(const Seq2SeqBackbone& backbone, const ExpertBank& bank,
                       const std::vector<TuningTarget>& batch);

// Teacher-forced loss through the human-style expert over real comments
// only; a knowledge target in the batch is a contract violation.
Tensor loss_human_style(const Seq2SeqBackbone& backbone,
                        const ExpertBank& bank,
                        const std::vector<TuningTarget>& batch);

// Mean over pairs of CE(reversed(routed) . W, 0) + CE(human . W, 1). The
// routed side passes through the gradient-reversal layer; the human side is
// treated as a constant.
Tensor loss_style_adversary(const std::vector<Tensor>& routed_pooled,
                            const std::vector<Tensor>& human_pooled,
                            const StyleDiscriminator& discriminator);

struct EpochLog {
  int epoch = 0;
  double loss_generation = 0.0;
  double loss_human_style = 0.0;
  double loss_style_adversary = 0.0;
  double wall_ms = 0.0;
};

struct TunedGenerator {
  ExpertBank bank;
  StyleDiscriminator discriminator;
  std::vector<EpochLog> log;
};

// Full tuning loop over the train posts (plus knowledge samples). The
// backbone must already be frozen; its checksum is asserted unchanged.
// Routing subsets are resampled every epoch. Aborts restore the last
// end-of-epoch parameters before throwing.
TunedGenerator tune_generator(const Seq2SeqBackbone& backbone,
                              const std::vector<PostRecord>& train_posts,
                              const std::vector<KnowledgeSample>& knowledge,
                              const TuningConfig& config);

// ---------------------------------------------------------------------------
// Generation

struct GenerateOptions {
  int count = 1;  // comments to produce
  double epsilon = 0.5;
  int max_len = 16;
  DecodeOptions::Mode mode = DecodeOptions::Mode::kGreedy;
  double temperature = 0.8;
  std::uint64_t seed = 0;

  enum class ExpertStrategy { kRouted, kSingleRandom, kSingleFixed };
  ExpertStrategy strategy = ExpertStrategy::kRouted;
  int fixed_expert = 0;
};

struct GeneratedComment {
  std::string text;
  std::vector<int> expert_subset;
};

std::vector<GeneratedComment> generate_comments_detailed(
    const std::string& post_text, const Seq2SeqBackbone& backbone,
    const ExpertBank& bank, const GenerateOptions& options);

std::vector<std::string> generate_comments(const std::string& post_text,
                                           const Seq2SeqBackbone& backbone,
                                           const ExpertBank& bank,
                                           const GenerateOptions& options);

}  // namespace redkit
