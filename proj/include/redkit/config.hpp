#pragma once

// Experiment configuration: one flat struct mirrored by a `key = value`
// config file (UTF-8, '#' comments). CLI flags override file values.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "redkit/dataset.hpp"

namespace redkit {

struct RunConfig {
  // Data: an explicit dataset path, or the synthetic corpus when empty.
  std::string data_path;
  std::string kb_path;
  std::string out_dir = "out";

  std::uint64_t data_seed = 7;
  int synth_posts = 400;
  int synth_comments_per_post = 16;
  int synth_vocab_size = 120;
  int synth_classes = 2;
  double synth_separation = 0.5;
  double synth_entity_rate = 0.4;
  double synth_noise_comment_rate = 0.35;

  std::vector<int> seeds = {1, 2, 3, 4, 5};

  // Comment-count scenario: caps on available originals and the balancing
  // target (originals plus generated on both sides).
  int train_comment_cap = 16;
  int test_comment_cap = 2;
  int target_comments = 16;
  bool balance_comments = true;

  // Generator backbone.
  int model_dim = 32;
  int ffn_dim = 64;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int adapter_rank = 4;
  int vocab_max = 512;
  int max_len = 64;
  int backbone_steps = 250;
  double backbone_lr = 2e-3;

  // Generator tuning.
  int experts = 10;
  double epsilon = 0.5;
  double alpha = 1.0;
  double beta = 1.0;
  int gen_epochs = 5;
  int gen_batch = 8;
  double gen_lr = 2e-3;
  double gen_weight_decay = 0.01;
  int gen_comments_per_post = 2;
  int gen_max_target_len = 16;

  // Generation.
  std::string decode_mode = "greedy";  // greedy|sample
  double decode_temperature = 0.8;
  int decode_max_len = 12;

  // Detector.
  int det_encoder_layers = 1;
  double det_lr = 2e-3;
  int det_batch = 64;
  int det_patience = 10;
  int det_max_epochs = 40;

  // Ablation switches.
  bool no_cgt = false;
  bool no_sa = false;
  bool no_dk = false;
  bool no_hcr = false;
  bool no_mcf = false;

  // Sweep.
  std::vector<int> sweep_train_counts = {0, 1, 2, 4, 8, 16};
  std::vector<int> sweep_test_counts = {0, 1, 2, 4, 8, 16};
  std::string sweep_mode = "raw";  // raw|balanced|both

  bool seed_parallel = false;

  SyntheticConfig synthetic_config() const;
  void validate() const;
  nlohmann::json to_json() const;
};

// Parses `key = value` lines; '#' starts a comment. Unknown keys are
// rejected so typos fail loudly.
RunConfig load_config_file(const std::string& path);

// Applies one key/value pair (file or CLI override).
void apply_config_entry(RunConfig& config, const std::string& key,
                        const std::string& value);

}  // namespace redkit
