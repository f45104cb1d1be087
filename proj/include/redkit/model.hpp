#pragma once

// Toy sequence models trained from scratch:
//  - Seq2SeqBackbone: a small encoder-decoder used as the frozen comment
//    generator backbone, with trainable low-rank adapters layered on top of
//    the encoder output.
//  - TextEncoder: an independent encoder the detector trains end to end for
//    post/comment embeddings.
//
// Single-head attention, learned positions, no normalization layers; at
// these dimensions plain residual blocks train fine with Adam.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "redkit/tensor.hpp"
#include "redkit/vocab.hpp"

namespace redkit {

struct FeedForwardParams {
  Tensor in_proj;   // [d,f]
  Tensor in_bias;   // [f]
  Tensor out_proj;  // [f,d]
  Tensor out_bias;  // [d]
};

struct EncoderLayerParams {
  AttentionParams attn;
  Tensor attn_out;  // [d,d]
  FeedForwardParams ffn;
};

struct DecoderLayerParams {
  AttentionParams self_attn;
  Tensor self_out;  // [d,d]
  AttentionParams cross_attn;
  Tensor cross_out;  // [d,d]
  FeedForwardParams ffn;
};

struct BackboneConfig {
  int model_dim = 32;
  int ffn_dim = 64;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int max_len = 64;
};

struct DecodeOptions {
  enum class Mode { kGreedy, kSample };
  int max_len = 16;
  Mode mode = Mode::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

class Seq2SeqBackbone {
 public:
  Seq2SeqBackbone() = default;
  Seq2SeqBackbone(Vocabulary vocab, BackboneConfig config,
                  std::mt19937_64& rng);

  // Per-token hidden states of the encoder, [n,d]. key_keep (optional)
  // masks padding positions out of the attention keys.
  Tensor encode(const std::vector<int>& tokens,
                const std::vector<int>& key_keep = {}) const;

  // Logits [len(decoder_input), V] for the next token at every position,
  // cross-attending over `memory`.
  Tensor decode_logits(const Tensor& memory,
                       const std::vector<int>& decoder_input) const;

  // Mean token-level cross-entropy of `target` (plus the closing EOS) under
  // teacher forcing against `memory`.
  Tensor teacher_forced_nll(const Tensor& memory,
                            const std::vector<int>& target) const;

  // Auto-regressive generation attending over `memory`; stops at EOS or
  // max_len. Sampling is reproducible given the seed. Never emits PAD.
  std::vector<int> decode(const Tensor& memory,
                          const DecodeOptions& options) const;

  void set_trainable(bool trainable);
  void freeze() { set_trainable(false); frozen_ = true; }
  bool frozen() const { return frozen_; }

  std::vector<std::pair<std::string, Tensor>> named_params() const;
  std::uint64_t checksum() const;

  const Vocabulary& vocab() const { return vocab_; }
  const BackboneConfig& config() const { return config_; }

  void save(const std::string& path,
            const nlohmann::json& extra_meta = nlohmann::json::object()) const;
  static Seq2SeqBackbone load(const std::string& path);

 private:
  Tensor embed(const std::vector<int>& tokens) const;

  Vocabulary vocab_;
  BackboneConfig config_;
  Tensor tok_embed_;  // [V,d], shared by encoder and decoder
  Tensor pos_embed_;  // [max_len,d]
  std::vector<EncoderLayerParams> encoder_;
  std::vector<DecoderLayerParams> decoder_;
  Tensor out_proj_;  // [d,V]
  Tensor out_bias_;  // [V]
  bool frozen_ = false;
};

class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(Vocabulary vocab, int model_dim, int layers, int ffn_dim,
              int max_len, std::mt19937_64& rng);

  Tensor encode(const std::vector<int>& tokens) const;  // [n,d]
  // Mean-pooled token embedding of the text, rank-1 [d].
  Tensor embed_text(const std::string& text) const;

  int model_dim() const { return model_dim_; }
  const Vocabulary& vocab() const { return vocab_; }

  void set_trainable(bool trainable);
  std::vector<std::pair<std::string, Tensor>> named_params() const;

  void save(const std::string& path,
            const nlohmann::json& extra_meta = nlohmann::json::object()) const;
  static TextEncoder load(const std::string& path);

 private:
  Vocabulary vocab_;
  int model_dim_ = 0;
  int ffn_dim_ = 0;
  int max_len_ = 0;
  Tensor tok_embed_;  // no positional table: see encode()
  std::vector<EncoderLayerParams> layers_;
};

// ---------------------------------------------------------------------------
// Low-rank adapters (the experts).

struct LowRankAdapter {
  Tensor down;  // [d,r]
  Tensor up;    // [r,d], all-zero at init so the adapter starts as identity
  double scale = 1.0;

  static LowRankAdapter init(int dim, int rank, double scale,
                             std::mt19937_64& rng);
  // h + scale * ((h . down) . up)
  Tensor apply(const Tensor& h) const;
  void set_trainable(bool trainable);
};

// Adapter view of the hidden sequence; alias for adapter.apply.
Tensor expert_forward(const Tensor& hidden, const LowRankAdapter& adapter);

struct ExpertBank {
  std::vector<LowRankAdapter> experts;  // routed experts, never the human one
  LowRankAdapter human_expert;

  static ExpertBank init(int expert_count, int dim, int rank, double scale,
                         std::mt19937_64& rng);
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  void set_trainable(bool trainable);

  void save(const std::string& path,
            const nlohmann::json& extra_meta = nlohmann::json::object()) const;
  static ExpertBank load(const std::string& path);
};

// ---------------------------------------------------------------------------
// In-repo self-supervised pretraining (text reconstruction). The caller
// freezes the backbone afterwards.

struct PretrainConfig {
  int steps = 300;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  // Fraction of encoder input tokens replaced by UNK per sequence.
  double corruption_rate = 0.3;
};

// Returns the per-step loss curve.
std::vector<double> pretrain_backbone(Seq2SeqBackbone& model,
                                      const std::vector<std::string>& texts,
                                      const PretrainConfig& config);

}  // namespace redkit
