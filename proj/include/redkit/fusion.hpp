#pragma once

// Controversy fusion: comments are split into a deny camp (stance weight
// above the threshold) and a support camp, each camp is pooled with its own
// self-attention, and the two camp features are fused through a learned
// projection of [deny; deny*support; deny-support; support].

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "redkit/model.hpp"
#include "redkit/tensor.hpp"

namespace redkit {

struct CommentEmbeddingSet {
  Tensor post_embedding;                  // rank-1 [d]
  std::vector<Tensor> comment_embeddings; // rank-1 [d] each
  // Stance weight 1 - cos(comment, post) per comment, kept as scalar
  // tensors so gradients flow through the weighting.
  std::vector<Tensor> stance_weights;
  int skipped_empty = 0;

  std::vector<double> stance_values() const;
};

struct FusionParams {
  AttentionParams deny_attention;     // pools the high-stance camp
  AttentionParams support_attention;  // pools the low-stance camp
  Tensor fuse_proj;  // [4d, d]
  Tensor fuse_bias;  // [d]

  static FusionParams init(int dim, std::mt19937_64& rng);
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  void set_trainable(bool trainable);
};

// Mean-pooled token embeddings for every non-empty comment plus the post.
// Empty comments are skipped (counted in skipped_empty).
CommentEmbeddingSet embed_comments(const std::string& post_text,
                                   const std::vector<std::string>& comments,
                                   const TextEncoder& encoder);

struct StanceSplit {
  std::vector<int> deny;     // stance weight strictly above the threshold
  std::vector<int> support;  // everything else (ties go here)
  double tau = 0.0;
};

// Splits on the interpolated median of the stance weights (or a fixed
// override). If the deny side comes out empty, the single most extreme
// element moves over so both camps are populated whenever the set has at
// least two members.
StanceSplit stance_split(const std::vector<double>& stance_weights,
                         std::optional<double> tau_override = std::nullopt);

// Rows scaled by their stance weights, one self-attention pass, mean pool.
Tensor pool_subset(const std::vector<Tensor>& comment_embeddings,
                   const std::vector<Tensor>& stance_weights,
                   const std::vector<int>& subset,
                   const AttentionParams& attention_params);

// [deny; deny*support; deny-support; support] . proj + bias
Tensor fuse(const Tensor& deny_pooled, const Tensor& support_pooled,
            const Tensor& fuse_proj, const Tensor& fuse_bias);

// Full fusion path. Zero comments yield a zero feature; with a single
// comment the support camp pools to the zero vector.
Tensor controversy_feature(const CommentEmbeddingSet& set,
                           const FusionParams& params,
                           std::optional<double> tau_override = std::nullopt);

// Per-post stance-split debug record for the CLI.
std::string stance_debug_json(const std::string& post_id,
                              const CommentEmbeddingSet& set,
                              const StanceSplit& split);

}  // namespace redkit
