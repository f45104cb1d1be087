#include "redkit/fusion.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "redkit/instrument.hpp"

namespace redkit {

std::vector<double> CommentEmbeddingSet::stance_values() const {
  std::vector<double> out;
  out.reserve(stance_weights.size());
  for (const auto& w : stance_weights) out.push_back(w.scalar_value());
  return out;
}

FusionParams FusionParams::init(int dim, std::mt19937_64& rng) {
  const double s = 1.0 / std::sqrt(double(dim));
  FusionParams p;
  p.deny_attention = AttentionParams{Tensor::randn({dim, dim}, rng, s),
                                     Tensor::randn({dim, dim}, rng, s),
                                     Tensor::randn({dim, dim}, rng, s)};
  p.support_attention = AttentionParams{Tensor::randn({dim, dim}, rng, s),
                                        Tensor::randn({dim, dim}, rng, s),
                                        Tensor::randn({dim, dim}, rng, s)};
  p.fuse_proj = Tensor::randn({4 * dim, dim}, rng, 0.5 / std::sqrt(4.0 * dim));
  p.fuse_bias = Tensor({dim}, 0.0);
  p.set_trainable(true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> FusionParams::named_params()
    const {
  return {{"fusion.deny.q", deny_attention.query_proj},
          {"fusion.deny.k", deny_attention.key_proj},
          {"fusion.deny.v", deny_attention.value_proj},
          {"fusion.support.q", support_attention.query_proj},
          {"fusion.support.k", support_attention.key_proj},
          {"fusion.support.v", support_attention.value_proj},
          {"fusion.proj", fuse_proj},
          {"fusion.bias", fuse_bias}};
}

void FusionParams::set_trainable(bool trainable) {
  deny_attention.query_proj.set_requires_grad(trainable);
  deny_attention.key_proj.set_requires_grad(trainable);
  deny_attention.value_proj.set_requires_grad(trainable);
  support_attention.query_proj.set_requires_grad(trainable);
  support_attention.key_proj.set_requires_grad(trainable);
  support_attention.value_proj.set_requires_grad(trainable);
  fuse_proj.set_requires_grad(trainable);
  fuse_bias.set_requires_grad(trainable);
}

CommentEmbeddingSet embed_comments(const std::string& post_text,
                                   const std::vector<std::string>& comments,
                                   const TextEncoder& encoder) {
  CommentEmbeddingSet set;
  set.post_embedding = encoder.embed_text(post_text);
  for (const auto& text : comments) {
    if (Vocabulary::tokenize(text).empty()) {
      ++set.skipped_empty;
      instrument::increment("fusion.skipped_empty_comment");
      continue;
    }
    Tensor emb = encoder.embed_text(text);
    set.stance_weights.push_back(
        sub(Tensor::scalar(1.0), cosine_similarity(emb, set.post_embedding)));
    set.comment_embeddings.push_back(std::move(emb));
  }
  return set;
}

StanceSplit stance_split(const std::vector<double>& stance_weights,
                         std::optional<double> tau_override) {
  if (stance_weights.empty()) {
    throw ArgumentError("stance_split: empty comment set");
  }
  StanceSplit split;
  if (tau_override.has_value()) {
    split.tau = *tau_override;
  } else {
    std::vector<double> sorted = stance_weights;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    split.tau = (n % 2 == 1)
                    ? sorted[n / 2]
                    : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  for (std::size_t j = 0; j < stance_weights.size(); ++j) {
    if (stance_weights[j] > split.tau) {
      split.deny.push_back(static_cast<int>(j));
    } else {
      split.support.push_back(static_cast<int>(j));
    }
  }
  // Rescue an empty camp with the most extreme element of the other side.
  if (split.deny.empty() && split.support.size() > 1) {
    auto it = std::max_element(
        split.support.begin(), split.support.end(),
        [&](int a, int b) { return stance_weights[a] < stance_weights[b]; });
    split.deny.push_back(*it);
    split.support.erase(it);
  } else if (split.support.empty() && split.deny.size() > 1) {
    auto it = std::min_element(
        split.deny.begin(), split.deny.end(),
        [&](int a, int b) { return stance_weights[a] < stance_weights[b]; });
    split.support.push_back(*it);
    split.deny.erase(it);
  } else if (split.deny.empty() && split.support.size() == 1) {
    // A singleton set cannot populate both camps; the lone comment counts
    // as the deny camp and the support side pools to zero downstream.
    split.deny = split.support;
    split.support.clear();
  }
  return split;
}

Tensor pool_subset(const std::vector<Tensor>& comment_embeddings,
                   const std::vector<Tensor>& stance_weights,
                   const std::vector<int>& subset,
                   const AttentionParams& attention_params) {
  if (subset.empty()) {
    throw ContractViolation("pool_subset: empty camp");
  }
  std::vector<Tensor> rows;
  std::vector<Tensor> weights;
  rows.reserve(subset.size());
  weights.reserve(subset.size());
  for (int j : subset) {
    rows.push_back(comment_embeddings.at(j));
    weights.push_back(stance_weights.at(j));
  }
  Tensor stacked = stack_rows(rows);
  Tensor weight_vec = concat(weights);  // scalars -> rank-1 [k]
  Tensor scaled = mul_rowwise(stacked, weight_vec);
  Tensor attended = self_attention(scaled, attention_params);
  return mean_rows(attended);
}

Tensor fuse(const Tensor& deny_pooled, const Tensor& support_pooled,
            const Tensor& fuse_proj, const Tensor& fuse_bias) {
  if (deny_pooled.rank() != 1 || support_pooled.rank() != 1 ||
      deny_pooled.numel() != support_pooled.numel()) {
    throw DimensionError("fuse: camp features must be equal-length vectors");
  }
  const int d = static_cast<int>(deny_pooled.numel());
  if (fuse_proj.rank() != 2 || fuse_proj.rows() != 4 * d) {
    throw DimensionError("fuse: projection must be [4d, d]");
  }
  instrument::increment("fusion.fuse");
  Tensor features = concat({deny_pooled, mul(deny_pooled, support_pooled),
                            sub(deny_pooled, support_pooled), support_pooled});
  Tensor as_row = stack_rows({features});
  return mean_rows(add_bias(matmul(as_row, fuse_proj), fuse_bias));
}

Tensor controversy_feature(const CommentEmbeddingSet& set,
                           const FusionParams& params,
                           std::optional<double> tau_override) {
  const int d = static_cast<int>(params.fuse_bias.numel());
  if (set.comment_embeddings.empty()) {
    return Tensor({d}, 0.0);
  }
  StanceSplit split = stance_split(set.stance_values(), tau_override);
  Tensor zero({d}, 0.0);
  Tensor deny = split.deny.empty()
                    ? zero
                    : pool_subset(set.comment_embeddings, set.stance_weights,
                                  split.deny, params.deny_attention);
  Tensor support = split.support.empty()
                       ? zero
                       : pool_subset(set.comment_embeddings,
                                     set.stance_weights, split.support,
                                     params.support_attention);
  return fuse(deny, support, params.fuse_proj, params.fuse_bias);
}

std::string stance_debug_json(const std::string& post_id,
                              const CommentEmbeddingSet& set,
                              const StanceSplit& split) {
  nlohmann::json j;
  j["post_id"] = post_id;
  j["stance_weights"] = set.stance_values();
  j["tau"] = split.tau;
  j["deny"] = split.deny;
  j["support"] = split.support;
  return j.dump();
}

}  // namespace redkit
