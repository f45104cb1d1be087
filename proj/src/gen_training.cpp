#include "redkit/gen_training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include "redkit/instrument.hpp"
#include "redkit/optimizer.hpp"

namespace redkit {

StyleDiscriminator StyleDiscriminator::init(int dim, std::mt19937_64& rng) {
  StyleDiscriminator d;
  d.proj = Tensor::randn({dim, 2}, rng, 1.0 / std::sqrt(double(dim)), true);
  d.bias = Tensor({2}, 0.0, true);
  return d;
}

Tensor StyleDiscriminator::logits(const Tensor& pooled) const {
  return add_bias(matmul(stack_rows({pooled}), proj), bias);
}

std::vector<std::pair<std::string, Tensor>> StyleDiscriminator::named_params()
    const {
  return {{"style_disc.proj", proj}, {"style_disc.bias", bias}};
}

void StyleDiscriminator::set_trainable(bool trainable) {
  proj.set_requires_grad(trainable);
  bias.set_requires_grad(trainable);
}

// ---------------------------------------------------------------------------
// Losses

namespace {

std::vector<int> clipped_tokens(const Vocabulary& vocab,
                                const std::string& text, int limit) {
  auto ids = vocab.encode(text);
  if (static_cast<int>(ids.size()) > limit) ids.resize(limit);
  return ids;
}

Tensor target_nll(const Seq2SeqBackbone& backbone, const Tensor& hidden,
                  const std::vector<LowRankAdapter>& experts,
                  const TuningTarget& target) {
  Tensor combined = combine_experts(hidden, experts, target.expert_subset);
  return backbone.teacher_forced_nll(combined, target.target_tokens);
}

}  // namespace

Tensor loss_generation(const Seq2SeqBackbone& backbone, const ExpertBank& bank,
                       const std::vector<TuningTarget>& batch) {
  if (batch.empty()) throw ArgumentError("loss_generation: empty batch");
  instrument::increment("generator.loss_generation");
  Tensor real_sum = Tensor::scalar(0.0);
  Tensor knowledge_sum = Tensor::scalar(0.0);
  int real_count = 0, knowledge_count = 0;
  for (const auto& target : batch) {
    Tensor hidden = backbone.encode(target.post_tokens);
    Tensor nll = target_nll(backbone, hidden, bank.experts, target);
    if (target.from_knowledge) {
      knowledge_sum = add(knowledge_sum, nll);
      ++knowledge_count;
    } else {
      real_sum = add(real_sum, nll);
      ++real_count;
    }
  }
  Tensor loss = Tensor::scalar(0.0);
  if (real_count > 0) {
    loss = add(loss, scale(real_sum, 1.0 / real_count));
  }
  if (knowledge_count > 0) {
    loss = add(loss, scale(knowledge_sum, 1.0 / knowledge_count));
  }
  return loss;
}

Tensor loss_human_style(const Seq2SeqBackbone& backbone,
                        const ExpertBank& bank,
                        const std::vector<TuningTarget>& batch) {
  if (batch.empty()) throw ArgumentError("loss_human_style: empty batch");
  instrument::increment("generator.loss_human_style");
  Tensor sum = Tensor::scalar(0.0);
  for (const auto& target : batch) {
    if (target.from_knowledge) {
      throw ContractViolation(
          "loss_human_style: knowledge sample in a human-style batch");
    }
    Tensor hidden = backbone.encode(target.post_tokens);
    Tensor adapted = expert_forward(hidden, bank.human_expert);
    sum = add(sum, backbone.teacher_forced_nll(adapted, target.target_tokens));
  }
  return scale(sum, 1.0 / double(batch.size()));
}

Tensor loss_style_adversary(const std::vector<Tensor>& routed_pooled,
                            const std::vector<Tensor>& human_pooled,
                            const StyleDiscriminator& discriminator) {
  if (routed_pooled.empty() || routed_pooled.size() != human_pooled.size()) {
    throw ArgumentError("loss_style_adversary: pooled batches must align");
  }
  instrument::increment("generator.loss_style_adversary");
  Tensor sum = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < routed_pooled.size(); ++i) {
    Tensor reversed = gradient_reverse(routed_pooled[i]);
    Tensor routed_ce = cross_entropy(discriminator.logits(reversed), {0});
    Tensor human_ce = cross_entropy(
        discriminator.logits(human_pooled[i].detached()), {1});
    sum = add(sum, add(routed_ce, human_ce));
  }
  return scale(sum, 1.0 / double(routed_pooled.size()));
}

// ---------------------------------------------------------------------------
// Tuning loop

TunedGenerator tune_generator(const Seq2SeqBackbone& backbone,
                              const std::vector<PostRecord>& train_posts,
                              const std::vector<KnowledgeSample>& knowledge,
                              const TuningConfig& config) {
  if (train_posts.empty()) {
    throw ArgumentError("tune_generator: empty training set");
  }
  if (!backbone.frozen()) {
    throw ContractViolation("tune_generator: backbone must be frozen");
  }
  instrument::increment("generator.tune");
  const std::uint64_t backbone_sum = backbone.checksum();
  const int dim = backbone.config().model_dim;

  std::mt19937_64 rng(config.seed);
  TunedGenerator out;
  out.bank = ExpertBank::init(config.experts, dim, config.adapter_rank,
                              config.adapter_scale, rng);
  out.discriminator = StyleDiscriminator::init(dim, rng);

  std::vector<Tensor> opt_params;
  for (auto& [name, t] : out.bank.named_params()) {
    (void)name;
    opt_params.push_back(t);
  }
  for (auto& [name, t] : out.discriminator.named_params()) {
    (void)name;
    opt_params.push_back(t);
  }
  AdamConfig adam;
  adam.lr = config.lr;
  adam.weight_decay = config.weight_decay;
  adam.decoupled_decay = true;  // AdamW
  AdamOptimizer opt(opt_params, adam);

  // The backbone is frozen, so each post's hidden sequence is computed once.
  const Vocabulary& vocab = backbone.vocab();
  const int ctx_limit = backbone.config().max_len - 2;
  std::unordered_map<std::string, Tensor> hidden_cache;
  auto hidden_of = [&](const std::string& key, const std::string& text) {
    auto it = hidden_cache.find(key);
    if (it != hidden_cache.end()) return it->second;
    NoGradGuard no_grad;
    auto ids = clipped_tokens(vocab, text, ctx_limit);
    if (ids.empty()) ids.push_back(Vocabulary::kUnk);
    Tensor h = backbone.encode(ids);
    hidden_cache.emplace(key, h);
    return h;
  };

  // Snapshots allow restoring the last good state on a training abort.
  auto snapshot = [&]() {
    std::vector<std::vector<double>> copy;
    for (const auto& t : opt_params) {
      copy.emplace_back(t.data(), t.data() + t.numel());
    }
    return copy;
  };
  auto restore = [&](const std::vector<std::vector<double>>& copy) {
    for (std::size_t i = 0; i < opt_params.size(); ++i) {
      std::copy(copy[i].begin(), copy[i].end(), opt_params[i].data());
    }
  };
  auto last_good = snapshot();

  struct PendingTarget {
    std::string hidden_key;
    std::string post_text;
    std::vector<int> target_tokens;
    bool from_knowledge;
    std::vector<int> expert_subset;
  };

  std::uniform_int_distribution<int> pick_expert(0, config.experts - 1);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();

    // Collect this epoch's targets per post, then route per post.
    std::vector<PendingTarget> targets;
    auto add_targets_for = [&](const std::string& key,
                               const std::string& post_text,
                               std::vector<std::vector<int>> target_token_sets,
                               bool from_knowledge) {
      if (target_token_sets.empty()) return;
      std::vector<std::vector<int>> subsets;
      if (config.disable_routing) {
        for (std::size_t i = 0; i < target_token_sets.size(); ++i) {
          subsets.push_back({pick_expert(rng)});
        }
      } else {
        Tensor hidden = hidden_of(key, post_text);
        auto pooled = pooled_expert_embeddings(hidden, out.bank.experts);
        auto graph = build_similarity_graph(pooled, config.epsilon);
        auto grouping = connected_components(graph);
        auto plan = sample_routing_plan(
            grouping, static_cast<int>(target_token_sets.size()), rng);
        subsets = plan.subsets;
      }
      for (std::size_t i = 0; i < target_token_sets.size(); ++i) {
        targets.push_back({key, post_text, std::move(target_token_sets[i]),
                           from_knowledge, subsets[i]});
      }
    };

    for (const auto& post : train_posts) {
      if (post.comments.empty()) continue;
      std::vector<int> comment_ids(post.comments.size());
      std::iota(comment_ids.begin(), comment_ids.end(), 0);
      std::shuffle(comment_ids.begin(), comment_ids.end(), rng);
      const int take = std::min<int>(config.comments_per_post,
                                     static_cast<int>(comment_ids.size()));
      std::vector<std::vector<int>> token_sets;
      for (int i = 0; i < take; ++i) {
        auto toks = clipped_tokens(vocab, post.comments[comment_ids[i]],
                                   config.max_target_len);
        if (!toks.empty()) token_sets.push_back(std::move(toks));
      }
      add_targets_for(post.id, post.text, std::move(token_sets), false);
    }
    for (const auto& sample : knowledge) {
      auto toks =
          clipped_tokens(vocab, sample.comment, config.max_target_len);
      if (toks.empty()) continue;
      add_targets_for("k:" + sample.post_id, sample.source_post_text,
                      {std::move(toks)}, true);
    }
    if (targets.empty()) {
      throw ArgumentError("tune_generator: no usable targets");
    }
    std::shuffle(targets.begin(), targets.end(), rng);

    double gt_sum = 0.0, am_sum = 0.0, sa_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < targets.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(targets.size(), start + config.batch_size);
      Tape tape;

      Tensor real_sum = Tensor::scalar(0.0);
      Tensor knowledge_sum = Tensor::scalar(0.0);
      Tensor human_sum = Tensor::scalar(0.0);
      int real_count = 0, knowledge_count = 0;
      std::vector<Tensor> routed_pooled, human_pooled;

      const bool want_style = !config.disable_style_alignment &&
                              config.beta != 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& target = targets[i];
        Tensor hidden = hidden_of(target.hidden_key, target.post_text);
        Tensor combined =
            combine_experts(hidden, out.bank.experts, target.expert_subset);
        Tensor nll = backbone.teacher_forced_nll(combined,
                                                 target.target_tokens);
        if (target.from_knowledge) {
          knowledge_sum = add(knowledge_sum, nll);
          ++knowledge_count;
        } else {
          real_sum = add(real_sum, nll);
          ++real_count;
          Tensor human_seq = expert_forward(hidden, out.bank.human_expert);
          human_sum = add(human_sum,
                          backbone.teacher_forced_nll(human_seq,
                                                      target.target_tokens));
        }
        if (want_style) {
          routed_pooled.push_back(mean_rows(combined));
          NoGradGuard no_grad;
          human_pooled.push_back(
              mean_rows(expert_forward(hidden, out.bank.human_expert)));
        }
      }

      Tensor gt = Tensor::scalar(0.0);
      if (real_count > 0) gt = add(gt, scale(real_sum, 1.0 / real_count));
      if (knowledge_count > 0) {
        gt = add(gt, scale(knowledge_sum, 1.0 / knowledge_count));
      }
      Tensor total = gt;
      double am_value = 0.0;
      if (real_count > 0 && config.alpha != 0.0) {
        Tensor am = scale(human_sum, 1.0 / real_count);
        am_value = am.scalar_value();
        total = add(total, scale(am, config.alpha));
      }
      double sa_value = 0.0;
      if (want_style && !routed_pooled.empty()) {
        Tensor sa =
            loss_style_adversary(routed_pooled, human_pooled,
                                 out.discriminator);
        sa_value = sa.scalar_value();
        total = add(total, scale(sa, config.beta));
      }

      const double total_value = total.scalar_value();
      if (!std::isfinite(total_value)) {
        restore(last_good);
        throw TrainingAbort("generator tuning loss became non-finite in "
                            "epoch " + std::to_string(epoch));
      }
      gt_sum += gt.scalar_value();
      am_sum += am_value;
      sa_sum += sa_value;
      ++batches;

      tape.backward(total);
      opt.step();
      opt.zero_grad();
    }

    const auto epoch_end = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.loss_generation = gt_sum / double(batches);
    log.loss_human_style = am_sum / double(batches);
    log.loss_style_adversary = sa_sum / double(batches);
    log.wall_ms = std::chrono::duration<double, std::milli>(epoch_end -
                                                            epoch_start)
                      .count();
    out.log.push_back(log);
    last_good = snapshot();
  }

  if (backbone.checksum() != backbone_sum) {
    throw ContractViolation("tune_generator: frozen backbone was mutated");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation

std::vector<GeneratedComment> generate_comments_detailed(
    const std::string& post_text, const Seq2SeqBackbone& backbone,
    const ExpertBank& bank, const GenerateOptions& options) {
  if (options.count < 1) {
    throw ArgumentError("generate_comments: count must be >= 1");
  }
  instrument::increment("generator.generate");
  NoGradGuard no_grad;
  std::mt19937_64 rng(options.seed);

  auto ids = backbone.vocab().encode(post_text);
  const int limit = backbone.config().max_len - 2;
  if (static_cast<int>(ids.size()) > limit) ids.resize(limit);
  if (ids.empty()) ids.push_back(Vocabulary::kUnk);
  Tensor hidden = backbone.encode(ids);

  std::vector<std::vector<int>> subsets;
  switch (options.strategy) {
    case GenerateOptions::ExpertStrategy::kRouted: {
      auto pooled = pooled_expert_embeddings(hidden, bank.experts);
      auto graph = build_similarity_graph(pooled, options.epsilon);
      auto grouping = connected_components(graph);
      subsets = sample_routing_plan(grouping, options.count, rng).subsets;
      break;
    }
    case GenerateOptions::ExpertStrategy::kSingleRandom: {
      std::uniform_int_distribution<int> pick(
          0, static_cast<int>(bank.experts.size()) - 1);
      for (int k = 0; k < options.count; ++k) subsets.push_back({pick(rng)});
      break;
    }
    case GenerateOptions::ExpertStrategy::kSingleFixed: {
      if (options.fixed_expert < 0 ||
          options.fixed_expert >= static_cast<int>(bank.experts.size())) {
        throw IndexError("fixed expert index outside the bank");
      }
      for (int k = 0; k < options.count; ++k) {
        subsets.push_back({options.fixed_expert});
      }
      break;
    }
  }

  std::vector<GeneratedComment> out;
  out.reserve(options.count);
  for (const auto& subset : subsets) {
    Tensor combined = combine_experts(hidden, bank.experts, subset);
    DecodeOptions decode;
    decode.max_len = options.max_len;
    decode.mode = options.mode;
    decode.temperature = options.temperature;
    decode.seed = rng();
    auto tokens = backbone.decode(combined, decode);
    std::string text = backbone.vocab().decode(tokens);
    if (text.empty()) text = backbone.vocab().token(Vocabulary::kUnk);
    out.push_back({std::move(text), subset});
  }
  return out;
}

std::vector<std::string> generate_comments(const std::string& post_text,
                                           const Seq2SeqBackbone& backbone,
                                           const ExpertBank& bank,
                                           const GenerateOptions& options) {
  std::vector<std::string> texts;
  for (auto& g :
       generate_comments_detailed(post_text, backbone, bank, options)) {
    texts.push_back(std::move(g.text));
  }
  return texts;
}

}  // namespace redkit
