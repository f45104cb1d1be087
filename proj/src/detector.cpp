#include "redkit/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "redkit/checkpoint.hpp"
#include "redkit/instrument.hpp"
#include "redkit/optimizer.hpp"

namespace redkit {

DetectorParams DetectorParams::init(const Vocabulary& vocab,
                                    const DetectorConfig& config,
                                    std::mt19937_64& rng) {
  if (config.n_classes < 2) {
    throw ArgumentError("detector needs at least 2 classes");
  }
  DetectorParams p;
  p.config = config;
  p.encoder = TextEncoder(vocab, config.model_dim, config.encoder_layers,
                          config.ffn_dim, config.max_len, rng);
  p.fusion = FusionParams::init(config.model_dim, rng);
  p.classifier = Tensor::randn({2 * config.model_dim, config.n_classes}, rng,
                               0.02, true);
  p.classifier_bias = Tensor({config.n_classes}, 0.0, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> DetectorParams::named_params()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [name, t] : encoder.named_params()) {
    out.emplace_back("encoder." + name, t);
  }
  for (auto& [name, t] : fusion.named_params()) out.emplace_back(name, t);
  out.emplace_back("classifier", classifier);
  out.emplace_back("classifier_bias", classifier_bias);
  return out;
}

void DetectorParams::set_trainable(bool trainable) {
  encoder.set_trainable(trainable);
  fusion.set_trainable(trainable);
  classifier.set_requires_grad(trainable);
  classifier_bias.set_requires_grad(trainable);
}

DetectorParams DetectorParams::clone() const {
  // Round-trip through fresh storage so training cannot mutate the copy.
  DetectorParams copy = *this;
  copy.encoder = encoder;  // replaced below via save/load-free deep copy
  // TextEncoder/FusionParams share storage on assignment; rebuild by hand.
  std::mt19937_64 dummy(0);
  copy.encoder = TextEncoder(encoder.vocab(), config.model_dim,
                             config.encoder_layers, config.ffn_dim,
                             config.max_len, dummy);
  auto src_enc = encoder.named_params();
  auto dst_enc = copy.encoder.named_params();
  for (std::size_t i = 0; i < src_enc.size(); ++i) {
    std::copy(src_enc[i].second.data(),
              src_enc[i].second.data() + src_enc[i].second.numel(),
              dst_enc[i].second.data());
  }
  copy.fusion = FusionParams::init(config.model_dim, dummy);
  auto src_fus = fusion.named_params();
  auto dst_fus = copy.fusion.named_params();
  for (std::size_t i = 0; i < src_fus.size(); ++i) {
    std::copy(src_fus[i].second.data(),
              src_fus[i].second.data() + src_fus[i].second.numel(),
              dst_fus[i].second.data());
  }
  copy.classifier = classifier.clone();
  copy.classifier.set_requires_grad(true);
  copy.classifier_bias = classifier_bias.clone();
  copy.classifier_bias.set_requires_grad(true);
  return copy;
}

void DetectorParams::save(const std::string& path,
                          const nlohmann::json& extra_meta) const {
  nlohmann::json meta = extra_meta;
  meta["kind"] = "detector";
  meta["config"] = {{"model_dim", config.model_dim},
                    {"encoder_layers", config.encoder_layers},
                    {"ffn_dim", config.ffn_dim},
                    {"max_len", config.max_len},
                    {"n_classes", config.n_classes},
                    {"mean_pool_fusion", config.mean_pool_fusion}};
  meta["vocab"] = encoder.vocab().id_to_token();
  checkpoint::save(path, named_params(), meta);
}

DetectorParams DetectorParams::load(const std::string& path) {
  auto archive = checkpoint::load(path);
  if (archive.meta.value("kind", "") != "detector") {
    throw ValidationError("checkpoint is not a detector: " + path);
  }
  DetectorConfig cfg;
  const auto& c = archive.meta.at("config");
  cfg.model_dim = c.at("model_dim").get<int>();
  cfg.encoder_layers = c.at("encoder_layers").get<int>();
  cfg.ffn_dim = c.at("ffn_dim").get<int>();
  cfg.max_len = c.at("max_len").get<int>();
  cfg.n_classes = c.at("n_classes").get<int>();
  cfg.mean_pool_fusion = c.value("mean_pool_fusion", false);
  Vocabulary vocab = Vocabulary::from_tokens(
      archive.meta.at("vocab").get<std::vector<std::string>>());
  std::mt19937_64 rng(0);
  DetectorParams p = DetectorParams::init(vocab, cfg, rng);
  auto params = p.named_params();
  for (auto& [name, t] : params) {
    auto it = archive.tensors.find(name);
    if (it == archive.tensors.end()) {
      throw ValidationError("checkpoint missing tensor " + name);
    }
    if (it->second.numel() != t.numel()) {
      throw ValidationError("checkpoint tensor " + name + " has wrong size");
    }
    std::copy(it->second.data(), it->second.data() + t.numel(), t.data());
  }
  return p;
}

Tensor detector_logits(const std::string& post_text,
                       const std::vector<std::string>& comments,
                       const DetectorParams& params) {
  CommentEmbeddingSet set = embed_comments(post_text, comments, params.encoder);
  Tensor comment_feature;
  if (params.config.mean_pool_fusion) {
    instrument::increment("fusion.bypass_mean");
    if (set.comment_embeddings.empty()) {
      comment_feature = Tensor({params.config.model_dim}, 0.0);
    } else {
      comment_feature = mean_rows(stack_rows(set.comment_embeddings));
    }
  } else {
    comment_feature = controversy_feature(set, params.fusion);
  }
  Tensor joint = concat({set.post_embedding, comment_feature});
  Tensor row = stack_rows({joint});
  return add_bias(matmul(row, params.classifier), params.classifier_bias);
}

std::vector<double> predict(const std::string& post_text,
                            const std::vector<std::string>& comments,
                            const DetectorParams& params) {
  if (comments.empty()) {
    throw ArgumentError(
        "predict: no comments for this post; generate comments first and "
        "pass originals plus generated");
  }
  NoGradGuard no_grad;
  Tensor probs = softmax_rows(detector_logits(post_text, comments, params));
  return std::vector<double>(probs.data(), probs.data() + probs.numel());
}

// ---------------------------------------------------------------------------
// Metrics

double compute_auc(const std::vector<double>& scores,
                   const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ArgumentError("compute_auc: size mismatch");
  }
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ArgumentError("compute_auc: labels must be 0/1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n = scores.size();
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DegenerateInputError("compute_auc: both classes must be present");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Midranks over tie groups.
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * ((i + 1) + (j + 1));
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) rank_sum_pos += rank[k];
  }
  const double u =
      rank_sum_pos - 0.5 * double(n_pos) * (double(n_pos) + 1.0);
  return u / (double(n_pos) * double(n_neg));
}

MetricsReport compute_metrics(const std::vector<int>& labels,
                              const std::vector<int>& predictions,
                              const std::vector<std::vector<double>>& scores) {
  if (labels.size() != predictions.size() || labels.size() != scores.size() ||
      labels.empty()) {
    throw ArgumentError("compute_metrics: size mismatch");
  }
  const int classes = static_cast<int>(scores.front().size());
  MetricsReport report;
  report.n_samples = static_cast<int>(labels.size());

  int correct = 0;
  std::vector<int> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ArgumentError("compute_metrics: label outside score range");
    }
    if (labels[i] == predictions[i]) {
      ++correct;
      ++tp[labels[i]];
    } else {
      ++fp[predictions[i]];
      ++fn[labels[i]];
    }
  }
  report.accuracy = double(correct) / double(labels.size());

  for (int c = 0; c < classes; ++c) {
    ClassMetrics m;
    m.support = tp[c] + fn[c];
    m.precision = (tp[c] + fp[c]) == 0 ? 0.0 : double(tp[c]) / (tp[c] + fp[c]);
    m.recall = (tp[c] + fn[c]) == 0 ? 0.0 : double(tp[c]) / (tp[c] + fn[c]);
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    report.per_class.push_back(m);
    report.macro_precision += m.precision / classes;
    report.macro_recall += m.recall / classes;
    report.macro_f1 += m.f1 / classes;
  }

  // One-vs-rest AUC averaged over classes present with both outcomes.
  double auc_sum = 0.0;
  int auc_terms = 0;
  for (int c = 0; c < classes; ++c) {
    std::vector<double> class_scores;
    std::vector<int> class_labels;
    class_scores.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      class_scores.push_back(scores[i][c]);
      class_labels.push_back(labels[i] == c ? 1 : 0);
    }
    const bool has_pos =
        std::any_of(class_labels.begin(), class_labels.end(),
                    [](int y) { return y == 1; });
    const bool has_neg =
        std::any_of(class_labels.begin(), class_labels.end(),
                    [](int y) { return y == 0; });
    if (!has_pos || !has_neg) continue;
    auc_sum += compute_auc(class_scores, class_labels);
    ++auc_terms;
  }
  if (auc_terms == 0) {
    throw DegenerateInputError("compute_metrics: single-class labels, AUC undefined");
  }
  report.auc = auc_sum / auc_terms;
  return report;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& m : per_class) {
    per.push_back({{"precision", m.precision},
                   {"recall", m.recall},
                   {"f1", m.f1},
                   {"support", m.support}});
  }
  return {{"accuracy", accuracy},
          {"macro_f1", macro_f1},
          {"auc", auc},
          {"macro_precision", macro_precision},
          {"macro_recall", macro_recall},
          {"per_class", per},
          {"n_samples", n_samples}};
}

// ---------------------------------------------------------------------------
// Training

namespace {

MetricsReport score_records(const std::vector<PostRecord>& records,
                            const DetectorParams& params) {
  NoGradGuard no_grad;
  std::vector<int> labels, predictions;
  std::vector<std::vector<double>> scores;
  for (const auto& r : records) {
    Tensor probs = softmax_rows(detector_logits(r.text, r.comments, params));
    std::vector<double> row(probs.data(), probs.data() + probs.numel());
    predictions.push_back(static_cast<int>(
        std::max_element(row.begin(), row.end()) - row.begin()));
    labels.push_back(r.label);
    scores.push_back(std::move(row));
  }
  return compute_metrics(labels, predictions, scores);
}

}  // namespace

TrainedDetector train_detector(const std::vector<PostRecord>& train_records,
                               const std::vector<PostRecord>& valid_records,
                               const Vocabulary& vocab,
                               const DetectorConfig& config) {
  if (train_records.empty() || valid_records.empty()) {
    throw ArgumentError("train_detector: empty split");
  }
  instrument::increment("detector.train");
  std::mt19937_64 rng(config.seed);
  DetectorParams params = DetectorParams::init(vocab, config, rng);

  std::vector<Tensor> opt_params;
  for (auto& [name, t] : params.named_params()) {
    (void)name;
    opt_params.push_back(t);
  }
  AdamConfig adam;
  adam.lr = config.lr;
  AdamOptimizer opt(opt_params, adam);

  TrainedDetector result;
  result.params = params.clone();
  double best_f1 = -1.0;
  int since_best = 0;

  std::vector<std::size_t> order(train_records.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + config.batch_size);
      Tape tape;
      Tensor total = Tensor::scalar(0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& r = train_records[order[k]];
        Tensor logits = detector_logits(r.text, r.comments, params);
        total = add(total, cross_entropy(logits, {r.label}));
      }
      Tensor loss = scale(total, 1.0 / double(end - start));
      const double value = loss.scalar_value();
      if (!std::isfinite(value)) {
        throw TrainingAbort("detector loss became non-finite in epoch " +
                            std::to_string(epoch));
      }
      epoch_loss += value;
      ++batches;
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
    }

    const MetricsReport valid = score_records(valid_records, params);
    result.history.push_back(
        {epoch, epoch_loss / double(batches), valid.macro_f1});
    if (valid.macro_f1 > best_f1) {
      best_f1 = valid.macro_f1;
      result.params = params.clone();
      result.best_valid_macro_f1 = best_f1;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= config.patience) break;
    }
  }
  return result;
}

MetricsReport evaluate(const std::vector<PostRecord>& test_records,
                       const DetectorParams& params, int generated_per_post,
                       const CommentGenerator& generator) {
  if (generated_per_post < 0) {
    throw ArgumentError("evaluate: generated_per_post must be >= 0");
  }
  if (generated_per_post > 0 && !generator) {
    throw ArgumentError(
        "evaluate: a comment generator is required when generated comments "
        "are requested");
  }
  if (test_records.empty()) {
    throw ArgumentError("evaluate: empty test split");
  }
  NoGradGuard no_grad;
  std::vector<int> labels, predictions;
  std::vector<std::vector<double>> scores;
  for (const auto& r : test_records) {
    std::vector<std::string> comments = r.comments;
    if (generated_per_post > 0) {
      auto extra = generator(r, generated_per_post);
      comments.insert(comments.end(), extra.begin(), extra.end());
    }
    Tensor probs = softmax_rows(detector_logits(r.text, comments, params));
    std::vector<double> row(probs.data(), probs.data() + probs.numel());
    predictions.push_back(static_cast<int>(
        std::max_element(row.begin(), row.end()) - row.begin()));
    labels.push_back(r.label);
    scores.push_back(std::move(row));
  }
  return compute_metrics(labels, predictions, scores);
}

}  // namespace redkit
