#include "redkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "redkit/instrument.hpp"
#include "redkit/quality.hpp"

namespace redkit {

BalancedCounts balance_counts(int train_originals, int test_originals,
                              int target) {
  if (target < train_originals || target < test_originals) {
    throw ArgumentError("balance_counts: target " + std::to_string(target) +
                        " is below an original comment count");
  }
  return {target - train_originals, target - test_originals};
}

std::vector<PostRecord> cap_comments(std::vector<PostRecord> records,
                                     int cap) {
  if (cap < 0) throw ArgumentError("cap_comments: negative cap");
  for (auto& r : records) {
    if (static_cast<int>(r.comments.size()) > cap) r.comments.resize(cap);
  }
  return records;
}

PreparedData prepare_data(const RunConfig& config) {
  PreparedData data;
  std::vector<PostRecord> all;
  if (config.data_path.empty()) {
    auto corpus = generate_synthetic_corpus(config.synthetic_config());
    all = std::move(corpus.posts);
    if (config.kb_path.empty()) {
      data.kb = KnowledgeBase::from_entries(std::move(corpus.knowledge));
    }
  } else {
    all = load_dataset(config.data_path);
  }
  if (!config.kb_path.empty()) {
    data.kb = KnowledgeBase::load_jsonl(config.kb_path);
  }
  if (all.empty()) {
    throw ValidationError("prepare_data: dataset is empty");
  }
  data.stats = dataset_stats(all);
  data.n_classes = std::max(2, data.stats.n_classes);

  data.train = cap_comments(split_of(all, Split::kTrain),
                            config.train_comment_cap);
  data.valid = cap_comments(split_of(all, Split::kValid),
                            config.train_comment_cap);
  data.test =
      cap_comments(split_of(all, Split::kTest), config.test_comment_cap);
  if (data.train.empty() || data.valid.empty() || data.test.empty()) {
    throw ValidationError("prepare_data: every split must be non-empty");
  }

  std::vector<std::string> vocab_texts;
  for (const auto& r : data.train) {
    vocab_texts.push_back(r.text);
    for (const auto& c : r.comments) vocab_texts.push_back(c);
  }
  for (const auto& e : data.kb.entries()) {
    vocab_texts.push_back(e.entity);
    vocab_texts.push_back(e.description);
  }
  data.vocab = Vocabulary::build(vocab_texts, config.vocab_max);
  return data;
}

GeneratorHandle build_generator(const PreparedData& data,
                                const RunConfig& config, int seed) {
  auto artifacts = std::make_shared<GeneratorArtifacts>();

  std::mt19937_64 rng(derive_seed(static_cast<std::uint64_t>(seed),
                                  "backbone-init"));
  BackboneConfig backbone_cfg;
  backbone_cfg.model_dim = config.model_dim;
  backbone_cfg.ffn_dim = config.ffn_dim;
  backbone_cfg.encoder_layers = config.encoder_layers;
  backbone_cfg.decoder_layers = config.decoder_layers;
  backbone_cfg.max_len = config.max_len;
  artifacts->backbone = Seq2SeqBackbone(data.vocab, backbone_cfg, rng);

  std::vector<std::string> texts;
  for (const auto& r : data.train) {
    texts.push_back(r.text);
    for (const auto& c : r.comments) texts.push_back(c);
  }
  PretrainConfig pre;
  pre.steps = config.backbone_steps;
  pre.lr = config.backbone_lr;
  pre.seed = derive_seed(static_cast<std::uint64_t>(seed), "backbone-data");
  pretrain_backbone(artifacts->backbone, texts, pre);
  artifacts->backbone.freeze();

  std::vector<KnowledgeSample> knowledge;
  if (!config.no_dk && !data.kb.empty()) {
    knowledge = build_knowledge_dataset(data.train, data.kb);
  }

  TuningConfig tuning;
  tuning.experts = config.experts;
  tuning.adapter_rank = config.adapter_rank;
  tuning.alpha = config.alpha;
  tuning.beta = config.beta;
  tuning.epochs = config.gen_epochs;
  tuning.batch_size = config.gen_batch;
  tuning.epsilon = config.epsilon;
  tuning.lr = config.gen_lr;
  tuning.weight_decay = config.gen_weight_decay;
  tuning.seed = derive_seed(static_cast<std::uint64_t>(seed), "tuning");
  tuning.comments_per_post = config.gen_comments_per_post;
  tuning.max_target_len = config.gen_max_target_len;
  tuning.disable_style_alignment = config.no_sa;
  tuning.disable_routing = config.no_hcr;
  artifacts->tuned = tune_generator(artifacts->backbone, data.train,
                                    knowledge, tuning);
  return artifacts;
}

CommentGenerator make_comment_generator(GeneratorHandle generator,
                                        const RunConfig& config,
                                        std::uint64_t run_seed) {
  if (!generator) return nullptr;
  const bool sample_mode = config.decode_mode == "sample";
  GenerateOptions base;
  base.epsilon = config.epsilon;
  base.max_len = config.decode_max_len;
  base.mode = sample_mode ? DecodeOptions::Mode::kSample
                          : DecodeOptions::Mode::kGreedy;
  base.temperature = config.decode_temperature;
  base.strategy = config.no_hcr
                      ? GenerateOptions::ExpertStrategy::kSingleRandom
                      : GenerateOptions::ExpertStrategy::kRouted;
  return [generator, base, run_seed](const PostRecord& post, int count) {
    GenerateOptions options = base;
    options.count = count;
    options.seed = derive_seed(run_seed, post.id);
    return generate_comments(post.text, generator->backbone,
                             generator->tuned.bank, options);
  };
}

namespace {

std::vector<PostRecord> with_generated(const std::vector<PostRecord>& records,
                                       const CommentGenerator& generate,
                                       int count) {
  std::vector<PostRecord> out = records;
  if (count <= 0 || !generate) return out;
  for (auto& r : out) {
    auto extra = generate(r, count);
    r.comments.insert(r.comments.end(), extra.begin(), extra.end());
  }
  return out;
}

QualityScores compute_quality(const std::vector<PostRecord>& test_records,
                              const CommentGenerator& generate, int count,
                              const TextEncoder& encoder) {
  QualityScores scores;
  if (count <= 0 || !generate) return scores;
  NoGradGuard no_grad;
  std::vector<std::vector<std::vector<double>>> originals, generated_all,
      generated_for_style;
  for (const auto& r : test_records) {
    auto texts = generate(r, count);
    std::vector<std::vector<double>> gen_embs;
    for (const auto& t : texts) {
      Tensor e = encoder.embed_text(t);
      gen_embs.emplace_back(e.data(), e.data() + e.numel());
    }
    if (gen_embs.empty()) continue;
    generated_all.push_back(gen_embs);

    std::vector<std::vector<double>> orig_embs;
    for (const auto& t : r.comments) {
      if (Vocabulary::tokenize(t).empty()) continue;
      Tensor e = encoder.embed_text(t);
      orig_embs.emplace_back(e.data(), e.data() + e.numel());
    }
    if (!orig_embs.empty()) {
      originals.push_back(std::move(orig_embs));
      generated_for_style.push_back(std::move(gen_embs));
    }
  }
  if (generated_all.empty() || originals.empty()) return scores;
  scores.style_similarity = style_similarity(originals, generated_for_style);
  scores.diversity = diversity(generated_all);
  scores.available = true;
  return scores;
}

double nan_to_zero(double v) { return std::isfinite(v) ? v : 0.0; }

}  // namespace

SeedRunResult run_seed(const PreparedData& data, const RunConfig& config,
                       int seed) {
  SeedRunResult result;
  result.outcome.seed = seed;

  BalancedCounts counts{0, 0};
  if (config.balance_comments && !config.no_cgt) {
    counts = balance_counts(config.train_comment_cap, config.test_comment_cap,
                            config.target_comments);
  }

  CommentGenerator generate;
  if (!config.no_cgt &&
      (counts.train_generated > 0 || counts.test_generated > 0)) {
    result.generator = build_generator(data, config, seed);
    result.outcome.generator_log = result.generator->tuned.log;
    generate = make_comment_generator(result.generator, config,
                                      static_cast<std::uint64_t>(seed));
  }

  DetectorConfig det;
  det.model_dim = config.model_dim;
  det.encoder_layers = config.det_encoder_layers;
  det.ffn_dim = config.ffn_dim;
  det.max_len = config.max_len;
  det.n_classes = data.n_classes;
  det.lr = config.det_lr;
  det.batch_size = config.det_batch;
  det.patience = config.det_patience;
  det.max_epochs = config.det_max_epochs;
  det.seed = static_cast<std::uint64_t>(seed);
  det.mean_pool_fusion = config.no_mcf;

  auto train_composed =
      with_generated(data.train, generate, counts.train_generated);
  auto valid_composed =
      with_generated(data.valid, generate, counts.train_generated);

  auto trained = std::make_shared<TrainedDetector>(
      train_detector(train_composed, valid_composed, data.vocab, det));
  result.detector = trained;
  result.outcome.detector_epochs = static_cast<int>(trained->history.size());
  result.outcome.best_valid_macro_f1 = trained->best_valid_macro_f1;

  result.outcome.metrics = evaluate(data.test, trained->params,
                                    counts.test_generated, generate);
  result.outcome.quality = compute_quality(data.test, generate,
                                           counts.test_generated,
                                           trained->params.encoder);
  return result;
}

nlohmann::json SeedOutcome::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  if (!error.empty()) {
    j["error"] = error;
    return j;
  }
  j["metrics"] = metrics.to_json();
  j["detector_epochs"] = detector_epochs;
  j["best_valid_macro_f1"] = best_valid_macro_f1;
  if (quality.available) {
    j["style_similarity"] = nan_to_zero(quality.style_similarity);
    j["diversity"] = nan_to_zero(quality.diversity);
  }
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : generator_log) {
    // wall_ms deliberately omitted: reports must be byte-stable.
    log.push_back({{"epoch", e.epoch},
                   {"loss_generation", e.loss_generation},
                   {"loss_human_style", e.loss_human_style},
                   {"loss_style_adversary", e.loss_style_adversary}});
  }
  j["generator_log"] = log;
  return j;
}

namespace {

MetricAggregate aggregate_values(const std::vector<double>& values) {
  MetricAggregate a;
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / values.size();
  double sq = 0.0;
  for (double v : values) sq += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(sq / values.size());
  return a;
}

}  // namespace

ExperimentReport run_experiment(const RunConfig& config) {
  config.validate();
  instrument::increment("pipeline.run_experiment");
  PreparedData data = prepare_data(config);

  std::vector<SeedOutcome> outcomes(config.seeds.size());
  auto run_one = [&](std::size_t idx) {
    const int seed = config.seeds[idx];
    try {
      outcomes[idx] = run_seed(data, config, seed).outcome;
    } catch (const std::exception& e) {
      SeedOutcome failed;
      failed.seed = seed;
      failed.error = e.what();
      outcomes[idx] = failed;
    }
  };

  if (config.seed_parallel && config.seeds.size() > 1) {
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < config.seeds.size(); ++i) {
      workers.emplace_back(run_one, i);
    }
    for (auto& w : workers) w.join();
  } else {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) run_one(i);
  }

  ExperimentReport report;
  report.config = config.to_json();
  report.dataset = {{"train_posts", data.stats.train.posts},
                    {"valid_posts", data.stats.valid.posts},
                    {"test_posts", data.stats.test.posts},
                    {"train_avg_comments", data.stats.train.avg_comments},
                    {"n_classes", data.n_classes}};
  report.per_seed = std::move(outcomes);

  std::vector<double> acc, f1, auc, prec, rec, sty, div;
  for (const auto& o : report.per_seed) {
    if (!o.error.empty()) continue;
    acc.push_back(o.metrics.accuracy);
    f1.push_back(o.metrics.macro_f1);
    auc.push_back(o.metrics.auc);
    prec.push_back(o.metrics.macro_precision);
    rec.push_back(o.metrics.macro_recall);
    if (o.quality.available) {
      sty.push_back(o.quality.style_similarity);
      div.push_back(o.quality.diversity);
    }
  }
  report.aggregate["accuracy"] = aggregate_values(acc);
  report.aggregate["macro_f1"] = aggregate_values(f1);
  report.aggregate["auc"] = aggregate_values(auc);
  report.aggregate["macro_precision"] = aggregate_values(prec);
  report.aggregate["macro_recall"] = aggregate_values(rec);
  if (!sty.empty()) {
    report.aggregate["style_similarity"] = aggregate_values(sty);
    report.aggregate["diversity"] = aggregate_values(div);
  }
  return report;
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json j;
  j["config"] = config;
  j["dataset"] = dataset;
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& o : per_seed) seeds.push_back(o.to_json());
  j["per_seed"] = seeds;
  nlohmann::json agg;
  for (const auto& [name, a] : aggregate) {
    agg[name] = {{"mean", a.mean}, {"stddev", a.stddev}};
  }
  j["aggregate"] = agg;
  return j;
}

std::string ExperimentReport::metrics_csv() const {
  std::string csv = "metric,mean,stddev\n";
  for (const auto& [name, a] : aggregate) {
    csv += name + "," + std::to_string(a.mean) + "," +
           std::to_string(a.stddev) + "\n";
  }
  return csv;
}

// ---------------------------------------------------------------------------
// Sweep

SweepResult sweep_comments(const RunConfig& config) {
  config.validate();
  if (config.sweep_train_counts.empty() || config.sweep_test_counts.empty()) {
    throw ArgumentError("sweep: count lists must be non-empty");
  }
  instrument::increment("pipeline.sweep");

  // Caps are reapplied per cell from the uncapped corpus.
  RunConfig base = config;
  base.train_comment_cap =
      *std::max_element(config.sweep_train_counts.begin(),
                        config.sweep_train_counts.end());
  base.test_comment_cap = *std::max_element(config.sweep_test_counts.begin(),
                                            config.sweep_test_counts.end());
  const int target = std::max(base.train_comment_cap, base.test_comment_cap);
  PreparedData data = prepare_data(base);

  SweepResult result;
  result.train_counts = config.sweep_train_counts;
  result.test_counts = config.sweep_test_counts;

  const bool want_raw =
      config.sweep_mode == "raw" || config.sweep_mode == "both";
  const bool want_balanced =
      config.sweep_mode == "balanced" || config.sweep_mode == "both";

  // cell key -> per-seed macro F1 / accuracy
  std::map<std::pair<int, int>, std::vector<double>> raw_f1, raw_acc,
      bal_f1, bal_acc;

  for (int seed : config.seeds) {
    GeneratorHandle generator;
    CommentGenerator generate;
    if (want_balanced && !config.no_cgt) {
      RunConfig gen_cfg = base;
      generator = build_generator(data, gen_cfg, seed);
      generate = make_comment_generator(generator, gen_cfg,
                                        static_cast<std::uint64_t>(seed));
    }

    for (int m_train : config.sweep_train_counts) {
      auto train_cap = cap_comments(data.train, m_train);
      auto valid_cap = cap_comments(data.valid, m_train);

      DetectorConfig det;
      det.model_dim = config.model_dim;
      det.encoder_layers = config.det_encoder_layers;
      det.ffn_dim = config.ffn_dim;
      det.max_len = config.max_len;
      det.n_classes = data.n_classes;
      det.lr = config.det_lr;
      det.batch_size = config.det_batch;
      det.patience = config.det_patience;
      det.max_epochs = config.det_max_epochs;
      det.mean_pool_fusion = config.no_mcf;

      if (want_raw) {
        det.seed = derive_seed(static_cast<std::uint64_t>(seed),
                               "sweep-raw-" + std::to_string(m_train));
        auto trained = train_detector(train_cap, valid_cap, data.vocab, det);
        for (int m_test : config.sweep_test_counts) {
          auto test_cap = cap_comments(data.test, m_test);
          auto report = evaluate(test_cap, trained.params, 0, nullptr);
          raw_f1[{m_train, m_test}].push_back(report.macro_f1);
          raw_acc[{m_train, m_test}].push_back(report.accuracy);
        }
      }
      if (want_balanced) {
        const int k_train = target - m_train;
        auto train_bal = with_generated(train_cap, generate, k_train);
        auto valid_bal = with_generated(valid_cap, generate, k_train);
        det.seed = derive_seed(static_cast<std::uint64_t>(seed),
                               "sweep-bal-" + std::to_string(m_train));
        auto trained = train_detector(train_bal, valid_bal, data.vocab, det);
        for (int m_test : config.sweep_test_counts) {
          auto test_cap = cap_comments(data.test, m_test);
          auto report =
              evaluate(test_cap, trained.params, target - m_test, generate);
          bal_f1[{m_train, m_test}].push_back(report.macro_f1);
          bal_acc[{m_train, m_test}].push_back(report.accuracy);
        }
      }
    }
  }

  auto collect = [](const std::map<std::pair<int, int>, std::vector<double>>&
                        f1_map,
                    const std::map<std::pair<int, int>, std::vector<double>>&
                        acc_map) {
    std::vector<SweepCell> cells;
    for (const auto& [key, f1s] : f1_map) {
      SweepCell cell;
      cell.train_count = key.first;
      cell.test_count = key.second;
      auto f1_agg = aggregate_values(f1s);
      cell.macro_f1_mean = f1_agg.mean;
      cell.macro_f1_std = f1_agg.stddev;
      auto acc_agg = aggregate_values(acc_map.at(key));
      cell.accuracy_mean = acc_agg.mean;
      cell.accuracy_std = acc_agg.stddev;
      cell.per_seed_macro_f1 = f1s;
      cells.push_back(std::move(cell));
    }
    return cells;
  };
  if (want_raw) result.raw = collect(raw_f1, raw_acc);
  if (want_balanced) result.balanced = collect(bal_f1, bal_acc);
  return result;
}

nlohmann::json SweepResult::to_json() const {
  auto cells_json = [](const std::vector<SweepCell>& cells) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cells) {
      arr.push_back({{"train_count", c.train_count},
                     {"test_count", c.test_count},
                     {"macro_f1_mean", c.macro_f1_mean},
                     {"macro_f1_std", c.macro_f1_std},
                     {"accuracy_mean", c.accuracy_mean},
                     {"accuracy_std", c.accuracy_std},
                     {"per_seed_macro_f1", c.per_seed_macro_f1}});
    }
    return arr;
  };
  return {{"train_counts", train_counts},
          {"test_counts", test_counts},
          {"raw", cells_json(raw)},
          {"balanced", cells_json(balanced)}};
}

std::string SweepResult::csv() const {
  std::string csv =
      "mode,train_count,test_count,macro_f1_mean,macro_f1_std,"
      "accuracy_mean,accuracy_std\n";
  auto emit = [&csv](const char* mode, const std::vector<SweepCell>& cells) {
    for (const auto& c : cells) {
      csv += std::string(mode) + "," + std::to_string(c.train_count) + "," +
             std::to_string(c.test_count) + "," +
             std::to_string(c.macro_f1_mean) + "," +
             std::to_string(c.macro_f1_std) + "," +
             std::to_string(c.accuracy_mean) + "," +
             std::to_string(c.accuracy_std) + "\n";
    }
  };
  emit("raw", raw);
  emit("balanced", balanced);
  return csv;
}

void write_report_files(const ExperimentReport& report,
                        const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/report.json", std::ios::binary);
    if (!out) throw ValidationError("cannot write report.json in " + out_dir);
    out << report.to_json().dump(2) << '\n';
  }
  {
    std::ofstream out(out_dir + "/metrics.csv", std::ios::binary);
    if (!out) throw ValidationError("cannot write metrics.csv in " + out_dir);
    out << report.metrics_csv();
  }
}

void write_sweep_files(const SweepResult& result, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/sweep.json", std::ios::binary);
    if (!out) throw ValidationError("cannot write sweep.json in " + out_dir);
    out << result.to_json().dump(2) << '\n';
  }
  {
    std::ofstream out(out_dir + "/sweep.csv", std::ios::binary);
    if (!out) throw ValidationError("cannot write sweep.csv in " + out_dir);
    out << result.csv();
  }
}

}  // namespace redkit
