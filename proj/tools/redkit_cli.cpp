// Command-line front end for the rumor-early-detection pipeline.
//
// Subcommands mirror the pipeline stages; `run` executes the whole thing.
// Exit codes: 0 success, 2 validation/usage error, 3 training abort.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "redkit/checkpoint.hpp"
#include "redkit/config.hpp"
#include "redkit/dataset.hpp"
#include "redkit/detector.hpp"
#include "redkit/gen_training.hpp"
#include "redkit/knowledge.hpp"
#include "redkit/pipeline.hpp"
#include "redkit/quality.hpp"

namespace fs = std::filesystem;
using namespace redkit;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  int seed = -1;
  bool no_cgt = false, no_sa = false, no_dk = false, no_hcr = false,
       no_mcf = false;
};

RunConfig resolve_config(const GlobalArgs& args) {
  RunConfig config;
  if (!args.config_path.empty()) {
    config = load_config_file(args.config_path);
  }
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  if (args.seed >= 0) config.seeds = {args.seed};
  config.no_cgt |= args.no_cgt;
  config.no_sa |= args.no_sa;
  config.no_dk |= args.no_dk;
  config.no_hcr |= args.no_hcr;
  config.no_mcf |= args.no_mcf;
  config.validate();
  return config;
}

int single_seed(const RunConfig& config) { return config.seeds.front(); }

void save_generator(const GeneratorHandle& generator, const std::string& dir) {
  fs::create_directories(dir);
  generator->backbone.save(dir + "/backbone.ckpt");
  generator->tuned.bank.save(dir + "/experts.ckpt");
  std::ofstream log(dir + "/gen_log.jsonl");
  for (const auto& e : generator->tuned.log) {
    log << nlohmann::json{{"epoch", e.epoch},
                          {"loss_GT", e.loss_generation},
                          {"loss_AM", e.loss_human_style},
                          {"loss_SA", e.loss_style_adversary},
                          {"wall_ms", e.wall_ms}}
               .dump()
        << '\n';
  }
}

GeneratorHandle load_generator(const std::string& dir) {
  auto artifacts = std::make_shared<GeneratorArtifacts>();
  artifacts->backbone = Seq2SeqBackbone::load(dir + "/backbone.ckpt");
  artifacts->backbone.freeze();
  artifacts->tuned.bank = ExpertBank::load(dir + "/experts.ckpt");
  return artifacts;
}

int cmd_synth_data(const RunConfig& config) {
  auto corpus = generate_synthetic_corpus(config.synthetic_config());
  fs::create_directories(config.out_dir);
  save_dataset(config.out_dir + "/dataset.jsonl", corpus.posts);
  KnowledgeBase::from_entries(corpus.knowledge)
      .save_jsonl(config.out_dir + "/kb.jsonl");
  auto stats = dataset_stats(corpus.posts);
  std::cout << "wrote " << corpus.posts.size() << " posts ("
            << stats.train.posts << " train / " << stats.valid.posts
            << " valid / " << stats.test.posts << " test), "
            << corpus.knowledge.size() << " knowledge entries to "
            << config.out_dir << "\n";
  return 0;
}

int cmd_build_knowledge(const RunConfig& config) {
  PreparedData data = prepare_data(config);
  auto samples = build_knowledge_dataset(data.train, data.kb);
  if (samples.empty()) {
    std::cerr << "warning: no posts matched the knowledge base; the "
                 "knowledge term will be absent from tuning\n";
  }
  fs::create_directories(config.out_dir);
  std::ofstream out(config.out_dir + "/knowledge_dataset.jsonl");
  for (const auto& s : samples) {
    out << nlohmann::json{{"post_id", s.post_id},
                          {"post_text", s.source_post_text},
                          {"comment", s.comment},
                          {"entities", s.entities}}
               .dump()
        << '\n';
  }
  std::cout << "wrote " << samples.size() << " knowledge samples\n";
  return 0;
}

int cmd_tune_generator(const RunConfig& config) {
  PreparedData data = prepare_data(config);
  auto generator = build_generator(data, config, single_seed(config));
  save_generator(generator, config.out_dir);
  const auto& last = generator->tuned.log.back();
  std::cout << "tuned " << config.experts << " experts for "
            << config.gen_epochs << " epochs; final losses: generation "
            << last.loss_generation << ", human-style "
            << last.loss_human_style << ", style-adversary "
            << last.loss_style_adversary << "\n";
  return 0;
}

int cmd_generate(const RunConfig& config, const std::string& model_dir,
                 int count, const std::string& split) {
  PreparedData data = prepare_data(config);
  auto generator = load_generator(model_dir);
  const int seed = single_seed(config);

  const std::vector<PostRecord>* records = &data.test;
  if (split == "train") records = &data.train;
  if (split == "valid") records = &data.valid;

  fs::create_directories(config.out_dir);
  std::ofstream out(config.out_dir + "/comments.jsonl");
  GenerateOptions base;
  base.count = count;
  base.epsilon = config.epsilon;
  base.max_len = config.decode_max_len;
  base.mode = config.decode_mode == "sample" ? DecodeOptions::Mode::kSample
                                             : DecodeOptions::Mode::kGreedy;
  base.temperature = config.decode_temperature;
  base.strategy = config.no_hcr
                      ? GenerateOptions::ExpertStrategy::kSingleRandom
                      : GenerateOptions::ExpertStrategy::kRouted;
  for (const auto& r : *records) {
    GenerateOptions options = base;
    options.seed = derive_seed(static_cast<std::uint64_t>(seed), r.id);
    auto generated = generate_comments_detailed(r.text, generator->backbone,
                                                generator->tuned.bank,
                                                options);
    for (std::size_t k = 0; k < generated.size(); ++k) {
      out << nlohmann::json{{"post_id", r.id},
                            {"k", k},
                            {"text", generated[k].text},
                            {"expert_subset", generated[k].expert_subset}}
                 .dump()
          << '\n';
    }
  }
  std::cout << "wrote " << count << " comments per post for "
            << records->size() << " posts\n";
  return 0;
}

int cmd_train_detector(const RunConfig& config,
                       const std::string& generator_dir) {
  PreparedData data = prepare_data(config);
  const int seed = single_seed(config);

  CommentGenerator generate;
  GeneratorHandle generator;
  int k_train = 0;
  if (!generator_dir.empty() && config.balance_comments && !config.no_cgt) {
    generator = load_generator(generator_dir);
    k_train = balance_counts(config.train_comment_cap,
                             config.test_comment_cap,
                             config.target_comments)
                  .train_generated;
    generate = make_comment_generator(generator, config,
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

  std::vector<PostRecord> train = data.train, valid = data.valid;
  if (generate && k_train > 0) {
    for (auto& r : train) {
      auto extra = generate(r, k_train);
      r.comments.insert(r.comments.end(), extra.begin(), extra.end());
    }
    for (auto& r : valid) {
      auto extra = generate(r, k_train);
      r.comments.insert(r.comments.end(), extra.begin(), extra.end());
    }
  }
  auto trained = train_detector(train, valid, data.vocab, det);
  fs::create_directories(config.out_dir);
  trained.params.save(config.out_dir + "/detector.ckpt");
  std::ofstream hist(config.out_dir + "/detector_history.jsonl");
  for (const auto& e : trained.history) {
    hist << nlohmann::json{{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"valid_macro_f1", e.valid_macro_f1}}
                .dump()
         << '\n';
  }
  std::cout << "trained detector for " << trained.history.size()
            << " epochs; best validation macro F1 "
            << trained.best_valid_macro_f1 << " at epoch "
            << trained.best_epoch << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& config, const std::string& detector_dir,
                 const std::string& generator_dir, int k_prime) {
  PreparedData data = prepare_data(config);
  DetectorParams params = DetectorParams::load(detector_dir + "/detector.ckpt");

  CommentGenerator generate;
  if (k_prime > 0) {
    if (generator_dir.empty()) {
      throw ArgumentError(
          "evaluate: --generator is required when --kprime > 0");
    }
    auto generator = load_generator(generator_dir);
    generate = make_comment_generator(
        generator, config, static_cast<std::uint64_t>(single_seed(config)));
  }
  auto report = evaluate(data.test, params, k_prime, generate);
  fs::create_directories(config.out_dir);
  std::ofstream out(config.out_dir + "/metrics.json");
  out << report.to_json().dump(2) << '\n';
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_quality(const RunConfig& config, const std::string& detector_dir,
                const std::string& generator_dir, int k_prime) {
  PreparedData data = prepare_data(config);
  DetectorParams params = DetectorParams::load(detector_dir + "/detector.ckpt");
  auto generator = load_generator(generator_dir);
  auto generate = make_comment_generator(
      generator, config, static_cast<std::uint64_t>(single_seed(config)));

  NoGradGuard no_grad;
  std::vector<std::vector<std::vector<double>>> originals, generated_all,
      generated_for_style;
  for (const auto& r : data.test) {
    auto texts = generate(r, k_prime);
    std::vector<std::vector<double>> gen_embs;
    for (const auto& t : texts) {
      Tensor e = params.encoder.embed_text(t);
      gen_embs.emplace_back(e.data(), e.data() + e.numel());
    }
    if (gen_embs.empty()) continue;
    generated_all.push_back(gen_embs);
    std::vector<std::vector<double>> orig_embs;
    for (const auto& t : r.comments) {
      if (Vocabulary::tokenize(t).empty()) continue;
      Tensor e = params.encoder.embed_text(t);
      orig_embs.emplace_back(e.data(), e.data() + e.numel());
    }
    if (!orig_embs.empty()) {
      originals.push_back(std::move(orig_embs));
      generated_for_style.push_back(std::move(gen_embs));
    }
  }
  if (generated_all.empty() || originals.empty()) {
    throw ArgumentError("quality: no scorable posts in the test split");
  }
  nlohmann::json j{
      {"style_similarity", style_similarity(originals, generated_for_style)},
      {"diversity", diversity(generated_all)},
      {"posts_scored", generated_all.size()},
      {"generated_per_post", k_prime}};
  fs::create_directories(config.out_dir);
  std::ofstream out(config.out_dir + "/quality.json");
  out << j.dump(2) << '\n';
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& config) {
  auto result = sweep_comments(config);
  write_sweep_files(result, config.out_dir);
  std::cout << "wrote sweep over " << result.train_counts.size() << "x"
            << result.test_counts.size() << " cells to " << config.out_dir
            << "\n";
  return 0;
}

int cmd_run(const RunConfig& config) {
  auto report = run_experiment(config);
  write_report_files(report, config.out_dir);
  int failures = 0;
  for (const auto& o : report.per_seed) {
    if (!o.error.empty()) {
      ++failures;
      std::cerr << "seed " << o.seed << " failed: " << o.error << "\n";
    }
  }
  const auto& f1 = report.aggregate.at("macro_f1");
  std::cout << "macro F1 " << f1.mean << " +/- " << f1.stddev << " over "
            << (report.per_seed.size() - failures) << " seeds; report in "
            << config.out_dir << "\n";
  return failures > 0 ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rumor early detection with a tuned comment generator"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "Config file (key = value)");
  app.add_option("--seed", args.seed, "Override the seed list with one seed");
  app.add_option("--out", args.out_dir, "Output directory");
  app.add_flag("--no-cgt", args.no_cgt, "Disable comment generation");
  app.add_flag("--no-sa", args.no_sa, "Disable adversarial style alignment");
  app.add_flag("--no-dk", args.no_dk, "Disable the knowledge dataset");
  app.add_flag("--no-hcr", args.no_hcr, "Disable collaboration routing");
  app.add_flag("--no-mcf", args.no_mcf, "Disable controversy fusion");

  app.add_subcommand("synth-data", "Generate the synthetic corpus");
  app.add_subcommand("build-knowledge", "Build the knowledge dataset");
  app.add_subcommand("tune-generator", "Tune the expert comment generator");

  auto* generate_cmd =
      app.add_subcommand("generate", "Generate comments with a tuned model");
  std::string model_dir, split = "test";
  int gen_count = 8;
  generate_cmd->add_option("--model", model_dir, "Generator checkpoint dir")
      ->required();
  generate_cmd->add_option("--k", gen_count, "Comments per post");
  generate_cmd->add_option("--split", split, "Dataset split")
      ->check(CLI::IsMember({"train", "valid", "test"}));

  auto* train_cmd =
      app.add_subcommand("train-detector", "Train the veracity detector");
  std::string train_generator_dir;
  train_cmd->add_option("--generator", train_generator_dir,
                        "Generator checkpoint dir for balanced training");

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a detector");
  std::string detector_dir, eval_generator_dir;
  int k_prime = 0;
  eval_cmd->add_option("--detector", detector_dir, "Detector checkpoint dir")
      ->required();
  eval_cmd->add_option("--generator", eval_generator_dir,
                       "Generator checkpoint dir");
  eval_cmd->add_option("--kprime", k_prime,
                       "Generated comments per test post");

  auto* quality_cmd =
      app.add_subcommand("quality", "Style/diversity of generated comments");
  std::string q_detector_dir, q_generator_dir;
  int q_count = 8;
  quality_cmd
      ->add_option("--detector", q_detector_dir,
                   "Detector checkpoint dir (embedding source)")
      ->required();
  quality_cmd
      ->add_option("--generator", q_generator_dir, "Generator checkpoint dir")
      ->required();
  quality_cmd->add_option("--k", q_count, "Comments per post");

  app.add_subcommand("sweep", "Train/test comment-count sensitivity sweep");
  app.add_subcommand("run", "Full pipeline over all seeds");

  // Global flags may appear after the subcommand name.
  for (auto* sub : app.get_subcommands(
           [](const CLI::App*) { return true; })) {
    sub->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config = resolve_config(args);
    if (app.got_subcommand("synth-data")) return cmd_synth_data(config);
    if (app.got_subcommand("build-knowledge")) return cmd_build_knowledge(config);
    if (app.got_subcommand("tune-generator")) return cmd_tune_generator(config);
    if (app.got_subcommand("generate")) {
      return cmd_generate(config, model_dir, gen_count, split);
    }
    if (app.got_subcommand("train-detector")) {
      return cmd_train_detector(config, train_generator_dir);
    }
    if (app.got_subcommand("evaluate")) {
      return cmd_evaluate(config, detector_dir, eval_generator_dir, k_prime);
    }
    if (app.got_subcommand("quality")) {
      return cmd_quality(config, q_detector_dir, q_generator_dir, q_count);
    }
    if (app.got_subcommand("sweep")) return cmd_sweep(config);
    if (app.got_subcommand("run")) return cmd_run(config);
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const TrainingAbort& e) {
    std::cerr << "training abort: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
