#include "redkit/config.hpp"

#include <fstream>
#include <sstream>

namespace redkit {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<int> parse_int_list(const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  if (out.empty()) throw ValidationError("empty integer list");
  return out;
}

bool parse_bool(const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ValidationError("expected a boolean, got '" + value + "'");
}

}  // namespace

SyntheticConfig RunConfig::synthetic_config() const {
  SyntheticConfig s;
  s.seed = data_seed;
  s.posts = synth_posts;
  s.comments_per_post = synth_comments_per_post;
  s.vocab_size = synth_vocab_size;
  s.n_classes = synth_classes;
  s.class_separation = synth_separation;
  s.kb_entity_rate = synth_entity_rate;
  s.noise_comment_rate = synth_noise_comment_rate;
  return s;
}

void RunConfig::validate() const {
  if (seeds.empty()) throw ValidationError("config: seeds must be non-empty");
  if (balance_comments) {
    if (target_comments < train_comment_cap ||
        target_comments < test_comment_cap) {
      throw ValidationError(
          "config: target_comments must be at least both comment caps");
    }
  }
  if (decode_mode != "greedy" && decode_mode != "sample") {
    throw ValidationError("config: decode_mode must be greedy or sample");
  }
  if (sweep_mode != "raw" && sweep_mode != "balanced" && sweep_mode != "both") {
    throw ValidationError("config: sweep_mode must be raw, balanced or both");
  }
  if (epsilon < -1.0 || epsilon > 1.0) {
    throw ValidationError("config: epsilon must lie in [-1,1]");
  }
  if (alpha < 0.0 || beta < 0.0) {
    throw ValidationError("config: alpha and beta must be non-negative");
  }
  if (experts < 2) throw ValidationError("config: experts must be >= 2");
  if (gen_epochs < 1) throw ValidationError("config: gen_epochs must be >= 1");
}

void apply_config_entry(RunConfig& c, const std::string& key,
                        const std::string& value) {
  try {
    if (key == "data_path") c.data_path = value;
    else if (key == "kb_path") c.kb_path = value;
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "data_seed") c.data_seed = std::stoull(value);
    else if (key == "synth_posts") c.synth_posts = std::stoi(value);
    else if (key == "synth_comments_per_post") c.synth_comments_per_post = std::stoi(value);
    else if (key == "synth_vocab_size") c.synth_vocab_size = std::stoi(value);
    else if (key == "synth_classes") c.synth_classes = std::stoi(value);
    else if (key == "synth_separation") c.synth_separation = std::stod(value);
    else if (key == "synth_entity_rate") c.synth_entity_rate = std::stod(value);
    else if (key == "synth_noise_comment_rate") c.synth_noise_comment_rate = std::stod(value);
    else if (key == "seeds") c.seeds = parse_int_list(value);
    else if (key == "train_comment_cap") c.train_comment_cap = std::stoi(value);
    else if (key == "test_comment_cap") c.test_comment_cap = std::stoi(value);
    else if (key == "target_comments") c.target_comments = std::stoi(value);
    else if (key == "balance_comments") c.balance_comments = parse_bool(value);
    else if (key == "model_dim") c.model_dim = std::stoi(value);
    else if (key == "ffn_dim") c.ffn_dim = std::stoi(value);
    else if (key == "encoder_layers") c.encoder_layers = std::stoi(value);
    else if (key == "decoder_layers") c.decoder_layers = std::stoi(value);
    else if (key == "adapter_rank") c.adapter_rank = std::stoi(value);
    else if (key == "vocab_max") c.vocab_max = std::stoi(value);
    else if (key == "max_len") c.max_len = std::stoi(value);
    else if (key == "backbone_steps") c.backbone_steps = std::stoi(value);
    else if (key == "backbone_lr") c.backbone_lr = std::stod(value);
    else if (key == "experts") c.experts = std::stoi(value);
    else if (key == "epsilon") c.epsilon = std::stod(value);
    else if (key == "alpha") c.alpha = std::stod(value);
    else if (key == "beta") c.beta = std::stod(value);
    else if (key == "gen_epochs") c.gen_epochs = std::stoi(value);
    else if (key == "gen_batch") c.gen_batch = std::stoi(value);
    else if (key == "gen_lr") c.gen_lr = std::stod(value);
    else if (key == "gen_weight_decay") c.gen_weight_decay = std::stod(value);
    else if (key == "gen_comments_per_post") c.gen_comments_per_post = std::stoi(value);
    else if (key == "gen_max_target_len") c.gen_max_target_len = std::stoi(value);
    else if (key == "decode_mode") c.decode_mode = value;
    else if (key == "decode_temperature") c.decode_temperature = std::stod(value);
    else if (key == "decode_max_len") c.decode_max_len = std::stoi(value);
    else if (key == "det_encoder_layers") c.det_encoder_layers = std::stoi(value);
    else if (key == "det_lr") c.det_lr = std::stod(value);
    else if (key == "det_batch") c.det_batch = std::stoi(value);
    else if (key == "det_patience") c.det_patience = std::stoi(value);
    else if (key == "det_max_epochs") c.det_max_epochs = std::stoi(value);
    else if (key == "no_cgt") c.no_cgt = parse_bool(value);
    else if (key == "no_sa") c.no_sa = parse_bool(value);
    else if (key == "no_dk") c.no_dk = parse_bool(value);
    else if (key == "no_hcr") c.no_hcr = parse_bool(value);
    else if (key == "no_mcf") c.no_mcf = parse_bool(value);
    else if (key == "sweep_train_counts") c.sweep_train_counts = parse_int_list(value);
    else if (key == "sweep_test_counts") c.sweep_test_counts = parse_int_list(value);
    else if (key == "sweep_mode") c.sweep_mode = value;
    else if (key == "seed_parallel") c.seed_parallel = parse_bool(value);
    else {
      throw ValidationError("unknown config key '" + key + "'");
    }
  } catch (const std::invalid_argument&) {
    throw ValidationError("config: cannot parse value '" + value +
                          "' for key '" + key + "'");
  } catch (const std::out_of_range&) {
    throw ValidationError("config: value out of range for key '" + key + "'");
  }
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  RunConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_config_entry(config, key, value);
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " +
                            e.what());
    }
  }
  return config;
}

nlohmann::json RunConfig::to_json() const {
  return {{"data_path", data_path},
          {"kb_path", kb_path},
          {"out_dir", out_dir},
          {"data_seed", data_seed},
          {"synth_posts", synth_posts},
          {"synth_comments_per_post", synth_comments_per_post},
          {"synth_vocab_size", synth_vocab_size},
          {"synth_classes", synth_classes},
          {"synth_separation", synth_separation},
          {"synth_entity_rate", synth_entity_rate},
          {"synth_noise_comment_rate", synth_noise_comment_rate},
          {"seeds", seeds},
          {"train_comment_cap", train_comment_cap},
          {"test_comment_cap", test_comment_cap},
          {"target_comments", target_comments},
          {"balance_comments", balance_comments},
          {"model_dim", model_dim},
          {"ffn_dim", ffn_dim},
          {"encoder_layers", encoder_layers},
          {"decoder_layers", decoder_layers},
          {"adapter_rank", adapter_rank},
          {"vocab_max", vocab_max},
          {"max_len", max_len},
          {"backbone_steps", backbone_steps},
          {"backbone_lr", backbone_lr},
          {"experts", experts},
          {"epsilon", epsilon},
          {"alpha", alpha},
          {"beta", beta},
          {"gen_epochs", gen_epochs},
          {"gen_batch", gen_batch},
          {"gen_lr", gen_lr},
          {"gen_weight_decay", gen_weight_decay},
          {"gen_comments_per_post", gen_comments_per_post},
          {"gen_max_target_len", gen_max_target_len},
          {"decode_mode", decode_mode},
          {"decode_temperature", decode_temperature},
          {"decode_max_len", decode_max_len},
          {"det_encoder_layers", det_encoder_layers},
          {"det_lr", det_lr},
          {"det_batch", det_batch},
          {"det_patience", det_patience},
          {"det_max_epochs", det_max_epochs},
          {"no_cgt", no_cgt},
          {"no_sa", no_sa},
          {"no_dk", no_dk},
          {"no_hcr", no_hcr},
          {"no_mcf", no_mcf},
          {"sweep_train_counts", sweep_train_counts},
          {"sweep_test_counts", sweep_test_counts},
          {"sweep_mode", sweep_mode},
          {"seed_parallel", seed_parallel}};
}

}  // namespace redkit
