#include "redkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "redkit/checkpoint.hpp"
#include "redkit/instrument.hpp"
#include "redkit/optimizer.hpp"

namespace redkit {

namespace {

FeedForwardParams init_ffn(int d, int f, std::mt19937_64& rng) {
  FeedForwardParams p;
  p.in_proj = Tensor::randn({d, f}, rng, 1.0 / std::sqrt(double(d)));
  p.in_bias = Tensor({f}, 0.0);
  p.out_proj = Tensor::randn({f, d}, rng, 0.1 / std::sqrt(double(f)));
  p.out_bias = Tensor({d}, 0.0);
  return p;
}

AttentionParams init_attention(int d, std::mt19937_64& rng) {
  const double s = 1.0 / std::sqrt(double(d));
  return AttentionParams{Tensor::randn({d, d}, rng, s),
                         Tensor::randn({d, d}, rng, s),
                         Tensor::randn({d, d}, rng, s)};
}

// Residual branch projections start small so every layer is near identity
// at init; without normalization layers this keeps early training stable.
EncoderLayerParams init_encoder_layer(int d, int f, std::mt19937_64& rng) {
  EncoderLayerParams p;
  p.attn = init_attention(d, rng);
  p.attn_out = Tensor::randn({d, d}, rng, 0.1 / std::sqrt(double(d)));
  p.ffn = init_ffn(d, f, rng);
  return p;
}

DecoderLayerParams init_decoder_layer(int d, int f, std::mt19937_64& rng) {
  DecoderLayerParams p;
  p.self_attn = init_attention(d, rng);
  p.self_out = Tensor::randn({d, d}, rng, 0.1 / std::sqrt(double(d)));
  p.cross_attn = init_attention(d, rng);
  p.cross_out = Tensor::randn({d, d}, rng, 0.1 / std::sqrt(double(d)));
  p.ffn = init_ffn(d, f, rng);
  return p;
}

Tensor apply_ffn(const Tensor& x, const FeedForwardParams& p) {
  Tensor h = tanh_activation(add_bias(matmul(x, p.in_proj), p.in_bias));
  return add_bias(matmul(h, p.out_proj), p.out_bias);
}

Tensor apply_encoder_layer(const Tensor& x, const EncoderLayerParams& p,
                           const std::vector<int>& key_keep) {
  Tensor a = attention(x, x, p.attn, AttentionMask::kNone, key_keep);
  Tensor x1 = add(x, matmul(a, p.attn_out));
  return add(x1, apply_ffn(x1, p.ffn));
}

Tensor apply_decoder_layer(const Tensor& y, const Tensor& memory,
                           const DecoderLayerParams& p) {
  Tensor a = attention(y, y, p.self_attn, AttentionMask::kCausal);
  Tensor y1 = add(y, matmul(a, p.self_out));
  Tensor c = attention(y1, memory, p.cross_attn, AttentionMask::kNone);
  Tensor y2 = add(y1, matmul(c, p.cross_out));
  return add(y2, apply_ffn(y2, p.ffn));
}

void collect_attention(const std::string& prefix, const AttentionParams& p,
                       std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".q", p.query_proj);
  out.emplace_back(prefix + ".k", p.key_proj);
  out.emplace_back(prefix + ".v", p.value_proj);
}

void collect_ffn(const std::string& prefix, const FeedForwardParams& p,
                 std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".in_proj", p.in_proj);
  out.emplace_back(prefix + ".in_bias", p.in_bias);
  out.emplace_back(prefix + ".out_proj", p.out_proj);
  out.emplace_back(prefix + ".out_bias", p.out_bias);
}

std::uint64_t params_checksum(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : params) {
    mix(name.data(), name.size());
    mix(t.data(), t.numel() * sizeof(double));
  }
  return h;
}

int sample_index(const std::vector<double>& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r = unit(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Seq2SeqBackbone

Seq2SeqBackbone::Seq2SeqBackbone(Vocabulary vocab, BackboneConfig config,
                                 std::mt19937_64& rng)
    : vocab_(std::move(vocab)), config_(config) {
  const int d = config_.model_dim, f = config_.ffn_dim;
  tok_embed_ = Tensor::randn({vocab_.size(), d}, rng, 0.1);
  pos_embed_ = Tensor::randn({config_.max_len, d}, rng, 0.1);
  for (int i = 0; i < config_.encoder_layers; ++i) {
    encoder_.push_back(init_encoder_layer(d, f, rng));
  }
  for (int i = 0; i < config_.decoder_layers; ++i) {
    decoder_.push_back(init_decoder_layer(d, f, rng));
  }
  out_proj_ = Tensor::randn({d, vocab_.size()}, rng, 1.0 / std::sqrt(double(d)));
  out_bias_ = Tensor({vocab_.size()}, 0.0);
  set_trainable(true);
}

Tensor Seq2SeqBackbone::embed(const std::vector<int>& tokens) const {
  if (static_cast<int>(tokens.size()) > config_.max_len) {
    throw DimensionError("sequence length " + std::to_string(tokens.size()) +
                         " exceeds max_len " + std::to_string(config_.max_len));
  }
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  return add(embedding_rows(tok_embed_, tokens),
             embedding_rows(pos_embed_, positions));
}

Tensor Seq2SeqBackbone::encode(const std::vector<int>& tokens,
                               const std::vector<int>& key_keep) const {
  instrument::increment("backbone.encode");
  Tensor h = embed(tokens);
  for (const auto& layer : encoder_) {
    h = apply_encoder_layer(h, layer, key_keep);
  }
  return h;
}

Tensor Seq2SeqBackbone::decode_logits(
    const Tensor& memory, const std::vector<int>& decoder_input) const {
  Tensor y = embed(decoder_input);
  for (const auto& layer : decoder_) {
    y = apply_decoder_layer(y, memory, layer);
  }
  return add_bias(matmul(y, out_proj_), out_bias_);
}

Tensor Seq2SeqBackbone::teacher_forced_nll(
    const Tensor& memory, const std::vector<int>& target) const {
  if (target.empty()) {
    throw ArgumentError("teacher_forced_nll: empty target");
  }
  std::vector<int> input;
  input.reserve(target.size() + 1);
  input.push_back(Vocabulary::kBos);
  input.insert(input.end(), target.begin(), target.end());
  std::vector<int> labels = target;
  labels.push_back(Vocabulary::kEos);
  return cross_entropy(decode_logits(memory, input), labels);
}

std::vector<int> Seq2SeqBackbone::decode(const Tensor& memory,
                                         const DecodeOptions& options) const {
  if (options.max_len < 1) throw ArgumentError("decode: max_len must be >= 1");
  instrument::increment("backbone.decode");
  NoGradGuard no_grad;
  std::mt19937_64 rng(options.seed);
  std::vector<int> sequence{Vocabulary::kBos};
  std::vector<int> produced;
  const int v = vocab_.size();
  while (static_cast<int>(produced.size()) < options.max_len) {
    Tensor logits = decode_logits(memory, sequence);
    const int last = logits.rows() - 1;
    std::vector<double> row(v);
    for (int j = 0; j < v; ++j) row[j] = logits.at(last * v + j);
    // Structural tokens are never emitted mid-sequence.
    row[Vocabulary::kPad] = -1e30;
    row[Vocabulary::kBos] = -1e30;

    int next;
    if (options.mode == DecodeOptions::Mode::kGreedy) {
      next = static_cast<int>(
          std::max_element(row.begin(), row.end()) - row.begin());
    } else {
      if (options.temperature <= 0.0) {
        throw ArgumentError("decode: temperature must be positive");
      }
      double mx = -1e300;
      for (double x : row) mx = std::max(mx, x / options.temperature);
      std::vector<double> probs(v);
      double sum = 0.0;
      for (int j = 0; j < v; ++j) {
        probs[j] = std::exp(row[j] / options.temperature - mx);
        sum += probs[j];
      }
      for (auto& p : probs) p /= sum;
      next = sample_index(probs, rng);
    }
    if (next == Vocabulary::kEos) break;
    produced.push_back(next);
    sequence.push_back(next);
    if (static_cast<int>(sequence.size()) >= config_.max_len) break;
  }
  return produced;
}

void Seq2SeqBackbone::set_trainable(bool trainable) {
  // requires_grad lives on the handle, so flags are set on the members
  // themselves, never on the aliasing handles named_params() returns.
  tok_embed_.set_requires_grad(trainable);
  pos_embed_.set_requires_grad(trainable);
  for (auto& l : encoder_) {
    l.attn.query_proj.set_requires_grad(trainable);
    l.attn.key_proj.set_requires_grad(trainable);
    l.attn.value_proj.set_requires_grad(trainable);
    l.attn_out.set_requires_grad(trainable);
    l.ffn.in_proj.set_requires_grad(trainable);
    l.ffn.in_bias.set_requires_grad(trainable);
    l.ffn.out_proj.set_requires_grad(trainable);
    l.ffn.out_bias.set_requires_grad(trainable);
  }
  for (auto& l : decoder_) {
    l.self_attn.query_proj.set_requires_grad(trainable);
    l.self_attn.key_proj.set_requires_grad(trainable);
    l.self_attn.value_proj.set_requires_grad(trainable);
    l.self_out.set_requires_grad(trainable);
    l.cross_attn.query_proj.set_requires_grad(trainable);
    l.cross_attn.key_proj.set_requires_grad(trainable);
    l.cross_attn.value_proj.set_requires_grad(trainable);
    l.cross_out.set_requires_grad(trainable);
    l.ffn.in_proj.set_requires_grad(trainable);
    l.ffn.in_bias.set_requires_grad(trainable);
    l.ffn.out_proj.set_requires_grad(trainable);
    l.ffn.out_bias.set_requires_grad(trainable);
  }
  out_proj_.set_requires_grad(trainable);
  out_bias_.set_requires_grad(trainable);
}

std::vector<std::pair<std::string, Tensor>> Seq2SeqBackbone::named_params()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tok_embed", tok_embed_);
  out.emplace_back("pos_embed", pos_embed_);
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    collect_attention(p + ".attn", encoder_[i].attn, out);
    out.emplace_back(p + ".attn_out", encoder_[i].attn_out);
    collect_ffn(p + ".ffn", encoder_[i].ffn, out);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const std::string p = "dec" + std::to_string(i);
    collect_attention(p + ".self", decoder_[i].self_attn, out);
    out.emplace_back(p + ".self_out", decoder_[i].self_out);
    collect_attention(p + ".cross", decoder_[i].cross_attn, out);
    out.emplace_back(p + ".cross_out", decoder_[i].cross_out);
    collect_ffn(p + ".ffn", decoder_[i].ffn, out);
  }
  out.emplace_back("out_proj", out_proj_);
  out.emplace_back("out_bias", out_bias_);
  return out;
}

std::uint64_t Seq2SeqBackbone::checksum() const {
  return params_checksum(named_params());
}

void Seq2SeqBackbone::save(const std::string& path,
                           const nlohmann::json& extra_meta) const {
  nlohmann::json meta = extra_meta;
  meta["kind"] = "backbone";
  meta["config"] = {{"model_dim", config_.model_dim},
                    {"ffn_dim", config_.ffn_dim},
                    {"encoder_layers", config_.encoder_layers},
                    {"decoder_layers", config_.decoder_layers},
                    {"max_len", config_.max_len}};
  meta["vocab"] = vocab_.id_to_token();
  meta["frozen"] = frozen_;
  checkpoint::save(path, named_params(), meta);
}

Seq2SeqBackbone Seq2SeqBackbone::load(const std::string& path) {
  auto archive = checkpoint::load(path);
  if (archive.meta.value("kind", "") != "backbone") {
    throw ValidationError("checkpoint is not a backbone: " + path);
  }
  Seq2SeqBackbone m;
  const auto& c = archive.meta.at("config");
  m.config_.model_dim = c.at("model_dim").get<int>();
  m.config_.ffn_dim = c.at("ffn_dim").get<int>();
  m.config_.encoder_layers = c.at("encoder_layers").get<int>();
  m.config_.decoder_layers = c.at("decoder_layers").get<int>();
  m.config_.max_len = c.at("max_len").get<int>();
  m.vocab_ = Vocabulary::from_tokens(
      archive.meta.at("vocab").get<std::vector<std::string>>());

  auto take = [&archive, &path](const std::string& name) {
    auto it = archive.tensors.find(name);
    if (it == archive.tensors.end()) {
      throw ValidationError("checkpoint missing tensor " + name + " in " +
                            path);
    }
    return it->second;
  };
  m.tok_embed_ = take("tok_embed");
  m.pos_embed_ = take("pos_embed");
  for (int i = 0; i < m.config_.encoder_layers; ++i) {
    const std::string p = "enc" + std::to_string(i);
    EncoderLayerParams l;
    l.attn = {take(p + ".attn.q"), take(p + ".attn.k"), take(p + ".attn.v")};
    l.attn_out = take(p + ".attn_out");
    l.ffn = {take(p + ".ffn.in_proj"), take(p + ".ffn.in_bias"),
             take(p + ".ffn.out_proj"), take(p + ".ffn.out_bias")};
    m.encoder_.push_back(std::move(l));
  }
  for (int i = 0; i < m.config_.decoder_layers; ++i) {
    const std::string p = "dec" + std::to_string(i);
    DecoderLayerParams l;
    l.self_attn = {take(p + ".self.q"), take(p + ".self.k"),
                   take(p + ".self.v")};
    l.self_out = take(p + ".self_out");
    l.cross_attn = {take(p + ".cross.q"), take(p + ".cross.k"),
                    take(p + ".cross.v")};
    l.cross_out = take(p + ".cross_out");
    l.ffn = {take(p + ".ffn.in_proj"), take(p + ".ffn.in_bias"),
             take(p + ".ffn.out_proj"), take(p + ".ffn.out_bias")};
    m.decoder_.push_back(std::move(l));
  }
  m.out_proj_ = take("out_proj");
  m.out_bias_ = take("out_bias");
  if (archive.meta.value("frozen", false)) {
    m.freeze();
  } else {
    m.set_trainable(true);
  }
  return m;
}

// ---------------------------------------------------------------------------
// TextEncoder

TextEncoder::TextEncoder(Vocabulary vocab, int model_dim, int layers,
                         int ffn_dim, int max_len, std::mt19937_64& rng)
    : vocab_(std::move(vocab)),
      model_dim_(model_dim),
      ffn_dim_(ffn_dim),
      max_len_(max_len) {
  tok_embed_ = Tensor::randn({vocab_.size(), model_dim}, rng, 0.1, true);
  for (int i = 0; i < layers; ++i) {
    layers_.push_back(init_encoder_layer(model_dim, ffn_dim, rng));
  }
  set_trainable(true);
}

// No positional terms: pooled text embeddings would otherwise share a large
// position-driven component that drives all pairwise cosines toward 1 and
// flattens the stance weights downstream.
Tensor TextEncoder::encode(const std::vector<int>& tokens) const {
  if (static_cast<int>(tokens.size()) > max_len_) {
    throw DimensionError("sequence length exceeds encoder max_len");
  }
  Tensor h = embedding_rows(tok_embed_, tokens);
  for (const auto& layer : layers_) {
    h = apply_encoder_layer(h, layer, {});
  }
  return h;
}

Tensor TextEncoder::embed_text(const std::string& text) const {
  std::vector<int> ids = vocab_.encode(text);
  if (ids.empty()) {
    throw ArgumentError("embed_text: text has no tokens");
  }
  if (static_cast<int>(ids.size()) > max_len_) {
    ids.resize(max_len_);
  }
  return mean_rows(encode(ids));
}

void TextEncoder::set_trainable(bool trainable) {
  tok_embed_.set_requires_grad(trainable);
  for (auto& l : layers_) {
    l.attn.query_proj.set_requires_grad(trainable);
    l.attn.key_proj.set_requires_grad(trainable);
    l.attn.value_proj.set_requires_grad(trainable);
    l.attn_out.set_requires_grad(trainable);
    l.ffn.in_proj.set_requires_grad(trainable);
    l.ffn.in_bias.set_requires_grad(trainable);
    l.ffn.out_proj.set_requires_grad(trainable);
    l.ffn.out_bias.set_requires_grad(trainable);
  }
}

std::vector<std::pair<std::string, Tensor>> TextEncoder::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tok_embed", tok_embed_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    collect_attention(p + ".attn", layers_[i].attn, out);
    out.emplace_back(p + ".attn_out", layers_[i].attn_out);
    collect_ffn(p + ".ffn", layers_[i].ffn, out);
  }
  return out;
}

void TextEncoder::save(const std::string& path,
                       const nlohmann::json& extra_meta) const {
  nlohmann::json meta = extra_meta;
  meta["kind"] = "text_encoder";
  meta["config"] = {{"model_dim", model_dim_},
                    {"ffn_dim", ffn_dim_},
                    {"layers", layers_.size()},
                    {"max_len", max_len_}};
  meta["vocab"] = vocab_.id_to_token();
  checkpoint::save(path, named_params(), meta);
}

TextEncoder TextEncoder::load(const std::string& path) {
  auto archive = checkpoint::load(path);
  if (archive.meta.value("kind", "") != "text_encoder") {
    throw ValidationError("checkpoint is not a text encoder: " + path);
  }
  TextEncoder e;
  const auto& c = archive.meta.at("config");
  e.model_dim_ = c.at("model_dim").get<int>();
  e.ffn_dim_ = c.at("ffn_dim").get<int>();
  e.max_len_ = c.at("max_len").get<int>();
  const int layers = c.at("layers").get<int>();
  e.vocab_ = Vocabulary::from_tokens(
      archive.meta.at("vocab").get<std::vector<std::string>>());
  auto take = [&archive, &path](const std::string& name) {
    auto it = archive.tensors.find(name);
    if (it == archive.tensors.end()) {
      throw ValidationError("checkpoint missing tensor " + name + " in " +
                            path);
    }
    return it->second;
  };
  e.tok_embed_ = take("tok_embed");
  for (int i = 0; i < layers; ++i) {
    const std::string p = "enc" + std::to_string(i);
    EncoderLayerParams l;
    l.attn = {take(p + ".attn.q"), take(p + ".attn.k"), take(p + ".attn.v")};
    l.attn_out = take(p + ".attn_out");
    l.ffn = {take(p + ".ffn.in_proj"), take(p + ".ffn.in_bias"),
             take(p + ".ffn.out_proj"), take(p + ".ffn.out_bias")};
    e.layers_.push_back(std::move(l));
  }
  e.set_trainable(true);
  return e;
}

// ---------------------------------------------------------------------------
// Adapters

LowRankAdapter LowRankAdapter::init(int dim, int rank, double scale,
                                    std::mt19937_64& rng) {
  if (rank < 1 || rank >= dim) {
    throw ArgumentError("adapter rank must satisfy 1 <= r < d");
  }
  LowRankAdapter a;
  a.down = Tensor::randn({dim, rank}, rng, 1.0 / std::sqrt(double(dim)), true);
  a.up = Tensor({rank, dim}, 0.0, true);
  a.scale = scale;
  return a;
}

Tensor LowRankAdapter::apply(const Tensor& h) const {
  return add(h, redkit::scale(matmul(matmul(h, down), up), scale));
}

void LowRankAdapter::set_trainable(bool trainable) {
  down.set_requires_grad(trainable);
  up.set_requires_grad(trainable);
}

Tensor expert_forward(const Tensor& hidden, const LowRankAdapter& adapter) {
  return adapter.apply(hidden);
}

ExpertBank ExpertBank::init(int expert_count, int dim, int rank, double scale,
                            std::mt19937_64& rng) {
  if (expert_count < 2) {
    throw ArgumentError("expert bank needs at least 2 routed experts");
  }
  ExpertBank bank;
  for (int i = 0; i < expert_count; ++i) {
    bank.experts.push_back(LowRankAdapter::init(dim, rank, scale, rng));
  }
  bank.human_expert = LowRankAdapter::init(dim, rank, scale, rng);
  return bank;
}

std::vector<std::pair<std::string, Tensor>> ExpertBank::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    out.emplace_back("expert" + std::to_string(i) + ".down", experts[i].down);
    out.emplace_back("expert" + std::to_string(i) + ".up", experts[i].up);
  }
  out.emplace_back("human.down", human_expert.down);
  out.emplace_back("human.up", human_expert.up);
  return out;
}

void ExpertBank::set_trainable(bool trainable) {
  for (auto& e : experts) e.set_trainable(trainable);
  human_expert.set_trainable(trainable);
}

void ExpertBank::save(const std::string& path,
                      const nlohmann::json& extra_meta) const {
  nlohmann::json meta = extra_meta;
  meta["kind"] = "expert_bank";
  meta["expert_count"] = experts.size();
  meta["scale"] = experts.empty() ? 1.0 : experts.front().scale;
  checkpoint::save(path, named_params(), meta);
}

ExpertBank ExpertBank::load(const std::string& path) {
  auto archive = checkpoint::load(path);
  if (archive.meta.value("kind", "") != "expert_bank") {
    throw ValidationError("checkpoint is not an expert bank: " + path);
  }
  const int count = archive.meta.at("expert_count").get<int>();
  const double scale = archive.meta.value("scale", 1.0);
  auto take = [&archive, &path](const std::string& name) {
    auto it = archive.tensors.find(name);
    if (it == archive.tensors.end()) {
      throw ValidationError("checkpoint missing tensor " + name + " in " +
                            path);
    }
    Tensor t = it->second;
    t.set_requires_grad(true);
    return t;
  };
  ExpertBank bank;
  for (int i = 0; i < count; ++i) {
    LowRankAdapter a;
    a.down = take("expert" + std::to_string(i) + ".down");
    a.up = take("expert" + std::to_string(i) + ".up");
    a.scale = scale;
    bank.experts.push_back(std::move(a));
  }
  bank.human_expert.down = take("human.down");
  bank.human_expert.up = take("human.up");
  bank.human_expert.scale = scale;
  return bank;
}

// ---------------------------------------------------------------------------
// Backbone pretraining

std::vector<double> pretrain_backbone(Seq2SeqBackbone& model,
                                      const std::vector<std::string>& texts,
                                      const PretrainConfig& config) {
  std::vector<std::vector<int>> sequences;
  for (const auto& text : texts) {
    auto ids = model.vocab().encode(text);
    if (ids.empty()) continue;
    if (static_cast<int>(ids.size()) > model.config().max_len - 2) {
      ids.resize(model.config().max_len - 2);
    }
    sequences.push_back(std::move(ids));
  }
  if (sequences.empty()) {
    throw ArgumentError("pretrain_backbone: no usable texts");
  }

  std::vector<Tensor> params;
  for (auto& [name, t] : model.named_params()) {
    (void)name;
    params.push_back(t);
  }
  AdamConfig adam;
  adam.lr = config.lr;
  AdamOptimizer opt(params, adam);
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, sequences.size() - 1);

  std::vector<double> curve;
  curve.reserve(config.steps);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int step = 0; step < config.steps; ++step) {
    Tape tape;
    Tensor total = Tensor::scalar(0.0);
    for (int b = 0; b < config.batch_size; ++b) {
      const auto& seq = sequences[pick(rng)];
      // Denoising reconstruction: corrupt the encoder input so the decoder
      // learns corpus statistics instead of copying its memory.
      std::vector<int> corrupted = seq;
      for (auto& id : corrupted) {
        if (unit(rng) < config.corruption_rate) id = Vocabulary::kUnk;
      }
      Tensor memory = model.encode(corrupted);
      total = add(total, model.teacher_forced_nll(memory, seq));
    }
    Tensor loss = scale(total, 1.0 / config.batch_size);
    const double value = loss.scalar_value();
    if (!std::isfinite(value)) {
      throw TrainingAbort("pretraining loss became non-finite at step " +
                          std::to_string(step));
    }
    curve.push_back(value);
    tape.backward(loss);
    opt.step();
    opt.zero_grad();
  }
  return curve;
}

}  // namespace redkit
