#include <doctest.h>

#include <cstdio>
#include <random>

#include "helpers.hpp"
#include "redkit/checkpoint.hpp"
#include "redkit/model.hpp"
#include "redkit/optimizer.hpp"
#include "redkit/vocab.hpp"

using namespace redkit;

namespace {

std::vector<std::string> tiny_corpus() {
  return {
      "the quick brown fox jumps over the lazy dog",
      "a storm is coming to the coast tonight",
      "officials deny the report about the bridge",
      "witnesses saw smoke rising near the market",
      "the festival starts tomorrow in the old town",
      "no evidence supports the viral claim",
      "the mayor confirmed the new schedule",
      "people shared the photo thousands of times",
      "experts say the video was edited",
      "the river level rose after heavy rain",
  };
}

Vocabulary tiny_vocab() { return Vocabulary::build(tiny_corpus()); }

Seq2SeqBackbone tiny_backbone(std::uint64_t seed = 42) {
  std::mt19937_64 rng(seed);
  BackboneConfig cfg;
  cfg.max_len = 32;
  return Seq2SeqBackbone(tiny_vocab(), cfg, rng);
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("vocabulary tokenize, reserved ids and unk fallback") {
  Vocabulary v = tiny_vocab();
  CHECK(v.size() >= 8);
  auto toks = Vocabulary::tokenize("The  QUICK\tbrown\nfox ");
  REQUIRE(toks.size() == 4);
  CHECK(toks[0] == "the");
  CHECK(toks[1] == "quick");

  CHECK(v.id("<pad>") == Vocabulary::kPad);
  CHECK(v.id("<bos>") == Vocabulary::kBos);
  CHECK(v.id("<eos>") == Vocabulary::kEos);
  CHECK(v.id("zzz-not-present") == Vocabulary::kUnk);

  // Bijective over non-reserved entries.
  for (int i = Vocabulary::kReserved; i < v.size(); ++i) {
    CHECK(v.id(v.token(i)) == i);
  }
  auto ids = v.encode("the fox");
  CHECK(v.decode(ids) == "the fox");
}

TEST_CASE("encode is deterministic with the expected shape") {
  Seq2SeqBackbone m = tiny_backbone();
  auto ids = m.vocab().encode("the quick fox");
  Tensor h1 = m.encode(ids);
  Tensor h2 = m.encode(ids);
  REQUIRE(h1.shape() == std::vector<int>{3, 32});
  for (std::size_t i = 0; i < h1.numel(); ++i) CHECK(h1.at(i) == h2.at(i));

  Tensor single = m.encode({Vocabulary::kReserved});
  CHECK(single.shape() == std::vector<int>{1, 32});

  CHECK_THROWS_AS(m.encode({99999}), IndexError);
}

TEST_CASE("padding-masked positions do not affect unmasked outputs") {
  Seq2SeqBackbone m = tiny_backbone();
  auto ids = m.vocab().encode("the quick brown fox");
  Tensor plain = m.encode(ids);

  std::vector<int> padded = ids;
  padded.push_back(Vocabulary::kPad);
  padded.push_back(Vocabulary::kPad);
  std::vector<int> keep(padded.size(), 1);
  keep[ids.size()] = 0;
  keep[ids.size() + 1] = 0;
  Tensor masked = m.encode(padded, keep);

  const int d = 32;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (int j = 0; j < d; ++j) {
      CHECK(masked.at(i * d + j) == plain.at(i * d + j));
    }
  }
}

TEST_CASE("adapter is an exact identity at initialization") {
  std::mt19937_64 rng(1);
  Seq2SeqBackbone m = tiny_backbone();
  LowRankAdapter adapter = LowRankAdapter::init(32, 4, 1.0, rng);
  Tensor h = m.encode(m.vocab().encode("the storm is coming"));
  Tensor out = expert_forward(h, adapter);
  REQUIRE(out.shape() == h.shape());
  for (std::size_t i = 0; i < h.numel(); ++i) CHECK(out.at(i) == h.at(i));

  Tensor pooled = mean_rows(out);
  CHECK(pooled.shape() == std::vector<int>{32});
}

TEST_CASE("distinct trained adapters give distinct pooled embeddings") {
  std::mt19937_64 rng(9);
  Seq2SeqBackbone m = tiny_backbone();
  m.freeze();
  LowRankAdapter a = LowRankAdapter::init(32, 4, 1.0, rng);
  LowRankAdapter b = LowRankAdapter::init(32, 4, 1.0, rng);

  auto post = m.vocab().encode("officials deny the report");
  auto target_a = m.vocab().encode("no evidence supports the claim");
  auto target_b = m.vocab().encode("the festival starts tomorrow");

  auto train = [&](LowRankAdapter& ad, const std::vector<int>& tgt) {
    AdamConfig cfg;
    cfg.lr = 2e-2;
    AdamOptimizer opt({ad.down, ad.up}, cfg);
    for (int step = 0; step < 60; ++step) {
      Tape tape;
      Tensor memory = expert_forward(m.encode(post), ad);
      Tensor loss = m.teacher_forced_nll(memory, tgt);
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
    }
  };
  train(a, target_a);
  train(b, target_b);

  Tensor h = m.encode(post);
  Tensor pa = mean_rows(expert_forward(h, a));
  Tensor pb = mean_rows(expert_forward(h, b));
  double diff = 0.0;
  for (int j = 0; j < 32; ++j) diff += std::abs(pa.at(j) - pb.at(j));
  CHECK(diff > 1e-6);
}

TEST_CASE("uniform logits give ln V per token") {
  Seq2SeqBackbone m = tiny_backbone();
  // Zero the output projection so every position yields uniform logits.
  for (auto& [name, t] : m.named_params()) {
    if (name == "out_proj" || name == "out_bias") {
      std::fill(t.data(), t.data() + t.numel(), 0.0);
    }
  }
  auto post = m.vocab().encode("the storm is coming");
  auto target = m.vocab().encode("no evidence supports the claim");
  Tensor loss = m.teacher_forced_nll(m.encode(post), target);
  CHECK(loss.scalar_value() ==
        doctest::Approx(std::log(double(m.vocab().size()))).epsilon(1e-12));
}

TEST_CASE("gradients reach adapters but never the frozen backbone") {
  std::mt19937_64 rng(3);
  Seq2SeqBackbone m = tiny_backbone();
  m.freeze();
  LowRankAdapter adapter = LowRankAdapter::init(32, 4, 1.0, rng);

  auto post = m.vocab().encode("the river level rose");
  auto target = m.vocab().encode("heavy rain");
  {
    Tape tape;
    Tensor memory = expert_forward(m.encode(post), adapter);
    Tensor loss = m.teacher_forced_nll(memory, target);
    tape.backward(loss);
  }
  // Adapter received gradient signal.
  bool adapter_touched = false;
  const double* gd = adapter.down.grad_data();
  const double* gu = adapter.up.grad_data();
  for (std::size_t i = 0; gu && i < adapter.up.numel(); ++i) {
    if (gu[i] != 0.0) adapter_touched = true;
  }
  (void)gd;
  CHECK(adapter_touched);
  // Backbone parameters accumulated nothing.
  for (auto& [name, t] : m.named_params()) {
    (void)name;
    const double* g = t.grad_data();
    if (!g) continue;
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(g[i] == 0.0);
  }
}

TEST_CASE("backbone checksum is stable until parameters change") {
  Seq2SeqBackbone m = tiny_backbone();
  const std::uint64_t before = m.checksum();
  CHECK(m.checksum() == before);
  auto params = m.named_params();
  params.front().second.data()[0] += 1.0;
  CHECK(m.checksum() != before);
}

TEST_CASE("decode contracts: determinism, seeding, length, no pad") {
  Seq2SeqBackbone m = tiny_backbone();
  Tensor memory = m.encode(m.vocab().encode("the market is busy"));

  DecodeOptions greedy;
  greedy.max_len = 8;
  auto g1 = m.decode(memory, greedy);
  auto g2 = m.decode(memory, greedy);
  CHECK(g1 == g2);
  CHECK(g1.size() <= 8);

  DecodeOptions sampled;
  sampled.mode = DecodeOptions::Mode::kSample;
  sampled.temperature = 1.0;
  sampled.seed = 777;
  sampled.max_len = 8;
  auto s1 = m.decode(memory, sampled);
  auto s2 = m.decode(memory, sampled);
  CHECK(s1 == s2);
  for (int id : s1) {
    CHECK(id != Vocabulary::kPad);
    CHECK(id != Vocabulary::kBos);
  }
  CHECK(s1.size() <= 8);
}

TEST_CASE("pretraining reduces reconstruction loss and freezing holds") {
  Seq2SeqBackbone m = tiny_backbone(7);
  PretrainConfig cfg;
  cfg.steps = 120;
  cfg.lr = 2e-3;
  cfg.seed = 7;
  auto curve = pretrain_backbone(m, tiny_corpus(), cfg);
  REQUIRE(curve.size() == 120);
  // Compare first and last quintile means; individual steps are noisy.
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 24; ++i) head += curve[i];
  for (int i = 96; i < 120; ++i) tail += curve[i];
  CHECK(tail < head);

  m.freeze();
  const std::uint64_t frozen_sum = m.checksum();

  // A tuning-style step on an adapter must leave the backbone untouched.
  std::mt19937_64 rng(5);
  LowRankAdapter adapter = LowRankAdapter::init(32, 4, 1.0, rng);
  AdamConfig ac;
  ac.lr = 1e-2;
  AdamOptimizer opt({adapter.down, adapter.up}, ac);
  auto post = m.vocab().encode("the storm is coming");
  auto target = m.vocab().encode("stay away from the coast");
  for (int step = 0; step < 5; ++step) {
    Tape tape;
    Tensor loss =
        m.teacher_forced_nll(expert_forward(m.encode(post), adapter), target);
    tape.backward(loss);
    opt.step();
    opt.zero_grad();
  }
  CHECK(m.checksum() == frozen_sum);
}

TEST_CASE("single pair overfits to a tenth of the initial loss") {
  Seq2SeqBackbone m = tiny_backbone(11);
  PretrainConfig pre;
  pre.steps = 150;
  pre.lr = 2e-3;
  pre.seed = 11;
  pretrain_backbone(m, tiny_corpus(), pre);
  m.freeze();

  std::mt19937_64 rng(13);
  LowRankAdapter adapter = LowRankAdapter::init(32, 4, 1.0, rng);
  auto post = m.vocab().encode("witnesses saw smoke rising near the market");
  auto target = m.vocab().encode("the photo was edited say experts");

  AdamConfig cfg;
  cfg.lr = 2e-2;
  cfg.decoupled_decay = true;
  cfg.weight_decay = 0.0;
  AdamOptimizer opt({adapter.down, adapter.up}, cfg);

  double initial = 0.0, final_loss = 0.0;
  for (int step = 0; step < 500; ++step) {
    Tape tape;
    Tensor loss =
        m.teacher_forced_nll(expert_forward(m.encode(post), adapter), target);
    if (step == 0) initial = loss.scalar_value();
    final_loss = loss.scalar_value();
    tape.backward(loss);
    opt.step();
    opt.zero_grad();
    if (final_loss < 0.05 * initial) break;
  }
  CHECK(final_loss < 0.1 * initial);
}

TEST_CASE("checkpoints round-trip and are byte-stable") {
  const std::string path1 = "test_backbone_1.ckpt";
  const std::string path2 = "test_backbone_2.ckpt";
  Seq2SeqBackbone m = tiny_backbone(99);
  m.save(path1);
  m.save(path2);

  // Byte-identical writes.
  auto read_all = [](const std::string& p) {
    std::FILE* f = std::fopen(p.c_str(), "rb");
    REQUIRE(f != nullptr);
    std::string data;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) data.append(buf, n);
    std::fclose(f);
    return data;
  };
  CHECK(read_all(path1) == read_all(path2));

  Seq2SeqBackbone loaded = Seq2SeqBackbone::load(path1);
  CHECK(loaded.checksum() == m.checksum());
  CHECK(loaded.vocab().size() == m.vocab().size());

  Tensor a = m.encode(m.vocab().encode("the fox"));
  Tensor b = loaded.encode(loaded.vocab().encode("the fox"));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));

  std::remove(path1.c_str());
  std::remove(path2.c_str());
}

TEST_SUITE_END();
