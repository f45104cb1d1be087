#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "helpers.hpp"
#include "redkit/fusion.hpp"

using namespace redkit;

namespace {

std::vector<Tensor> scalar_weights(const std::vector<double>& values) {
  std::vector<Tensor> out;
  for (double v : values) out.push_back(Tensor::scalar(v));
  return out;
}

CommentEmbeddingSet synthetic_set(const std::vector<Tensor>& comments,
                                  const Tensor& post) {
  CommentEmbeddingSet set;
  set.post_embedding = post;
  for (const auto& c : comments) {
    set.comment_embeddings.push_back(c);
    set.stance_weights.push_back(
        sub(Tensor::scalar(1.0), cosine_similarity(c, post)));
  }
  return set;
}

}  // namespace

TEST_SUITE_BEGIN("fusion");

TEST_CASE("stance weights: identical, orthogonal, and pooling oracle") {
  std::mt19937_64 rng(3);
  Vocabulary vocab = Vocabulary::build(
      {"alpha beta gamma delta epsilon zeta eta theta iota kappa"});
  TextEncoder enc(vocab, 8, 1, 16, 16, rng);

  // Comment identical to the post: stance weight 0.
  auto set = embed_comments("alpha beta gamma", {"alpha beta gamma"}, enc);
  REQUIRE(set.stance_weights.size() == 1);
  CHECK(set.stance_weights[0].scalar_value() ==
        doctest::Approx(0.0).epsilon(1e-12));

  // Hand-computed pooled embedding of a 3-token comment.
  Tensor tokens = enc.encode(vocab.encode("alpha beta gamma"));
  Tensor pooled = enc.embed_text("alpha beta gamma");
  const int d = 8;
  for (int j = 0; j < d; ++j) {
    double mean = (tokens.at(j) + tokens.at(d + j) + tokens.at(2 * d + j)) / 3;
    CHECK(pooled.at(j) == doctest::Approx(mean).epsilon(1e-12));
  }

  // Empty comments are skipped with a counter, not an error.
  auto skipped = embed_comments("alpha beta", {"", "alpha"}, enc);
  CHECK(skipped.skipped_empty == 1);
  CHECK(skipped.comment_embeddings.size() == 1);
}

TEST_CASE("orthogonal embedding gives stance weight one") {
  Tensor post({2}, {1.0, 0.0});
  Tensor ortho({2}, {0.0, 1.0});
  auto set = synthetic_set({ortho}, post);
  CHECK(set.stance_weights[0].scalar_value() ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("stance split medians, ties, and rescue") {
  // Two distinct values: median interpolates, one each side.
  auto ab = stance_split({0.1, 0.9});
  CHECK(ab.tau == doctest::Approx(0.5));
  REQUIRE(ab.deny.size() == 1);
  CHECK(ab.deny[0] == 1);
  REQUIRE(ab.support.size() == 1);
  CHECK(ab.support[0] == 0);

  // All equal: everything lands in support, then one moves over.
  auto ties = stance_split({0.4, 0.4, 0.4, 0.4});
  CHECK(ties.deny.size() == 1);
  CHECK(ties.support.size() == 3);

  // 16 distinct values: exact 8/8.
  std::vector<double> sixteen;
  for (int i = 0; i < 16; ++i) sixteen.push_back(0.05 * i);
  auto split = stance_split(sixteen);
  CHECK(split.deny.size() == 8);
  CHECK(split.support.size() == 8);

  // Sort-based oracle: the deny camp is exactly the top half.
  std::vector<int> order(16);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return sixteen[a] > sixteen[b]; });
  std::vector<int> top(order.begin(), order.begin() + 8);
  std::sort(top.begin(), top.end());
  CHECK(split.deny == top);

  // Singleton: the lone comment counts as deny, support stays empty.
  auto lone = stance_split({0.7});
  CHECK(lone.deny == std::vector<int>{0});
  CHECK(lone.support.empty());

  CHECK_THROWS_AS(stance_split({}), ArgumentError);
}

TEST_CASE("median balance for even distinct sets of many sizes") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 * (1 + trial % 10);
    std::set<double> unique;
    while (static_cast<int>(unique.size()) < n) unique.insert(unit(rng));
    std::vector<double> xs(unique.begin(), unique.end());
    std::shuffle(xs.begin(), xs.end(), rng);
    auto split = stance_split(xs);
    CHECK(split.deny.size() == split.support.size());
  }
}

TEST_CASE("pool_subset: singleton, permutation invariance, zero weight") {
  std::mt19937_64 rng(17);
  const int d = 6;
  AttentionParams attn{Tensor::randn({d, d}, rng, 0.4),
                       Tensor::randn({d, d}, rng, 0.4),
                       Tensor::randn({d, d}, rng, 0.4)};
  std::vector<Tensor> embs;
  for (int i = 0; i < 4; ++i) embs.push_back(Tensor::randn({d}, rng));
  auto weights = scalar_weights({0.3, 1.1, 0.8, 0.0});

  // Singleton: value projection of the single scaled row.
  Tensor single = pool_subset(embs, weights, {1}, attn);
  Tensor scaled_row = scale(embs[1], 1.1);
  Tensor direct = mean_rows(matmul(stack_rows({scaled_row}), attn.value_proj));
  for (int j = 0; j < d; ++j) {
    CHECK(single.at(j) == doctest::Approx(direct.at(j)).epsilon(1e-12));
  }

  // Permuting the subset order leaves the pooled value unchanged.
  Tensor fwd = pool_subset(embs, weights, {0, 1, 2}, attn);
  Tensor rev = pool_subset(embs, weights, {2, 0, 1}, attn);
  for (int j = 0; j < d; ++j) {
    CHECK(fwd.at(j) == doctest::Approx(rev.at(j)).epsilon(1e-9));
  }

  // A zero-stance row enters as a zero input row: replacing the comment
  // embedding with anything else changes nothing.
  Tensor with_junk = pool_subset(
      {embs[0], embs[1], embs[2], Tensor::randn({d}, rng)}, weights,
      {0, 1, 3}, attn);
  Tensor with_orig = pool_subset(embs, weights, {0, 1, 3}, attn);
  for (int j = 0; j < d; ++j) {
    CHECK(with_junk.at(j) == doctest::Approx(with_orig.at(j)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(pool_subset(embs, weights, {}, attn), ContractViolation);
}

TEST_CASE("fuse matches the concatenation-projection oracle") {
  std::mt19937_64 rng(23);
  const int d = 5;
  Tensor proj = Tensor::randn({4 * d, d}, rng, 0.5);
  Tensor bias = Tensor::randn({d}, rng, 0.2);

  Tensor deny = Tensor::randn({d}, rng);
  Tensor support = Tensor::randn({d}, rng);
  Tensor e = fuse(deny, support, proj, bias);

  for (int j = 0; j < d; ++j) {
    double acc = bias.at(j);
    for (int i = 0; i < d; ++i) {
      acc += deny.at(i) * proj.at(i * d + j);
      acc += deny.at(i) * support.at(i) * proj.at((d + i) * d + j);
      acc += (deny.at(i) - support.at(i)) * proj.at((2 * d + i) * d + j);
      acc += support.at(i) * proj.at((3 * d + i) * d + j);
    }
    CHECK(e.at(j) == doctest::Approx(acc).epsilon(1e-9));
  }

  // Equal camps zero the difference block.
  Tensor same = fuse(deny, deny, proj, bias);
  CHECK(same.numel() == static_cast<std::size_t>(d));

  // Zero support camp zeroes the product block: fuse([v;0;v;0]).
  Tensor zero({d}, 0.0);
  Tensor half = fuse(deny, zero, proj, bias);
  for (int j = 0; j < d; ++j) {
    double acc = bias.at(j);
    for (int i = 0; i < d; ++i) {
      acc += deny.at(i) * (proj.at(i * d + j) + proj.at((2 * d + i) * d + j));
    }
    CHECK(half.at(j) == doctest::Approx(acc).epsilon(1e-9));
  }

  Tensor wrong({d + 1}, 0.0);
  CHECK_THROWS_AS(fuse(deny, wrong, proj, bias), DimensionError);
}

TEST_CASE("controversy feature: partition, shuffling invariance, edge sizes") {
  std::mt19937_64 rng(29);
  const int d = 6;
  FusionParams params = FusionParams::init(d, rng);
  Tensor post = Tensor::randn({d}, rng);

  std::vector<Tensor> comments;
  for (int i = 0; i < 7; ++i) comments.push_back(Tensor::randn({d}, rng));
  auto set = synthetic_set(comments, post);

  auto split = stance_split(set.stance_values());
  std::vector<int> all = split.deny;
  all.insert(all.end(), split.support.begin(), split.support.end());
  std::sort(all.begin(), all.end());
  std::vector<int> expect(7);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
  CHECK_FALSE(split.deny.empty());
  CHECK_FALSE(split.support.empty());

  Tensor e1 = controversy_feature(set, params);

  // Shuffle the comment order: identical feature within 1e-9.
  std::vector<int> perm{3, 0, 6, 2, 5, 1, 4};
  std::vector<Tensor> shuffled;
  for (int p : perm) shuffled.push_back(comments[p]);
  auto set2 = synthetic_set(shuffled, post);
  Tensor e2 = controversy_feature(set2, params);
  for (int j = 0; j < d; ++j) {
    CHECK(e1.at(j) == doctest::Approx(e2.at(j)).epsilon(1e-9));
  }

  // Zero comments: zero feature. One comment: defined, support camp zero.
  CommentEmbeddingSet empty;
  empty.post_embedding = post;
  Tensor e0 = controversy_feature(empty, params);
  for (int j = 0; j < d; ++j) CHECK(e0.at(j) == 0.0);

  auto one = synthetic_set({comments[0]}, post);
  Tensor eone = controversy_feature(one, params);
  CHECK(eone.numel() == static_cast<std::size_t>(d));
}

TEST_CASE("gradients flow through the whole fusion path") {
  std::mt19937_64 rng(31);
  const int d = 5;
  FusionParams params = FusionParams::init(d, rng);
  Tensor post = Tensor::randn({d}, rng, 1.0, true);
  std::vector<Tensor> comments;
  for (int i = 0; i < 4; ++i) {
    comments.push_back(Tensor::randn({d}, rng, 1.0, true));
  }
  Tensor classifier = Tensor::randn({d, 2}, rng, 0.5, true);

  auto forward = [&]() {
    auto set = synthetic_set(comments, post);
    Tensor feature = controversy_feature(set, params);
    Tensor logits = matmul(stack_rows({feature}), classifier);
    return cross_entropy(logits, {1});
  };
  CHECK(testutil::gradcheck(post, forward) < 1e-4);
  for (auto& c : comments) CHECK(testutil::gradcheck(c, forward) < 1e-4);
  CHECK(testutil::gradcheck(params.fuse_proj, forward) < 1e-4);
  CHECK(testutil::gradcheck(params.deny_attention.query_proj, forward) < 1e-4);
  CHECK(testutil::gradcheck(params.support_attention.value_proj, forward) <
        1e-4);
  CHECK(testutil::gradcheck(classifier, forward) < 1e-4);
}

TEST_SUITE_END();
