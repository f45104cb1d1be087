#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "helpers.hpp"
#include "redkit/routing.hpp"

using namespace redkit;

namespace {

// Brute-force reachability oracle: repeated relaxation over the pruned
// adjacency until a fixed point, entirely independent of the DFS path.
std::vector<std::vector<int>> oracle_components(const SimilarityGraph& g) {
  const int n = g.size;
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i) reach[i][i] = true;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (g.connected(i, j)) reach[i][j] = true;
    }
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < n; ++i) {
        if (!reach[i][k]) continue;
        for (int j = 0; j < n; ++j) {
          if (reach[k][j] && !reach[i][j]) {
            reach[i][j] = true;
            changed = true;
          }
        }
      }
    }
  }
  std::vector<std::vector<int>> comps;
  std::vector<bool> used(n, false);
  for (int i = 0; i < n; ++i) {
    if (used[i]) continue;
    std::vector<int> comp;
    for (int j = 0; j < n; ++j) {
      if (reach[i][j]) {
        comp.push_back(j);
        used[j] = true;
      }
    }
    comps.push_back(comp);
  }
  return comps;
}

// Exhaustive count of non-empty subsets of 0..L-1 fully inside one group.
std::uint64_t oracle_count(const ExpertGrouping& grouping, int l) {
  std::uint64_t count = 0;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << l); ++mask) {
    for (const auto& g : grouping.groups) {
      std::uint64_t group_mask = 0;
      for (int m : g) group_mask |= std::uint64_t{1} << m;
      if ((mask & group_mask) == mask) {
        ++count;
        break;
      }
    }
  }
  return count;
}

std::vector<std::vector<double>> random_embeddings(int l, int d,
                                                   std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<std::vector<double>> out(l, std::vector<double>(d));
  for (auto& v : out) {
    for (auto& x : v) x = dist(rng);
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("routing");

TEST_CASE("similarity graph pruning matches hand-computed cosines") {
  // identical embeddings keep their unit edge
  auto g1 = build_similarity_graph({{1, 0}, {1, 0}}, 0.5);
  CHECK(g1.at(0, 1) == doctest::Approx(1.0));
  CHECK(g1.connected(0, 1));

  // orthogonal embeddings are pruned
  auto g2 = build_similarity_graph({{1, 0}, {0, 1}}, 0.5);
  CHECK(g2.at(0, 1) == 0.0);
  CHECK_FALSE(g2.connected(0, 1));

  // chain: (0,1) and (1,2) retained at 1/sqrt(2), (0,2) pruned
  auto g3 = build_similarity_graph({{1, 0}, {1, 1}, {0, 1}}, 0.5);
  CHECK(g3.at(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(g3.at(1, 2) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(g3.at(0, 2) == 0.0);

  auto comps = connected_components(g3);
  REQUIRE(comps.groups.size() == 1);
  CHECK(comps.groups[0] == std::vector<int>{0, 1, 2});

  CHECK_THROWS_AS(build_similarity_graph({{0, 0}, {1, 0}}, 0.5),
                  DegenerateInputError);
  CHECK_THROWS_AS(build_similarity_graph({{1, 0}}, 0.5), ArgumentError);
}

TEST_CASE("negative similarities always prune") {
  auto g = build_similarity_graph({{1, 0}, {-1, 0}}, 0.0);
  CHECK(g.at(0, 1) == 0.0);
}

TEST_CASE("component edge cases") {
  // Fully pruned: four singletons.
  auto apart = build_similarity_graph(
      {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}, 0.5);
  auto singles = connected_components(apart);
  REQUIRE(singles.groups.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(singles.groups[i] == std::vector<int>{i});
  }

  // Fully connected: one group of four.
  auto together = build_similarity_graph(
      {{1, 0.01, 0, 0}, {1, 0, 0, 0}, {1, -0.01, 0, 0}, {1, 0.02, 0, 0}}, 0.5);
  auto one = connected_components(together);
  REQUIRE(one.groups.size() == 1);
  CHECK(one.groups[0].size() == 4);
}

TEST_CASE("components match the reachability oracle on random graphs") {
  std::mt19937_64 rng(123);
  std::uniform_int_distribution<int> lsize(2, 12);
  std::uniform_real_distribution<double> eps(-0.2, 0.9);
  for (int trial = 0; trial < 300; ++trial) {
    const int l = lsize(rng);
    auto graph =
        build_similarity_graph(random_embeddings(l, 4, rng), eps(rng));
    auto mine = connected_components(graph);
    auto expected = oracle_components(graph);
    REQUIRE(mine.groups == expected);

    // Partition invariant: disjoint and covering.
    std::set<int> seen;
    for (const auto& g : mine.groups) {
      for (int m : g) CHECK(seen.insert(m).second);
    }
    CHECK(static_cast<int>(seen.size()) == l);

    // Count oracle.
    CHECK(count_combinations(mine) == oracle_count(mine, l));
  }
}

TEST_CASE("combination counts for the documented groupings") {
  ExpertGrouping ten_singletons;
  for (int i = 0; i < 10; ++i) ten_singletons.groups.push_back({i});
  CHECK(count_combinations(ten_singletons) == 10);

  ExpertGrouping one_big;
  one_big.groups.push_back({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(count_combinations(one_big) == 1023);

  ExpertGrouping mixed;
  mixed.groups = {{0, 1, 2}, {3, 4}, {5}};
  CHECK(count_combinations(mixed) == 11);
  CHECK(oracle_count(mixed, 6) == 11);
}

TEST_CASE("raising the threshold never merges components") {
  std::mt19937_64 rng(321);
  for (int trial = 0; trial < 100; ++trial) {
    auto emb = random_embeddings(8, 4, rng);
    auto low = connected_components(build_similarity_graph(emb, 0.2));
    auto high = connected_components(build_similarity_graph(emb, 0.6));
    // Every high-threshold group must fit inside one low-threshold group.
    for (const auto& hg : high.groups) {
      int container = -1;
      for (std::size_t i = 0; i < low.groups.size(); ++i) {
        if (std::includes(low.groups[i].begin(), low.groups[i].end(),
                          hg.begin(), hg.end())) {
          container = static_cast<int>(i);
          break;
        }
      }
      CHECK(container >= 0);
    }
    CHECK(high.groups.size() >= low.groups.size());
  }
}

TEST_CASE("sampling exhausts all subsets when k equals the count") {
  ExpertGrouping mixed;
  mixed.groups = {{0, 1, 2}, {3, 4}, {5}};
  auto plan = sample_routing_plan(mixed, 11, std::uint64_t{2024});
  REQUIRE(plan.subsets.size() == 11);
  std::set<std::vector<int>> unique(plan.subsets.begin(), plan.subsets.end());
  CHECK(unique.size() == 11);

  // Every subset stays inside exactly one group.
  for (const auto& s : plan.subsets) {
    int containers = 0;
    for (const auto& g : mixed.groups) {
      if (std::includes(g.begin(), g.end(), s.begin(), s.end())) ++containers;
    }
    CHECK(containers == 1);
  }
}

TEST_CASE("equal seeds give identical plans") {
  ExpertGrouping mixed;
  mixed.groups = {{0, 1, 2, 3}, {4, 5}};
  auto a = sample_routing_plan(mixed, 7, std::uint64_t{55});
  auto b = sample_routing_plan(mixed, 7, std::uint64_t{55});
  CHECK(a.subsets == b.subsets);
  auto c = sample_routing_plan(mixed, 7, std::uint64_t{56});
  CHECK(a.subsets != c.subsets);

  CHECK_THROWS_AS(sample_routing_plan(mixed, 0, std::uint64_t{1}),
                  ArgumentError);
}

TEST_CASE("oversampling falls back to replacement") {
  ExpertGrouping tiny;
  tiny.groups = {{0}, {1}};
  auto plan = sample_routing_plan(tiny, 5, std::uint64_t{9});
  CHECK(plan.subsets.size() == 5);
  std::set<std::vector<int>> unique(plan.subsets.begin(), plan.subsets.end());
  CHECK(unique.size() == 2);  // first two draws are distinct
}

TEST_CASE("single-draw sampling is roughly uniform") {
  ExpertGrouping mixed;
  mixed.groups = {{0, 1, 2}, {3, 4}, {5}};
  std::mt19937_64 rng(77);
  std::map<std::vector<int>, int> freq;
  const int draws = 110000;
  for (int i = 0; i < draws; ++i) ++freq[sample_subset(mixed, rng)];
  REQUIRE(freq.size() == 11);
  for (const auto& [subset, count] : freq) {
    (void)subset;
    CHECK(count > draws / 11 * 0.9);
    CHECK(count < draws / 11 * 1.1);
  }
}

TEST_CASE("combine_experts averages adapted sequences") {
  std::mt19937_64 rng(5);
  const int d = 8;
  std::vector<LowRankAdapter> experts;
  for (int i = 0; i < 3; ++i) {
    experts.push_back(LowRankAdapter::init(d, 2, 1.0, rng));
    // Give each adapter a distinct non-zero delta.
    for (auto& v : experts.back().up.grad()) (void)v;
    std::normal_distribution<double> dist(0.0, 0.3);
    for (std::size_t j = 0; j < experts.back().up.numel(); ++j) {
      experts.back().up.data()[j] = dist(rng);
    }
  }
  Tensor hidden = Tensor::randn({4, d}, rng);

  // Singleton equals that expert's output exactly.
  Tensor single = combine_experts(hidden, experts, {1});
  Tensor direct = expert_forward(hidden, experts[1]);
  for (std::size_t i = 0; i < single.numel(); ++i) {
    CHECK(single.at(i) == direct.at(i));
  }

  // Identical adapters: mean equals any member.
  std::vector<LowRankAdapter> twins{experts[0], experts[0]};
  Tensor both = combine_experts(hidden, twins, {0, 1});
  Tensor one = expert_forward(hidden, experts[0]);
  for (std::size_t i = 0; i < both.numel(); ++i) {
    CHECK(both.at(i) == doctest::Approx(one.at(i)).epsilon(1e-12));
  }

  // Two-expert mean against direct averaging.
  Tensor pair = combine_experts(hidden, experts, {0, 2});
  Tensor e0 = expert_forward(hidden, experts[0]);
  Tensor e2 = expert_forward(hidden, experts[2]);
  for (std::size_t i = 0; i < pair.numel(); ++i) {
    CHECK(pair.at(i) ==
          doctest::Approx((e0.at(i) + e2.at(i)) / 2.0).epsilon(1e-12));
  }

  CHECK_THROWS_AS(combine_experts(hidden, experts, {}), ArgumentError);
}

TEST_SUITE_END();
