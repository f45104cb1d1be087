#pragma once

// Collaboration routing over the expert bank: pairwise cosine similarities
// between pooled expert embeddings form a graph, edges below the threshold
// are pruned, and the connected components become non-overlapping expert
// groups. Decoding subsets are drawn uniformly over all non-empty subsets
// that stay inside a single group.

#include <cstdint>
#include <random>
#include <vector>

#include "redkit/model.hpp"
#include "redkit/tensor.hpp"

namespace redkit {

struct SimilarityGraph {
  int size = 0;
  std::vector<double> weights;  // size x size, symmetric, diagonal 1
  double threshold = 0.0;

  double at(int l, int m) const { return weights[l * size + m]; }
  // Edge survives pruning (self-loops never count).
  bool connected(int l, int m) const { return l != m && at(l, m) > 0.0; }
};

struct ExpertGrouping {
  // Disjoint non-empty index sets covering 0..L-1, each sorted ascending,
  // ordered by smallest member.
  std::vector<std::vector<int>> groups;

  int expert_count() const;
};

struct RoutingPlan {
  // Each subset is sorted ascending and lies inside exactly one group.
  std::vector<std::vector<int>> subsets;
};

// Pairwise cosine similarities with entries below `threshold` zeroed.
// Embeddings must be non-zero d-vectors.
SimilarityGraph build_similarity_graph(
    const std::vector<std::vector<double>>& pooled_embeddings,
    double threshold);

// Components of the pruned graph, deterministic order.
ExpertGrouping connected_components(const SimilarityGraph& graph);

// Sum over groups of (2^|group| - 1): the number of valid expert subsets.
std::uint64_t count_combinations(const ExpertGrouping& grouping);

// One subset drawn uniformly over all valid subsets.
std::vector<int> sample_subset(const ExpertGrouping& grouping,
                               std::mt19937_64& rng);

// K subsets: distinct while K does not exceed the combination count, then
// with replacement. Reproducible for a given rng state.
RoutingPlan sample_routing_plan(const ExpertGrouping& grouping, int k,
                                std::mt19937_64& rng);
RoutingPlan sample_routing_plan(const ExpertGrouping& grouping, int k,
                                std::uint64_t seed);

// Element-wise mean of the subset's adapted hidden sequences.
Tensor combine_experts(const Tensor& hidden,
                       const std::vector<LowRankAdapter>& experts,
                       const std::vector<int>& subset);

// Pooled embedding (mean over rows) of every routed expert's view of
// `hidden`; the routing inputs. Computed without gradient tracking.
std::vector<std::vector<double>> pooled_expert_embeddings(
    const Tensor& hidden, const std::vector<LowRankAdapter>& experts);

// JSON debug dump of the pruned graph and grouping.
std::string routing_debug_json(const SimilarityGraph& graph,
                               const ExpertGrouping& grouping);

}  // namespace redkit
