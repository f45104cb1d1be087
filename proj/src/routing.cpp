#include "redkit/routing.hpp"

#include <algorithm>
#include <unordered_set>

#include <json.hpp>

#include "redkit/instrument.hpp"

namespace redkit {

int ExpertGrouping::expert_count() const {
  int n = 0;
  for (const auto& g : groups) n += static_cast<int>(g.size());
  return n;
}

SimilarityGraph build_similarity_graph(
    const std::vector<std::vector<double>>& pooled_embeddings,
    double threshold) {
  const int l = static_cast<int>(pooled_embeddings.size());
  if (l < 2) {
    throw ArgumentError("similarity graph needs at least 2 experts");
  }
  SimilarityGraph graph;
  graph.size = l;
  graph.threshold = threshold;
  graph.weights.assign(static_cast<std::size_t>(l) * l, 0.0);
  for (int i = 0; i < l; ++i) {
    graph.weights[i * l + i] = 1.0;
    for (int j = i + 1; j < l; ++j) {
      double sim =
          cosine_similarity_value(pooled_embeddings[i], pooled_embeddings[j]);
      if (sim < threshold) sim = 0.0;  // prune low-similarity edges
      graph.weights[i * l + j] = sim;
      graph.weights[j * l + i] = sim;
    }
  }
  return graph;
}

ExpertGrouping connected_components(const SimilarityGraph& graph) {
  const int l = graph.size;
  std::vector<int> component(l, -1);
  int next = 0;
  for (int start = 0; start < l; ++start) {
    if (component[start] != -1) continue;
    // Iterative DFS from the smallest unassigned index.
    std::vector<int> stack{start};
    component[start] = next;
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      for (int other = 0; other < l; ++other) {
        if (component[other] == -1 && graph.connected(node, other)) {
          component[other] = next;
          stack.push_back(other);
        }
      }
    }
    ++next;
  }
  ExpertGrouping grouping;
  grouping.groups.assign(next, {});
  for (int i = 0; i < l; ++i) grouping.groups[component[i]].push_back(i);
  // Scanning by ascending start index already yields groups ordered by
  // smallest member with sorted contents.
  return grouping;
}

std::uint64_t count_combinations(const ExpertGrouping& grouping) {
  std::uint64_t total = 0;
  for (const auto& g : grouping.groups) {
    if (g.empty()) throw ContractViolation("empty expert group");
    if (g.size() >= 64) throw ArgumentError("group too large to enumerate");
    total += (std::uint64_t{1} << g.size()) - 1;
  }
  return total;
}

namespace {

// Decodes a flat index in [0, count_combinations) into the subset it names:
// groups own contiguous index ranges, and within a group the (index+1)
// bitmask selects members.
std::vector<int> subset_for_index(const ExpertGrouping& grouping,
                                  std::uint64_t index) {
  for (const auto& g : grouping.groups) {
    const std::uint64_t in_group = (std::uint64_t{1} << g.size()) - 1;
    if (index < in_group) {
      const std::uint64_t mask = index + 1;
      std::vector<int> subset;
      for (std::size_t b = 0; b < g.size(); ++b) {
        if (mask & (std::uint64_t{1} << b)) subset.push_back(g[b]);
      }
      return subset;
    }
    index -= in_group;
  }
  throw ContractViolation("subset index out of range");
}

}  // namespace

std::vector<int> sample_subset(const ExpertGrouping& grouping,
                               std::mt19937_64& rng) {
  const std::uint64_t total = count_combinations(grouping);
  std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
  return subset_for_index(grouping, pick(rng));
}

RoutingPlan sample_routing_plan(const ExpertGrouping& grouping, int k,
                                std::mt19937_64& rng) {
  if (k < 1) throw ArgumentError("routing plan needs k >= 1");
  instrument::increment("routing.plan");
  const std::uint64_t total = count_combinations(grouping);
  RoutingPlan plan;
  plan.subsets.reserve(k);

  const std::uint64_t distinct =
      std::min<std::uint64_t>(total, static_cast<std::uint64_t>(k));
  std::vector<std::uint64_t> chosen;
  if (total <= 4096) {
    // Small space: shuffle all indices and take a prefix.
    std::vector<std::uint64_t> all(total);
    for (std::uint64_t i = 0; i < total; ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    chosen.assign(all.begin(), all.begin() + distinct);
  } else {
    // Large space: rejection sampling stays cheap because k << total.
    std::unordered_set<std::uint64_t> seen;
    std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
    while (chosen.size() < distinct) {
      const std::uint64_t idx = pick(rng);
      if (seen.insert(idx).second) chosen.push_back(idx);
    }
  }
  for (std::uint64_t idx : chosen) {
    plan.subsets.push_back(subset_for_index(grouping, idx));
  }
  // Remaining draws (k beyond the distinct pool) fall back to replacement.
  std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
  while (plan.subsets.size() < static_cast<std::size_t>(k)) {
    plan.subsets.push_back(subset_for_index(grouping, pick(rng)));
  }
  return plan;
}

RoutingPlan sample_routing_plan(const ExpertGrouping& grouping, int k,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_routing_plan(grouping, k, rng);
}

Tensor combine_experts(const Tensor& hidden,
                       const std::vector<LowRankAdapter>& experts,
                       const std::vector<int>& subset) {
  if (subset.empty()) {
    throw ArgumentError("combine_experts: empty expert subset");
  }
  Tensor sum;
  for (int idx : subset) {
    if (idx < 0 || idx >= static_cast<int>(experts.size())) {
      throw IndexError("expert index " + std::to_string(idx) +
                       " outside the bank");
    }
    Tensor adapted = expert_forward(hidden, experts[idx]);
    sum = sum.defined() ? add(sum, adapted) : adapted;
  }
  return scale(sum, 1.0 / static_cast<double>(subset.size()));
}

std::vector<std::vector<double>> pooled_expert_embeddings(
    const Tensor& hidden, const std::vector<LowRankAdapter>& experts) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> pooled;
  pooled.reserve(experts.size());
  for (const auto& expert : experts) {
    Tensor p = mean_rows(expert_forward(hidden, expert));
    pooled.emplace_back(p.data(), p.data() + p.numel());
  }
  return pooled;
}

std::string routing_debug_json(const SimilarityGraph& graph,
                               const ExpertGrouping& grouping) {
  nlohmann::json j;
  j["size"] = graph.size;
  j["threshold"] = graph.threshold;
  auto& rows = j["weights"] = nlohmann::json::array();
  for (int i = 0; i < graph.size; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < graph.size; ++k) row.push_back(graph.at(i, k));
    rows.push_back(std::move(row));
  }
  j["groups"] = grouping.groups;
  return j.dump(2);
}

}  // namespace redkit
