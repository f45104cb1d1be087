#include "redkit/quality.hpp"

#include "redkit/tensor.hpp"

namespace redkit {

double style_similarity(
    const std::vector<std::vector<std::vector<double>>>& original_per_post,
    const std::vector<std::vector<std::vector<double>>>& generated_per_post) {
  if (original_per_post.size() != generated_per_post.size() ||
      original_per_post.empty()) {
    throw ArgumentError("style_similarity: per-post sets must align");
  }
  double post_sum = 0.0;
  for (std::size_t i = 0; i < original_per_post.size(); ++i) {
    const auto& originals = original_per_post[i];
    const auto& generated = generated_per_post[i];
    if (originals.empty() || generated.empty()) {
      throw ArgumentError("style_similarity: empty comment set for a post");
    }
    double pair_sum = 0.0;
    for (const auto& o : originals) {
      for (const auto& g : generated) {
        pair_sum += cosine_similarity_value(o, g);
      }
    }
    post_sum += pair_sum / double(originals.size() * generated.size());
  }
  return post_sum / double(original_per_post.size());
}

double diversity(
    const std::vector<std::vector<std::vector<double>>>& generated_per_post) {
  if (generated_per_post.empty()) {
    throw ArgumentError("diversity: no posts");
  }
  double post_sum = 0.0;
  for (const auto& generated : generated_per_post) {
    if (generated.empty()) {
      throw ArgumentError("diversity: empty generated set for a post");
    }
    double pair_sum = 0.0;
    for (const auto& a : generated) {
      for (const auto& b : generated) {
        pair_sum += cosine_similarity_value(a, b);
      }
    }
    post_sum += pair_sum / double(generated.size() * generated.size());
  }
  return post_sum / double(generated_per_post.size());
}

}  // namespace redkit
