#pragma once

// Comment-quality metrics over embedding sets: style similarity between
// original and generated comments, and redundancy (lower = more diverse)
// within the generated set.

#include <vector>

#include "redkit/common.hpp"

namespace redkit {

// Mean cosine similarity over all (original, generated) pairs per post,
// averaged over posts. Posts must come with non-empty sets on both sides.
double style_similarity(
    const std::vector<std::vector<std::vector<double>>>& original_per_post,
    const std::vector<std::vector<std::vector<double>>>& generated_per_post);

// Mean cosine similarity over all ordered pairs of generated comments,
// self-pairs included, averaged over posts. A single comment scores exactly
// 1; mutually orthogonal comments score 1/K.
double diversity(
    const std::vector<std::vector<std::vector<double>>>& generated_per_post);

}  // namespace redkit
