#pragma once

// Flat key -> array checkpoint archive. A single file carries a JSON
// manifest line (tensor names, shapes, offsets, arbitrary metadata) followed
// by the raw little-endian doubles. Writing sorts tensors by name, so equal
// parameters always produce identical bytes.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "redkit/tensor.hpp"

namespace redkit::checkpoint {

struct Archive {
  std::map<std::string, Tensor> tensors;
  nlohmann::json meta;
};

void save(const std::string& path,
          const std::vector<std::pair<std::string, Tensor>>& tensors,
          const nlohmann::json& meta);

Archive load(const std::string& path);

}  // namespace redkit::checkpoint
