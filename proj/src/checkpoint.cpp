#include "redkit/checkpoint.hpp"

#include <algorithm>
#include <fstream>

namespace redkit::checkpoint {

namespace {
constexpr const char* kMagic = "REDKIT1";
}

void save(const std::string& path,
          const std::vector<std::pair<std::string, Tensor>>& tensors,
          const nlohmann::json& meta) {
  std::vector<std::pair<std::string, Tensor>> sorted = tensors;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  nlohmann::json manifest;
  manifest["meta"] = meta;
  auto& list = manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : sorted) {
    list.push_back({{"name", name},
                    {"shape", t.shape()},
                    {"offset", offset},
                    {"count", t.numel()}});
    offset += t.numel();
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open checkpoint for writing: " + path);
  out << kMagic << '\n' << manifest.dump() << '\n';
  for (const auto& [name, t] : sorted) {
    (void)name;
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw ValidationError("failed writing checkpoint: " + path);
}

Archive load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  std::string magic, manifest_line;
  std::getline(in, magic);
  if (magic != kMagic) {
    throw ValidationError("not a checkpoint file: " + path);
  }
  std::getline(in, manifest_line);
  nlohmann::json manifest = nlohmann::json::parse(manifest_line, nullptr,
                                                  /*allow_exceptions=*/false);
  if (manifest.is_discarded()) {
    throw ValidationError("corrupt checkpoint manifest: " + path);
  }

  Archive archive;
  archive.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const std::size_t count = entry.at("count").get<std::size_t>();
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw ValidationError("checkpoint truncated: " + path);
    archive.tensors.emplace(name, Tensor(std::move(shape), std::move(values)));
  }
  return archive;
}

}  // namespace redkit::checkpoint
