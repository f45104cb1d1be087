#include "redkit/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace redkit {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> names = {"<pad>", "<bos>", "<eos>",
                                                 "<unk>"};
  return names;
}

}  // namespace

std::vector<std::string> Vocabulary::tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts,
                             std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& tok : tokenize(text)) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> id_to_token = reserved_tokens();
  for (const auto& [tok, count] : ranked) {
    (void)count;
    if (id_to_token.size() >= max_size) break;
    id_to_token.push_back(tok);
  }
  if (id_to_token.size() < 8) {
    throw ValidationError("vocabulary too small (needs at least 8 entries, "
                          "got " + std::to_string(id_to_token.size()) + ")");
  }
  return from_tokens(std::move(id_to_token));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
  const auto& reserved = reserved_tokens();
  if (id_to_token.size() < reserved.size()) {
    throw ValidationError("vocabulary is missing the reserved block");
  }
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (id_to_token[i] != reserved[i]) {
      throw ValidationError("vocabulary reserved block is corrupted");
    }
  }
  Vocabulary v;
  v.id_to_token_ = std::move(id_to_token);
  for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
    auto [it, inserted] =
        v.token_to_id_.emplace(v.id_to_token_[i], static_cast<int>(i));
    if (!inserted) {
      throw ValidationError("duplicate vocabulary token: " + v.id_to_token_[i]);
    }
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return id_to_token_[id];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  for (auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int i : ids) {
    if (i < kReserved) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

}  // namespace redkit
