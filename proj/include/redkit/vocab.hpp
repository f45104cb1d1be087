#pragma once

// Whitespace + lowercase tokenizer with a fixed reserved-id block and
// UNK fallback for out-of-vocabulary tokens.

#include <string>
#include <unordered_map>
#include <vector>

#include "redkit/common.hpp"

namespace redkit {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary() = default;

  // Frequency-ranked vocabulary over the given texts (ties broken
  // lexicographically so builds are deterministic). max_size bounds the
  // total size including the reserved block.
  static Vocabulary build(const std::vector<std::string>& texts,
                          std::size_t max_size = 4096);

  // Reconstructs a vocabulary from a serialized id->token list (which must
  // start with the reserved block).
  static Vocabulary from_tokens(std::vector<std::string> id_to_token);

  static std::vector<std::string> tokenize(const std::string& text);

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  // Token ids of the text, UNK-mapped, without BOS/EOS.
  std::vector<int> encode(const std::string& text) const;
  // Space-joined tokens; reserved ids are skipped.
  std::string decode(const std::vector<int>& ids) const;

  const std::vector<std::string>& id_to_token() const { return id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace redkit
